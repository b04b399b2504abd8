#include "fmseg/io_util.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fmseg {

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw MissingInputError("cannot open for writing: " + path);
  os.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!os) throw MissingInputError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingInputError("cannot open: " + path);
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

void write_f32_file(const std::string& path, const std::vector<float>& values) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw MissingInputError("cannot open for writing: " + path);
  for (float f : values) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    unsigned char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(buf), 4);
  }
  if (!os) throw MissingInputError("write failed: " + path);
}

std::vector<float> read_f32_file(const std::string& path) {
  const std::string bytes = read_text_file(path);
  if (bytes.size() % 4 != 0) throw MissingInputError("bad float32 file length: " + path);
  std::vector<float> out(bytes.size() / 4);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(p[i * 4 + b]) << (8 * b);
    std::memcpy(&out[i], &bits, 4);
  }
  return out;
}

std::string hash_bytes_hex(const void* data, std::size_t len) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(data, len)));
  return buf;
}

std::string hash_file_hex(const std::string& path) {
  const std::string bytes = read_text_file(path);
  return hash_bytes_hex(bytes.data(), bytes.size());
}

void write_run_manifest(const std::string& dir, const RunManifest& manifest) {
  nlohmann::json j;
  j["command"] = manifest.command;
  j["config"] = nlohmann::json::parse(manifest.config_json.empty() ? "{}" : manifest.config_json);
  nlohmann::json in = nlohmann::json::object();
  for (const auto& [p, h] : manifest.inputs) in[p] = h;
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [p, h] : manifest.outputs) out[p] = h;
  j["inputs"] = in;
  j["outputs"] = out;
  j["tool"] = "fmseg 0.1.0";
  j["format_version"] = 1;
  std::filesystem::create_directories(dir);
  write_text_file((std::filesystem::path(dir) / "run_manifest.json").string(),
                  j.dump(2) + "\n");
}

}  // namespace fmseg
