#include "fmseg/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace fmseg {

namespace {

constexpr char kMagic[8] = {'F', 'M', 'S', 'G', 'C', 'K', '0', '1'};

void write_u64_le(std::ostream& os, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64_le(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

void write_f32_le(std::ostream& os, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), 4);
}

float read_f32_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::string& meta_json,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
  nlohmann::json header;
  header["dtype"] = "f32";
  header["byte_order"] = "le";
  header["meta"] = nlohmann::json::parse(meta_json.empty() ? "{}" : meta_json);
  nlohmann::json index = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    nlohmann::json e;
    e["name"] = name;
    e["shape"] = t->shape();
    e["offset"] = offset;
    e["count"] = t->size();
    index.push_back(e);
    offset += static_cast<std::uint64_t>(t->size()) * 4;
  }
  header["tensors"] = index;
  const std::string header_str = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw MissingInputError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 8);
  write_u64_le(os, header_str.size());
  os.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& [name, t] : tensors) {
    for (std::size_t i = 0; i < t->size(); ++i)
      write_f32_le(os, static_cast<float>((*t)[i]));
  }
  if (!os) throw NumericError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingInputError("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw MissingInputError("not a checkpoint file: " + path);
  const std::uint64_t header_len = read_u64_le(is);
  std::string header_str(header_len, '\0');
  is.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!is) throw MissingInputError("truncated checkpoint header: " + path);
  nlohmann::json header = nlohmann::json::parse(header_str);

  std::string payload((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const auto* bytes = reinterpret_cast<const unsigned char*>(payload.data());

  Checkpoint ck;
  ck.meta_json = header.at("meta").dump();
  for (const auto& e : header.at("tensors")) {
    const std::string name = e.at("name").get<std::string>();
    const std::vector<std::size_t> shape = e.at("shape").get<std::vector<std::size_t>>();
    const std::uint64_t offset = e.at("offset").get<std::uint64_t>();
    const std::uint64_t count = e.at("count").get<std::uint64_t>();
    if (offset + count * 4 > payload.size())
      throw MissingInputError("checkpoint payload truncated: " + path);
    Tensor t(shape);
    if (t.size() != count) throw ShapeError("checkpoint tensor count mismatch: " + name);
    for (std::size_t i = 0; i < count; ++i)
      t[i] = static_cast<double>(read_f32_le(bytes + offset + i * 4));
    ck.tensors.emplace(name, std::move(t));
  }
  return ck;
}

}  // namespace fmseg
