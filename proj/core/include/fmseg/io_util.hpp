#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fmseg/common.hpp"

namespace fmseg {

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

/// Little-endian float32 array files.
void write_f32_file(const std::string& path, const std::vector<float>& values);
std::vector<float> read_f32_file(const std::string& path);

/// FNV-1a 64 of the file bytes, as 16 hex digits.
std::string hash_file_hex(const std::string& path);
std::string hash_bytes_hex(const void* data, std::size_t len);

/// Writes <dir>/manifest.json describing a pipeline stage: the command, its
/// configuration echo, seeds, input file hashes and output file hashes.
struct RunManifest {
  std::string command;
  std::string config_json = "{}";
  std::vector<std::pair<std::string, std::string>> inputs;   // path -> hash
  std::vector<std::pair<std::string, std::string>> outputs;  // path -> hash
};
void write_run_manifest(const std::string& dir, const RunManifest& manifest);

}  // namespace fmseg
