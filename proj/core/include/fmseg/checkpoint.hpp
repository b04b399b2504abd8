#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fmseg/tensor.hpp"

namespace fmseg {

/// Checkpoint container: a JSON header (model metadata plus tensor index) and
/// named tensors stored as little-endian 32-bit floats.
struct Checkpoint {
  std::string meta_json;  // the "meta" object, serialized
  std::map<std::string, Tensor> tensors;
};

/// File layout: 8-byte magic, u64 little-endian header length, header JSON,
/// then the concatenated float32 payload. Offsets in the header index are
/// bytes from the start of the payload. Saving the result of a load
/// reproduces the file byte for byte.
void save_checkpoint(const std::string& path, const std::string& meta_json,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace fmseg
