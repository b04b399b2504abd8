#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "fmseg/common.hpp"

namespace fmseg {

/// Set of available markers out of K, as a bitmask with marker k (1-based)
/// on bit k-1. The canonical integer encoding is the bitmask value itself.
struct MarkerSet {
  std::uint32_t bits = 0;

  static MarkerSet of(std::initializer_list<int> markers) {
    MarkerSet s;
    for (int m : markers) s.add(m);
    return s;
  }
  static MarkerSet from_bits(std::uint32_t b) { return MarkerSet{b}; }
  static MarkerSet full(int K) { return MarkerSet{(1u << K) - 1u}; }

  /// Parses "m135" / "135" into {1,3,5}.
  static MarkerSet parse(const std::string& name);

  void add(int marker) { bits |= 1u << (marker - 1); }
  bool contains(int marker) const { return (bits >> (marker - 1)) & 1u; }
  int count() const;
  bool empty() const { return bits == 0; }
  std::uint32_t canonical() const { return bits; }

  /// K-length 0/1 availability vector.
  std::vector<double> onehot(int K) const;

  /// Marker indices in ascending order.
  std::vector<int> members() const;

  /// "m135" style name.
  std::string name() const;

  bool operator==(const MarkerSet&) const = default;
};

/// All 2^K - 1 nonempty marker subsets, ascending by canonical encoding.
std::vector<MarkerSet> enumerate_combinations(int K);

/// Position of `set` in enumerate_combinations(K) order.
std::size_t combination_index(MarkerSet set, int K);

}  // namespace fmseg
