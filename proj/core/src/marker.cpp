#include "fmseg/marker.hpp"

#include <bit>

namespace fmseg {

MarkerSet MarkerSet::parse(const std::string& name) {
  MarkerSet s;
  for (char c : name) {
    if (c == 'm' || c == '_') continue;
    if (c < '1' || c > '9') throw ConfigError("bad marker name: " + name);
    s.add(c - '0');
  }
  if (s.empty()) throw ConfigError("empty marker set: " + name);
  return s;
}

int MarkerSet::count() const { return std::popcount(bits); }

std::vector<double> MarkerSet::onehot(int K) const {
  std::vector<double> v(static_cast<std::size_t>(K), 0.0);
  for (int k = 1; k <= K; ++k) {
    if (contains(k)) v[k - 1] = 1.0;
  }
  return v;
}

std::vector<int> MarkerSet::members() const {
  std::vector<int> out;
  for (int k = 1; k <= 32; ++k) {
    if (contains(k)) out.push_back(k);
  }
  return out;
}

std::string MarkerSet::name() const {
  std::string s = "m";
  for (int k : members()) s += static_cast<char>('0' + k);
  return s;
}

std::vector<MarkerSet> enumerate_combinations(int K) {
  if (K < 1) throw ConfigError("enumerate_combinations: K must be >= 1");
  std::vector<MarkerSet> out;
  const std::uint32_t n = (1u << K) - 1u;
  out.reserve(n);
  for (std::uint32_t b = 1; b <= n; ++b) out.push_back(MarkerSet::from_bits(b));
  return out;
}

std::size_t combination_index(MarkerSet set, int K) {
  if (set.empty() || set.canonical() > ((1u << K) - 1u))
    throw ConfigError("combination_index: set out of range");
  return set.canonical() - 1;
}

}  // namespace fmseg
