#include "fmseg/rng.hpp"

#include <cmath>
#include <stdexcept>

#include "fmseg/common.hpp"

namespace fmseg {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// splitmix64 finalizer
std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_key(std::uint64_t base, std::string_view purpose, std::uint64_t id0,
                         std::uint64_t id1) {
  std::uint64_t h = fnv1a64(purpose);
  h = fnv1a64(&base, sizeof(base), h);
  h = fnv1a64(&id0, sizeof(id0), h);
  h = fnv1a64(&id1, sizeof(id1), h);
  return mix64(h);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed) : key_(mix64(seed ^ kGolden)) {}

RngStream::RngStream(std::uint64_t seed, std::string_view purpose, std::uint64_t id0,
                     std::uint64_t id1)
    : key_(derive_key(mix64(seed ^ kGolden), purpose, id0, id1)) {}

RngStream RngStream::substream(std::string_view purpose, std::uint64_t id0,
                               std::uint64_t id1) const {
  RngStream s;
  s.key_ = derive_key(key_, purpose, id0, id1);
  return s;
}

std::uint64_t RngStream::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t RngStream::uniform_int(std::uint64_t n) {
  if (n == 0) throw ConfigError("uniform_int: n must be positive");
  // rejection sampling to avoid modulo bias
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double RngStream::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  // u1 in (0, 1] so log stays finite
  const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 6.283185307179586476925286766559 * u2;
  cached_normal_ = r * std::sin(theta);
  has_cached_normal_ = true;
  return r * std::cos(theta);
}

bool RngStream::bernoulli(double p) { return uniform() < p; }

}  // namespace fmseg
