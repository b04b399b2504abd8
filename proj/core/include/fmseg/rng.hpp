#pragma once

#include <cstdint>
#include <string_view>

namespace fmseg {

/// Counter-based random stream. Every draw is a pure function of
/// (key, counter), and substreams derive a fresh key from
/// (parent key, purpose, id0, id1), so independent units of work can each own
/// a stream keyed by their identity and results do not depend on scheduling.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);
  RngStream(std::uint64_t seed, std::string_view purpose, std::uint64_t id0 = 0,
            std::uint64_t id1 = 0);

  /// Derives an independent stream; does not advance this one.
  RngStream substream(std::string_view purpose, std::uint64_t id0 = 0,
                      std::uint64_t id1 = 0) const;

  std::uint64_t next_u64();

  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);

  /// Uniform integer in [0, n); n must be positive.
  std::uint64_t uniform_int(std::uint64_t n);

  /// Standard normal via Box-Muller (second draw cached).
  double normal();

  bool bernoulli(double p);

 private:
  RngStream() = default;
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace fmseg
