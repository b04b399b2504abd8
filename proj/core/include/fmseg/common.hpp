#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fmseg {

// invalid configuration or argument (CLI exit code 1)
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// a required input artifact is absent or unreadable (CLI exit code 2)
struct MissingInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// NaN/Inf or other numerical failure (CLI exit code 3)
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// tensor shape mismatch between operands
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Global worker cap for parallel sections. 0 means "hardware concurrency".
void set_thread_count(unsigned n);
unsigned thread_count();

/// Runs fn(i) for i in [0, n). Work is split into contiguous ranges, one per
/// worker. Callers must write to disjoint locations per index; results are
/// then independent of the schedule.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& range_fn);
void parallel_for_each(std::size_t n, const std::function<void(std::size_t)>& fn);

/// FNV-1a 64-bit over raw bytes. Used for manifests and stream keying.
std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL);

/// Shortest round-trip decimal formatting for doubles (stable across runs,
/// used everywhere CSV/SVG bytes must be reproducible).
std::string format_double(double v);

}  // namespace fmseg
