#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "fmseg/common.hpp"
#include "fmseg/rng.hpp"

using namespace fmseg;

TEST_CASE("same seed reproduces the sequence") {
  RngStream a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("substreams are independent of parent state") {
  RngStream a(42);
  RngStream sub_before = a.substream("work", 3);
  a.next_u64();
  a.next_u64();
  RngStream sub_after = a.substream("work", 3);
  for (int i = 0; i < 20; ++i) CHECK(sub_before.next_u64() == sub_after.next_u64());
}

TEST_CASE("different purposes and ids give different streams") {
  RngStream a(42);
  std::set<std::uint64_t> firsts;
  firsts.insert(a.substream("x", 0).next_u64());
  firsts.insert(a.substream("x", 1).next_u64());
  firsts.insert(a.substream("y", 0).next_u64());
  firsts.insert(a.substream("x", 0, 1).next_u64());
  CHECK(firsts.size() == 4);
}

TEST_CASE("uniform stays in [0,1) and covers the range") {
  RngStream rng(7);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("uniform_int is unbiased over a small range") {
  RngStream rng(11);
  int counts[5] = {0, 0, 0, 0, 0};
  const int draws = 50000;
  for (int i = 0; i < draws; ++i) counts[rng.uniform_int(5)]++;
  for (int c : counts) CHECK(std::abs(c - draws / 5) < draws / 5 * 0.1);
}

TEST_CASE("exceptions from parallel workers reach the caller") {
  CHECK_THROWS_AS(fmseg::parallel_for_each(64,
                                           [](std::size_t i) {
                                             if (i == 47) throw fmseg::NumericError("boom");
                                           }),
                  fmseg::NumericError);
  // the pool stays usable afterwards
  std::vector<int> hits(64, 0);
  fmseg::parallel_for_each(64, [&hits](std::size_t i) { hits[i] = 1; });
  for (int h : hits) CHECK(h == 1);
}

TEST_CASE("normal draws have the right moments") {
  RngStream rng(13);
  const int n = 200000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}
