#pragma once

#include <vector>

#include "fmseg/forest.hpp"
#include "fmseg/tensor.hpp"

namespace fmseg {
/// Brute-force reference implementations, deliberately written with the most
/// literal loops available. They exist to cross-check the production paths
/// (feature statistics, split search, F1 counting) and must stay independent
/// of them.
namespace naive {

std::vector<double> percentiles(const std::vector<double>& values);
std::vector<double> cumulative_hist(const std::vector<double>& values);
std::vector<double> moments(const std::vector<double>& values);

/// Exhaustive search over every (feature, midpoint threshold) pair, same
/// objective and tie-breaking as the production split search.
SplitChoice best_split(const DataMatrix& X, const std::vector<double>& y,
                       const std::vector<std::uint32_t>& rows);

double f1_score(const std::vector<int>& mask, const std::vector<int>& pred);

}  // namespace naive
}  // namespace fmseg
