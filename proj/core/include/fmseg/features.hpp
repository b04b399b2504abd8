#pragma once

#include <string>
#include <vector>

#include "fmseg/marker.hpp"
#include "fmseg/tensor.hpp"
#include "fmseg/uncertainty.hpp"

namespace fmseg {

enum class FeatureMode { e_only, a_only, both };

std::string feature_mode_name(FeatureMode m);
FeatureMode feature_mode_from_name(const std::string& s);

/// 1st..99th percentiles by linear interpolation at fractional rank
/// (p/100)*(n-1) over the sorted values.
std::vector<double> percentiles(const Tensor& map);

/// 13 cumulative-histogram features: fraction of pixels <= 0.05*i, i = 1..13.
std::vector<double> cumulative_hist(const Tensor& map);

/// (mean, population variance, standardized skewness, standardized
/// non-excess kurtosis); the last two are 0 when variance < 1e-24.
std::vector<double> moments(const Tensor& map);

/// Per selected map: 99 percentiles + 13 histogram features + 4 moments
/// (116 values), concatenated [u_e block][u_a block], then the combination
/// one-hot over the 2^K - 1 nonempty subsets in canonical order.
std::vector<double> assemble_features(const UncertaintyBundle& bundle, FeatureMode mode, int K);

/// Column names matching assemble_features order
/// (u_e_p01.., u_e_ch01.., u_e_m1.., u_a_*, combo_00..).
std::vector<std::string> feature_names(FeatureMode mode, int K);

std::size_t feature_length(FeatureMode mode, int K);

}  // namespace fmseg
