#pragma once

#include <map>
#include <string>
#include <vector>

#include "fmseg/quality.hpp"

namespace fmseg {

/// Per-combination predicted vs true F1: mean points with SD bars, one pair
/// of series over the 31 combinations, R² annotated.
std::string fig_quality_scatter(const QualityEval& eval, const std::string& regressor_name);

/// Mean RMSE per regressor with across-fold SD whiskers.
std::string fig_rmse_bars(const std::vector<std::pair<std::string, std::vector<double>>>& fold_rmses);

/// Paired ΔF1 distribution per comparison: quartile boxes with whiskers and
/// the fraction of positive pairs.
std::string fig_delta_f1(const std::vector<std::pair<std::string, std::vector<double>>>& deltas);

/// Grayscale panels for one patch: mean probability, the two uncertainty
/// maps, and the error against the mask.
std::string fig_uncertainty_maps(const UncertaintyBundle& bundle, const Tensor& mask);

}  // namespace fmseg
