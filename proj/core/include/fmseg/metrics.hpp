#pragma once

#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "fmseg/marker.hpp"
#include "fmseg/tensor.hpp"

namespace fmseg {

/// F1 of the argmax prediction against the binary mask:
/// 2*|mask AND pred| / (|mask| + |pred|); 1 when both are empty, 0 when
/// exactly one is empty.
double f1_score(const Tensor& mask, const Tensor& prob);

/// F1 from a precomputed foreground-probability plane (threshold 0.5,
/// equivalent to the 2-class argmax).
double f1_from_prob_plane(const Tensor& mask, const Tensor& fg_prob);

struct EvalRecord {
  int patch_id = 0;
  MarkerSet availability;
  int fold = 0;
  std::string model;
  double f1 = 0.0;
};

using PairKey = std::tuple<int, std::uint32_t, int>;  // patch, combination, fold

struct RelativeF1 {
  std::vector<std::pair<PairKey, double>> deltas;  // model - reference per key
  double median = 0.0;
  double mean = 0.0;
  double fraction_positive = 0.0;
};

/// Paired per-(patch, combination, fold) differences; both sets must cover
/// identical keys.
RelativeF1 relative_f1(const std::vector<EvalRecord>& model,
                       const std::vector<EvalRecord>& reference);

double rmse(const std::vector<double>& pred, const std::vector<double>& truth);

/// 1 - SS_res/SS_tot; 0 when SS_tot = 0 with residual error, 1 when both
/// vanish.
double r2(const std::vector<double>& pred, const std::vector<double>& truth);

std::string eval_records_to_csv(const std::vector<EvalRecord>& records);
std::vector<EvalRecord> eval_records_from_csv(const std::string& csv);

}  // namespace fmseg
