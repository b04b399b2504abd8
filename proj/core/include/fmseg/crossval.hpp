#pragma once

#include <cstdint>
#include <optional>

#include "fmseg/quality.hpp"

namespace fmseg {

/// Full experiment: per fold, rotate the validation sample among the
/// non-test samples, train the segmentation model under the scenario, fit
/// the quality regressors on validation-derived examples, and evaluate them
/// on the shared test samples across every marker combination.
struct CrossvalConfig {
  DatasetSpec data_spec;
  Scenario scenario;  // defaulted to the five-sample ablation pattern
  ArchConfig arch;
  Variant variant = Variant::combined;
  double dropout_p = 0.2;
  bool dropout_last_only = false;
  TrainConfig train;
  int T_quality = 50;
  ForestParams rf;
  bool train_cnn = false;
  QNetTrainConfig qnet;
  int folds = 4;
  std::uint64_t master_seed = 0;

  CrossvalConfig() { scenario = scenario_case6(); }
};

struct FoldSummary {
  int fold = 0;
  int val_sample = 0;
  double rmse_e = 0.0;
  double rmse_a = 0.0;
  double rmse_both = 0.0;
  double rmse_cnn = 0.0;  // NaN when the CNN regressor is disabled
  double final_train_loss = 0.0;
};

struct CrossvalResult {
  std::vector<EvalRecord> records;  // segmentation F1 per (test patch, combo, fold)
  std::vector<PredictionRow> predictions;
  std::vector<FoldSummary> folds;
  QualityEval eval_e, eval_a, eval_both;
  std::optional<QualityEval> eval_cnn;
};

CrossvalResult run_crossval(const CrossvalConfig& cfg);

/// Validation-sample rotation: a seeded shuffle of the non-test samples,
/// fold f validating on entry f.
std::vector<int> fold_val_samples(const DatasetSpec& spec, int folds, std::uint64_t master_seed);

std::string crossval_summary_json(const CrossvalConfig& cfg, const CrossvalResult& result);

CrossvalConfig crossval_config_from_json(const std::string& json_text);
std::string crossval_config_to_json(const CrossvalConfig& cfg);

}  // namespace fmseg
