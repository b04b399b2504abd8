#pragma once

#include <string>
#include <vector>

#include "fmseg/features.hpp"
#include "fmseg/forest.hpp"
#include "fmseg/metrics.hpp"
#include "fmseg/synth.hpp"
#include "fmseg/train.hpp"
#include "fmseg/uncertainty.hpp"

namespace fmseg {

/// One (patch, imposed combination) example for quality regression: the full
/// feature vector (both maps + combination one-hot), optionally the raw map
/// stack for the CNN regressor, and the ground-truth F1 target.
struct QualityExample {
  std::vector<double> features;  // FeatureMode::both layout
  Tensor map_stack;              // 2 x E x E {u_e, u_a}; empty unless kept
  double q = 0.0;
  int patch_id = 0;
  MarkerSet availability;
  int fold = 0;
};

struct QualityBuildOptions {
  int T = 50;
  bool keep_maps = false;
  int map_extent = 64;  // CNN input extent
};

/// For every patch of `split` and every nonempty marker combination: mask the
/// channels, run the combined prediction, score the mean probability against
/// the ground-truth mask, and assemble features.
std::vector<QualityExample> build_quality_dataset(const SegModel& model,
                                                  const std::vector<MarkerPatch>& patches,
                                                  Split split, const QualityBuildOptions& opts,
                                                  const RngStream& rng);

/// Slices the stored "both" feature layout down to the requested mode.
std::vector<double> select_mode_features(const std::vector<double>& both_features,
                                         FeatureMode mode, int K);

Forest train_quality_rf(const std::vector<QualityExample>& examples, FeatureMode mode, int K,
                        const ForestParams& params);

double predict_quality_rf(const Forest& forest, const QualityExample& example, FeatureMode mode,
                          int K);

// ---- CNN regressor ---------------------------------------------------------
// conv(4) -> pool3 -> conv(8) -> pool3 -> conv(16) -> pool3 -> conv(32)
// -> pool3 -> conv(64) -> fc(128) -> fc(1), 3x3 conv kernels, 3x3 pools,
// ReLU after every convolution and the hidden dense layer.
struct QNet {
  int input_extent = 64;
  std::vector<std::pair<std::string, Var>> named;

  std::vector<Var> params() const;
  std::size_t param_count() const;
};

QNet build_qnet(std::uint64_t seed, int input_extent = 64);

struct QNetTrainConfig {
  int epochs = 100;
  int batch = 2;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct QNetTrainStats {
  std::vector<double> epoch_mse;
};

QNetTrainStats train_quality_cnn(QNet& net, const std::vector<QualityExample>& examples,
                                 const QNetTrainConfig& cfg);

double predict_quality_cnn(const QNet& net, const Tensor& map_stack);

/// Nearest-neighbor resize up / center crop down of the {u_e, u_a} stack to
/// extent x extent.
Tensor stack_maps_for_cnn(const UncertaintyBundle& bundle, int extent);

void save_qnet(const std::string& path, const QNet& net);
QNet load_qnet(const std::string& path);

// ---- evaluation ------------------------------------------------------------

struct PredictionRow {
  int patch_id = 0;
  MarkerSet combo;
  int fold = 0;
  double q_true = 0.0;
  double q_pred = 0.0;
  std::string regressor;
};

struct ComboAggregate {
  MarkerSet combo;
  double mean_pred = 0.0;
  double sd_pred = 0.0;
  double mean_true = 0.0;
  double sd_true = 0.0;
  int n_folds = 0;
};

struct QualityEval {
  double rmse_all = 0.0;
  double r2_of_means = 0.0;
  std::vector<ComboAggregate> per_combination;
};

/// RMSE over every row; per-combination means are fold means averaged over
/// folds (bars are the across-fold SD); r2_of_means compares the
/// per-combination mean prediction against the mean ground truth.
QualityEval evaluate_quality(const std::vector<PredictionRow>& rows);

std::string predictions_to_csv(const std::vector<PredictionRow>& rows);
std::vector<PredictionRow> predictions_from_csv(const std::string& csv);

/// Feature table CSV: named feature columns then target_f1, patch_id, fold.
std::string quality_examples_to_csv(const std::vector<QualityExample>& examples, int K);
std::vector<QualityExample> quality_examples_from_csv(const std::string& csv, int K);

}  // namespace fmseg
