#pragma once

#include <cstdint>
#include <vector>

#include "fmseg/segnet.hpp"
#include "fmseg/synth.hpp"

namespace fmseg {

struct TrainConfig {
  int epochs = 4;
  double lr = 1e-3;
  int loss_T = 50;               // noise samples for the variance-head loss
  double class_weight_fg = 1.0;  // optional imbalance weight; 1 = unweighted
  bool marker_sampling = true;   // per-step random ablation of available markers
  std::uint64_t seed = 0;
};

struct TrainStats {
  std::vector<double> epoch_loss;
};

/// Trains on the train-split patches: per step one patch, marker-sampled
/// availability, cross-entropy (plain/epistemic) or the noise-injected loss
/// (aleatoric/combined), one Adam update.
TrainStats train_seg_model(SegModel& model, const std::vector<MarkerPatch>& patches,
                           const TrainConfig& cfg);

/// 2 x H x W one-hot labels from a binary mask.
Tensor onehot_labels(const Tensor& mask);

}  // namespace fmseg
