#include "fmseg/train.hpp"

#include <algorithm>

namespace fmseg {

Tensor onehot_labels(const Tensor& mask) {
  const std::size_t H = mask.extent(0), W = mask.extent(1);
  Tensor labels({2, H, W});
  const std::size_t P = H * W;
  for (std::size_t i = 0; i < P; ++i) {
    const bool fg = mask[i] != 0.0;
    labels[i] = fg ? 0.0 : 1.0;
    labels[P + i] = fg ? 1.0 : 0.0;
  }
  return labels;
}

TrainStats train_seg_model(SegModel& model, const std::vector<MarkerPatch>& patches,
                           const TrainConfig& cfg) {
  std::vector<const MarkerPatch*> train_set;
  for (const MarkerPatch& p : patches) {
    if (p.split == Split::train) train_set.push_back(&p);
  }
  if (train_set.empty()) throw ConfigError("train_seg_model: no training patches");

  model.set_requires_grad(true);
  std::vector<Var> params = model.params();
  AdamState adam;
  adam.lr = cfg.lr;

  const bool aleatoric = model.has_variance_head();
  std::vector<double> class_weights = {1.0, cfg.class_weight_fg};
  const bool weighted = cfg.class_weight_fg != 1.0;

  TrainStats stats;
  RngStream shuffle_rng(cfg.seed, "shuffle");
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    // Fisher-Yates with the epoch's stream
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

    double epoch_loss = 0.0;
    for (std::size_t step = 0; step < order.size(); ++step) {
      const MarkerPatch& patch = *train_set[order[step]];
      RngStream step_rng(cfg.seed, "train_step", static_cast<std::uint64_t>(epoch),
                         static_cast<std::uint64_t>(patch.patch_id));

      MarkerSet avail = patch.availability;
      Tensor input = patch.channels;
      if (cfg.marker_sampling) {
        avail = sample_marker_subset(patch.availability, step_rng);
        input = mask_channels(input, avail);
      }

      RngStream forward_rng = step_rng.substream("forward");
      SegOutput out = seg_forward(model, input, avail, RunMode::train, &forward_rng);
      const Tensor labels = onehot_labels(patch.mask);

      Var loss;
      if (aleatoric) {
        Var flat_var = flatten(out.log_variance);
        loss = aleatoric_loss(out.logits, flat_var, labels,
                              static_cast<std::size_t>(cfg.loss_T),
                              step_rng.substream("loss_noise"));
      } else {
        loss = cross_entropy(softmax_axis0(out.logits), labels,
                             weighted ? &class_weights : nullptr);
      }
      zero_grad(params);
      backward(loss);
      adam_step(adam, params);
      epoch_loss += loss->value[0];
    }
    stats.epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  return stats;
}

}  // namespace fmseg
