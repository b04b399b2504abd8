#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fmseg/autodiff.hpp"
#include "fmseg/rng.hpp"
#include "fmseg/tensor.hpp"

namespace fmseg {

enum class LayerKind {
  conv2d,
  maxpool2d,
  dense,
  relu,
  sigmoid,
  softmax,
  dropout,
  upsample_nearest,
  concat,
};

/// Hyperparameters for one layer. Parameter tensors live with the owning
/// model; this describes the operation only.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t kernel = 3;   // conv2d
  std::size_t nodes = 0;    // conv2d output channels / dense output size
  std::size_t pool = 2;     // maxpool2d window (and stride)
  std::size_t factor = 2;   // upsample factor
  double p = 0.0;           // dropout probability, in [0, 1)
};

enum class RunMode { train, mc_infer, det_infer };

/// Applies a single (possibly parameterized) layer. w/b are ignored for
/// parameter-free kinds; dropout samples from rng when the mode keeps it
/// stochastic (train and mc_infer) and is the identity under det_infer.
Var apply_layer(const LayerSpec& spec, const Var& x, RunMode mode, RngStream* rng,
                const Var& w = nullptr, const Var& b = nullptr);

/// Kaiming-uniform fill: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
void kaiming_uniform(Tensor& t, std::size_t fan_in, RngStream& rng);

// ---- losses ----------------------------------------------------------------

/// Mean over positions of -log(probability of the true class); probabilities
/// are clamped at 1e-12 before the log. prob and onehot_labels share shape
/// C x ... with the class axis first. Optional per-class weights scale each
/// position's term.
Var cross_entropy(const Var& prob, const Tensor& onehot_labels,
                  const std::vector<double>* class_weights = nullptr);

/// Noise-injected cross-entropy for the predictive-variance head. The
/// per-position scale is exp(log_variance/2) with log_variance clamped to
/// [-20, 20]; at the lower clamp the noise term is dropped entirely. The loss
/// is the cross-entropy of the mean of T noisy softmaxes, evaluated in
/// log-space with log-sum-exp over samples. The stream is taken by value so a
/// caller can re-evaluate with identical noise.
Var aleatoric_loss(const Var& logits, const Var& log_variance, const Tensor& onehot_labels,
                   std::size_t T, RngStream rng);

/// (pred - target)^2 summed over the (scalar) prediction.
Var squared_error(const Var& pred, double target);

// ---- optimizer -------------------------------------------------------------

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

/// One Adam update with bias correction over params' accumulated gradients.
/// Parameters without an allocated gradient are treated as zero-gradient.
void adam_step(AdamState& state, const std::vector<Var>& params);

}  // namespace fmseg
