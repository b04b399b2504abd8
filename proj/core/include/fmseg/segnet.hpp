#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fmseg/marker.hpp"
#include "fmseg/nn.hpp"

namespace fmseg {

enum class Variant { plain, epistemic, aleatoric, combined };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& s);

/// UNet geometry. Encoder stages double the base width per level; a stage is
/// two 3x3 conv+ReLU blocks. Downsampling is 2x2 max pooling, upsampling is
/// nearest-neighbor followed by a channel-halving 3x3 conv, skips are
/// concatenated. An availability-conditioned gate sits after every encoder
/// and decoder stage. The final 1x1 conv emits 2 logits; variance-head
/// variants add a second 1x1 conv emitting per-pixel log-variance.
struct ArchConfig {
  int depth = 3;
  int base_width = 16;
  int patch_extent = 64;
  int K = 5;
  int me_reduction = 2;  // gate hidden width = stage channels / me_reduction

  void validate() const;
};

/// One availability-conditioned channel gate (two dense layers on the
/// K-length availability vector, sigmoid output per channel).
struct ExciteGate {
  Var w1, b1, w2, b2;
};

struct ConvBlock {
  Var w, b;
};

struct SegModel {
  ArchConfig cfg;
  Variant variant = Variant::plain;
  double dropout_p = 0.0;
  bool dropout_last_only = false;

  std::vector<ConvBlock> enc1, enc2;        // per encoder stage, two convs
  ConvBlock bottleneck1, bottleneck2;
  std::vector<ConvBlock> up;                // channel-halving conv per decoder stage
  std::vector<ConvBlock> dec1, dec2;        // per decoder stage, two convs
  std::vector<ExciteGate> enc_gates, dec_gates;
  ConvBlock head;                           // 1x1 -> 2 logits
  ConvBlock var_head;                       // 1x1 -> 1 log-variance (aleatoric/combined)

  bool has_dropout() const {
    return variant == Variant::epistemic || variant == Variant::combined;
  }
  bool has_variance_head() const {
    return variant == Variant::aleatoric || variant == Variant::combined;
  }

  /// All parameters in a fixed order with stable names.
  std::vector<std::pair<std::string, Var>> named_params() const;
  std::vector<Var> params() const;
  std::size_t param_count() const;

  void set_requires_grad(bool on) const;
};

SegModel build_model(const ArchConfig& cfg, Variant variant, double dropout_p,
                     std::uint64_t seed, bool dropout_last_only = false);

struct SegOutput {
  Var logits;        // 2 x H x W
  Var log_variance;  // 1 x H x W when the variant has a variance head
};

/// Forward pass. Channels absent from `availability` must be zero-filled by
/// the caller; the availability vector conditions every gate. In mc_infer
/// mode dropout stays stochastic; det_infer makes it the identity.
SegOutput seg_forward(const SegModel& model, const Tensor& patch, MarkerSet availability,
                      RunMode mode, RngStream* rng);

/// Uniform draw over the nonempty subsets of `available`.
MarkerSet sample_marker_subset(MarkerSet available, RngStream& rng);

/// features * sigmoid(fc2(relu(fc1(availability onehot)))), broadcast per
/// channel.
Var marker_excite(const Var& features, MarkerSet availability, int K, const ExciteGate& gate);

/// Zeroes the channel planes not present in `keep` (bit-exact 0.0).
Tensor mask_channels(const Tensor& patch, MarkerSet keep);

// checkpoint wiring
void save_seg_model(const std::string& path, const SegModel& model);
SegModel load_seg_model(const std::string& path);

}  // namespace fmseg
