#pragma once

#include <string>

#include "fmseg/segnet.hpp"

namespace fmseg {

/// Per-patch prediction summary: mean foreground probability plus the two
/// uncertainty maps. u_e is the population standard deviation of the
/// foreground probability over stochastic passes (zero after deterministic
/// inference); u_a is exp(log_variance / 2) from the variance head.
struct UncertaintyBundle {
  int patch_id = 0;
  MarkerSet availability;
  int T_used = 0;
  Tensor mean_prob;  // H x W
  Tensor u_e;        // H x W
  Tensor u_a;        // H x W
  bool has_u_a = false;
};

/// T stochastic passes of a dropout variant; the variance head, if present,
/// is ignored.
UncertaintyBundle mc_epistemic(const SegModel& model, const Tensor& patch,
                               MarkerSet availability, int T, const RngStream& rng);

/// Single deterministic pass of a variance-head variant (u_e is zero).
UncertaintyBundle aleatoric_infer(const SegModel& model, const Tensor& patch,
                                  MarkerSet availability);

/// T stochastic passes of the combined variant: u_e as in mc_epistemic, u_a
/// is the mean over passes of the per-pass variance-head output.
UncertaintyBundle combined_predict(const SegModel& model, const Tensor& patch,
                                   MarkerSet availability, int T, const RngStream& rng);

/// Single deterministic pass of any variant; u_e is zero, u_a filled when the
/// variant has a variance head.
UncertaintyBundle deterministic_predict(const SegModel& model, const Tensor& patch,
                                        MarkerSet availability);

// one file per patch: JSON header + float32 planes
void save_bundle(const std::string& path, const UncertaintyBundle& bundle);
UncertaintyBundle load_bundle(const std::string& path);

}  // namespace fmseg
