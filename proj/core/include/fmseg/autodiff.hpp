#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "fmseg/rng.hpp"
#include "fmseg/tensor.hpp"

namespace fmseg {

/// One node of the reverse-mode tape. Values are computed eagerly; each op
/// that participates in differentiation attaches a closure that scatters the
/// node's gradient into its parents.
struct Node {
  Tensor value;
  Tensor grad;  // allocated by backward()
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // may be empty (leaf / no-grad path)
  bool grad_allocated = false;

  Tensor& ensure_grad() {
    if (!grad_allocated) {
      grad = Tensor::zeros_like(value);
      grad_allocated = true;
    }
    return grad;
  }
};

using Var = std::shared_ptr<Node>;

Var make_var(Tensor value, bool requires_grad = false);
Var constant(Tensor value);

/// RAII guard disabling tape recording (inference passes). Thread-local, so
/// concurrent inference threads do not interfere with a training thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

// ---- ops ------------------------------------------------------------------
// Convolution is 2D with odd square kernels and zero padding (kernel/2), so
// spatial extent is preserved. x: Ci×H×W, w: Co×Ci×k×k, b: Co.
Var conv2d(const Var& x, const Var& w, const Var& b);

// x: n, w: m×n, b: m -> m
Var dense(const Var& x, const Var& w, const Var& b);

Var relu(const Var& x);
Var sigmoid(const Var& x);

/// Softmax over axis 0 (the class/channel axis); remaining axes are treated
/// as independent positions. Accepts rank 1 (plain vector) upward.
Var softmax_axis0(const Var& x);

/// Max pooling with square window k and stride k. Partial windows at the
/// boundary are allowed (ceil-mode extents).
Var maxpool2d(const Var& x, std::size_t k);

Var upsample_nearest(const Var& x, std::size_t factor);

Var concat_channels(const Var& a, const Var& b);

/// Inverted dropout: kept units are scaled by 1/(1-p) so expectation matches
/// the input. active=false or p=0 returns x unchanged (exact identity).
Var dropout(const Var& x, double p, bool active, RngStream& rng);

/// Per-channel scaling: x is C×..., g is a C-vector broadcast over positions.
Var scale_channels(const Var& x, const Var& g);

Var flatten(const Var& x);

Var add(const Var& a, const Var& b);

/// Runs reverse-mode accumulation from a scalar head. Every reachable node
/// with requires_grad receives its gradient.
void backward(const Var& head);

void zero_grad(const std::vector<Var>& params);

}  // namespace fmseg
