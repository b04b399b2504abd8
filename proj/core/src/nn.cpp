#include "fmseg/nn.hpp"

#include <algorithm>
#include <cmath>

namespace fmseg {

namespace {
constexpr double kLogClamp = 1e-12;
constexpr double kLogVarLo = -20.0;
constexpr double kLogVarHi = 20.0;
}  // namespace

Var apply_layer(const LayerSpec& spec, const Var& x, RunMode mode, RngStream* rng, const Var& w,
                const Var& b) {
  switch (spec.kind) {
    case LayerKind::conv2d:
      return conv2d(x, w, b);
    case LayerKind::dense:
      return dense(x, w, b);
    case LayerKind::maxpool2d:
      return maxpool2d(x, spec.pool);
    case LayerKind::relu:
      return relu(x);
    case LayerKind::sigmoid:
      return sigmoid(x);
    case LayerKind::softmax:
      return softmax_axis0(x);
    case LayerKind::upsample_nearest:
      return upsample_nearest(x, spec.factor);
    case LayerKind::dropout: {
      const bool active = mode != RunMode::det_infer;
      if (active && rng == nullptr) throw ConfigError("dropout needs an rng stream");
      if (!active) {
        RngStream unused(0);
        return dropout(x, spec.p, false, unused);
      }
      return dropout(x, spec.p, true, *rng);
    }
    case LayerKind::concat:
      throw ConfigError("concat takes two inputs; use concat_channels directly");
  }
  throw ConfigError("apply_layer: unknown layer kind");
}

void kaiming_uniform(Tensor& t, std::size_t fan_in, RngStream& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
}

Var cross_entropy(const Var& prob, const Tensor& onehot_labels,
                  const std::vector<double>* class_weights) {
  const Tensor& pv = prob->value;
  check_same_shape(pv, onehot_labels, "cross_entropy");
  const std::size_t C = pv.extent(0);
  const std::size_t P = pv.size() / C;
  if (class_weights && class_weights->size() != C)
    throw ShapeError("cross_entropy: class weight count mismatch");

  double total = 0.0;
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t c = 0; c < C; ++c) {
      const double y = onehot_labels[c * P + p];
      if (y == 0.0) continue;
      const double w = class_weights ? (*class_weights)[c] : 1.0;
      total += -y * w * std::log(std::max(pv[c * P + p], kLogClamp));
    }
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(P));
  check_finite(out, "cross_entropy");

  auto labels = std::make_shared<Tensor>(onehot_labels);
  auto weights = std::make_shared<std::vector<double>>(
      class_weights ? *class_weights : std::vector<double>(C, 1.0));
  const bool record = grad_enabled() && prob->requires_grad;
  if (!record) return make_var(std::move(out), false);

  auto node = std::make_shared<Node>();
  node->value = std::move(out);
  node->requires_grad = true;
  node->parents = {prob};
  node->backprop = [labels, weights, C, P](Node& n) {
    Var pp = n.parents[0];
    if (!pp->requires_grad) return;
    Tensor& dp = pp->ensure_grad();
    const Tensor& pv2 = pp->value;
    const double g = n.grad[0] / static_cast<double>(P);
    for (std::size_t p = 0; p < P; ++p) {
      for (std::size_t c = 0; c < C; ++c) {
        const double y = (*labels)[c * P + p];
        if (y == 0.0) continue;
        const double pc = pv2[c * P + p];
        if (pc < kLogClamp) continue;  // clamped region has zero slope
        dp[c * P + p] += -g * y * (*weights)[c] / pc;
      }
    }
  };
  return node;
}

Var aleatoric_loss(const Var& logits, const Var& log_variance, const Tensor& onehot_labels,
                   std::size_t T, RngStream rng) {
  if (T == 0) throw ConfigError("aleatoric_loss: T must be >= 1");
  const Tensor& zv = logits->value;
  check_same_shape(zv, onehot_labels, "aleatoric_loss labels");
  const std::size_t C = zv.extent(0);
  const std::size_t P = zv.size() / C;
  const Tensor& sv = log_variance->value;
  if (sv.size() != P) throw ShapeError("aleatoric_loss: one log-variance per position required");

  // one scale per position; noise is i.i.d. per logit
  std::vector<double> scale(P);
  for (std::size_t p = 0; p < P; ++p) {
    const double s = std::clamp(sv[p], kLogVarLo, kLogVarHi);
    scale[p] = (s <= kLogVarLo) ? 0.0 : std::exp(0.5 * s);
  }
  auto eps = std::make_shared<std::vector<double>>(T * C * P);
  for (double& e : *eps) e = rng.normal();

  // per position: loss = ln T - LSE_t( logsoftmax_true(z + scale * eps_t) )
  std::vector<double> lse_ls(P);  // LSE over samples of true-class log-softmax
  std::vector<double> ls(T);
  double total = 0.0;
  const double lnT = std::log(static_cast<double>(T));
  std::vector<std::size_t> true_class(P);
  for (std::size_t p = 0; p < P; ++p) {
    std::size_t tc = 0;
    for (std::size_t c = 0; c < C; ++c) {
      if (onehot_labels[c * P + p] != 0.0) tc = c;
    }
    true_class[p] = tc;
  }
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t t = 0; t < T; ++t) {
      double mx = -HUGE_VAL;
      for (std::size_t c = 0; c < C; ++c) {
        const double a = zv[c * P + p] + scale[p] * (*eps)[(t * C + c) * P + p];
        mx = std::max(mx, a);
      }
      double denom = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        const double a = zv[c * P + p] + scale[p] * (*eps)[(t * C + c) * P + p];
        denom += std::exp(a - mx);
      }
      const std::size_t tc = true_class[p];
      const double atc = zv[tc * P + p] + scale[p] * (*eps)[(t * C + tc) * P + p];
      ls[t] = (atc - mx) - std::log(denom);
    }
    double mt = -HUGE_VAL;
    for (std::size_t t = 0; t < T; ++t) mt = std::max(mt, ls[t]);
    double st = 0.0;
    for (std::size_t t = 0; t < T; ++t) st += std::exp(ls[t] - mt);
    lse_ls[p] = mt + std::log(st);
    total += lnT - lse_ls[p];
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(P));
  check_finite(out, "aleatoric_loss");

  const bool record =
      grad_enabled() && (logits->requires_grad || log_variance->requires_grad);
  if (!record) return make_var(std::move(out), false);

  auto labels = std::make_shared<Tensor>(onehot_labels);
  auto node = std::make_shared<Node>();
  node->value = std::move(out);
  node->requires_grad = true;
  node->parents = {logits, log_variance};
  node->backprop = [eps, labels, C, P, T](Node& n) {
    Var zp = n.parents[0], sp = n.parents[1];
    const Tensor& zv2 = zp->value;
    const Tensor& sv2 = sp->value;
    const double gscale = n.grad[0] / static_cast<double>(P);

    Tensor* dz = zp->requires_grad ? &zp->ensure_grad() : nullptr;
    Tensor* ds = sp->requires_grad ? &sp->ensure_grad() : nullptr;

    std::vector<double> ls(T);
    std::vector<double> soft(T * C);
    for (std::size_t p = 0; p < P; ++p) {
      const double s_raw = sv2[p];
      const double s = std::clamp(s_raw, kLogVarLo, kLogVarHi);
      const double scale_p = (s <= kLogVarLo) ? 0.0 : std::exp(0.5 * s);
      const bool clamp_active = (s_raw <= kLogVarLo || s_raw >= kLogVarHi);

      std::size_t tc = 0;
      for (std::size_t c = 0; c < C; ++c) {
        if ((*labels)[c * P + p] != 0.0) tc = c;
      }
      // recompute per-sample log-softmax and softmax
      for (std::size_t t = 0; t < T; ++t) {
        double mx = -HUGE_VAL;
        for (std::size_t c = 0; c < C; ++c) {
          const double a = zv2[c * P + p] + scale_p * (*eps)[(t * C + c) * P + p];
          mx = std::max(mx, a);
        }
        double denom = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
          const double a = zv2[c * P + p] + scale_p * (*eps)[(t * C + c) * P + p];
          soft[t * C + c] = std::exp(a - mx);
          denom += soft[t * C + c];
        }
        for (std::size_t c = 0; c < C; ++c) soft[t * C + c] /= denom;
        const double atc = zv2[tc * P + p] + scale_p * (*eps)[(t * C + tc) * P + p];
        ls[t] = (atc - mx) - std::log(denom);
      }
      double mt = -HUGE_VAL;
      for (std::size_t t = 0; t < T; ++t) mt = std::max(mt, ls[t]);
      double st = 0.0;
      for (std::size_t t = 0; t < T; ++t) st += std::exp(ls[t] - mt);
      // weight of sample t in the mixture gradient
      for (std::size_t t = 0; t < T; ++t) ls[t] = std::exp(ls[t] - mt) / st;

      double ds_acc = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        const double wt = ls[t];
        for (std::size_t c = 0; c < C; ++c) {
          // d loss / d a_{t,c} = w_t * (softmax_c - [c == true])
          const double da = wt * (soft[t * C + c] - ((c == tc) ? 1.0 : 0.0));
          if (dz) (*dz)[c * P + p] += gscale * da;
          if (ds && !clamp_active)
            ds_acc += da * (*eps)[(t * C + c) * P + p];
        }
      }
      if (ds && !clamp_active) (*ds)[p] += gscale * ds_acc * 0.5 * scale_p;
    }
  };
  return node;
}

Var squared_error(const Var& pred, double target) {
  if (pred->value.size() != 1) throw ShapeError("squared_error: prediction must be scalar");
  const double d = pred->value[0] - target;
  Tensor out = Tensor::scalar(d * d);
  const bool record = grad_enabled() && pred->requires_grad;
  if (!record) return make_var(std::move(out), false);
  auto node = std::make_shared<Node>();
  node->value = std::move(out);
  node->requires_grad = true;
  node->parents = {pred};
  node->backprop = [target](Node& n) {
    Var pp = n.parents[0];
    if (!pp->requires_grad) return;
    pp->ensure_grad()[0] += n.grad[0] * 2.0 * (pp->value[0] - target);
  };
  return node;
}

void adam_step(AdamState& state, const std::vector<Var>& params) {
  if (state.m.empty()) {
    for (const Var& p : params) {
      state.m.push_back(Tensor::zeros_like(p->value));
      state.v.push_back(Tensor::zeros_like(p->value));
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: parameter count changed");
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& pv = params[i]->value;
    if (!state.m[i].same_shape(pv)) throw ShapeError("adam_step: moment shape mismatch");
    const bool has_grad = params[i]->grad_allocated;
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t j = 0; j < pv.size(); ++j) {
      const double g = has_grad ? params[i]->grad[j] : 0.0;
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      pv[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
    check_finite(pv, "adam_step");
  }
}

}  // namespace fmseg
