#include "fmseg/selfcheck.hpp"

#include <algorithm>
#include <cmath>

#include "fmseg/gradcheck.hpp"
#include "fmseg/metrics.hpp"
#include "fmseg/naive_ref.hpp"
#include "fmseg/nn.hpp"
#include "fmseg/features.hpp"

namespace fmseg {

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, RngStream& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

Tensor random_onehot(std::size_t C, std::size_t H, std::size_t W, RngStream& rng) {
  Tensor labels({C, H, W});
  const std::size_t P = H * W;
  for (std::size_t p = 0; p < P; ++p) {
    const std::size_t c = rng.uniform_int(C);
    labels[c * P + p] = 1.0;
  }
  return labels;
}

// reduce any output to a scalar with fixed random weights so the check
// exercises the whole jacobian
Var weighted_sum(const Var& x, const Tensor& weights) {
  Var w = constant(weights);
  Var f = flatten(x);
  Var fw = flatten(w);
  // dot product via dense with a 1 x n weight matrix
  Tensor wm({1, weights.size()});
  for (std::size_t i = 0; i < weights.size(); ++i) wm[i] = weights[i];
  return dense(f, constant(wm), constant(Tensor({1})));
}

CheckResult layer_gradient_check(const std::string& name, int seeds, double tolerance,
                                 const std::function<double(std::uint64_t)>& run_seed) {
  CheckResult r;
  r.name = "grad/" + name;
  r.passed = true;
  for (int s = 0; s < seeds; ++s) {
    const double err = run_seed(static_cast<std::uint64_t>(s));
    r.worst = std::max(r.worst, err);
    if (err >= tolerance) r.passed = false;
  }
  return r;
}

}  // namespace

std::vector<CheckResult> run_gradient_checks(int seeds, double tolerance) {
  std::vector<CheckResult> out;

  out.push_back(layer_gradient_check("conv2d", seeds, tolerance, [](std::uint64_t s) {
    RngStream rng(s, "gc_conv");
    Var x = make_var(random_tensor({2, 4, 4}, rng), true);
    Var w = make_var(random_tensor({3, 2, 3, 3}, rng), true);
    Var b = make_var(random_tensor({3}, rng), true);
    const Tensor mix = random_tensor({3 * 4 * 4}, rng);
    return gradient_check({x, w, b},
                          [&] { return weighted_sum(conv2d(x, w, b), mix); });
  }));

  out.push_back(layer_gradient_check("dense", seeds, tolerance, [](std::uint64_t s) {
    RngStream rng(s, "gc_dense");
    Var x = make_var(random_tensor({6}, rng), true);
    Var w = make_var(random_tensor({4, 6}, rng), true);
    Var b = make_var(random_tensor({4}, rng), true);
    const Tensor mix = random_tensor({4}, rng);
    return gradient_check({x, w, b}, [&] { return weighted_sum(dense(x, w, b), mix); });
  }));

  out.push_back(layer_gradient_check("relu", seeds, tolerance, [](std::uint64_t s) {
    RngStream rng(s, "gc_relu");
    // keep values away from the kink
    Tensor t = random_tensor({2, 4, 4}, rng);
    for (double& v : t.values()) {
      if (std::abs(v) < 0.05) v += 0.1;
    }
    Var x = make_var(t, true);
    const Tensor mix = random_tensor({2 * 4 * 4}, rng);
    return gradient_check({x}, [&] { return weighted_sum(relu(x), mix); });
  }));

  out.push_back(layer_gradient_check("sigmoid", seeds, tolerance, [](std::uint64_t s) {
    RngStream rng(s, "gc_sigmoid");
    Var x = make_var(random_tensor({2, 4, 4}, rng, -2.0, 2.0), true);
    const Tensor mix = random_tensor({2 * 4 * 4}, rng);
    return gradient_check({x}, [&] { return weighted_sum(sigmoid(x), mix); });
  }));

  out.push_back(layer_gradient_check("softmax", seeds, tolerance, [](std::uint64_t s) {
    RngStream rng(s, "gc_softmax");
    Var x = make_var(random_tensor({3, 2, 2}, rng, -2.0, 2.0), true);
    const Tensor mix = random_tensor({3 * 2 * 2}, rng);
    return gradient_check({x}, [&] { return weighted_sum(softmax_axis0(x), mix); });
  }));

  out.push_back(layer_gradient_check("maxpool2d", seeds, tolerance, [](std::uint64_t s) {
    RngStream rng(s, "gc_maxpool");
    Var x = make_var(random_tensor({2, 4, 4}, rng), true);
    const Tensor mix = random_tensor({2 * 2 * 2}, rng);
    return gradient_check({x}, [&] { return weighted_sum(maxpool2d(x, 2), mix); });
  }));

  out.push_back(layer_gradient_check("maxpool3_ceil", seeds, tolerance, [](std::uint64_t s) {
    RngStream rng(s, "gc_maxpool3");
    Var x = make_var(random_tensor({1, 4, 4}, rng), true);
    const Tensor mix = random_tensor({1 * 2 * 2}, rng);
    return gradient_check({x}, [&] { return weighted_sum(maxpool2d(x, 3), mix); });
  }));

  out.push_back(layer_gradient_check("upsample_nearest", seeds, tolerance, [](std::uint64_t s) {
    RngStream rng(s, "gc_upsample");
    Var x = make_var(random_tensor({2, 3, 3}, rng), true);
    const Tensor mix = random_tensor({2 * 6 * 6}, rng);
    return gradient_check({x}, [&] { return weighted_sum(upsample_nearest(x, 2), mix); });
  }));

  out.push_back(layer_gradient_check("concat", seeds, tolerance, [](std::uint64_t s) {
    RngStream rng(s, "gc_concat");
    Var a = make_var(random_tensor({2, 3, 3}, rng), true);
    Var b = make_var(random_tensor({1, 3, 3}, rng), true);
    const Tensor mix = random_tensor({3 * 3 * 3}, rng);
    return gradient_check({a, b}, [&] { return weighted_sum(concat_channels(a, b), mix); });
  }));

  out.push_back(layer_gradient_check("dropout", seeds, tolerance, [](std::uint64_t s) {
    RngStream rng(s, "gc_dropout");
    Var x = make_var(random_tensor({2, 4, 4}, rng), true);
    const Tensor mix = random_tensor({2 * 4 * 4}, rng);
    // fixed substream per evaluation so the mask is common for FD
    return gradient_check({x}, [&] {
      RngStream mask_rng = rng.substream("mask");
      return weighted_sum(dropout(x, 0.4, true, mask_rng), mix);
    });
  }));

  out.push_back(layer_gradient_check("scale_channels", seeds, tolerance, [](std::uint64_t s) {
    RngStream rng(s, "gc_scale");
    Var x = make_var(random_tensor({3, 4, 4}, rng), true);
    Var g = make_var(random_tensor({3}, rng, 0.1, 1.0), true);
    const Tensor mix = random_tensor({3 * 4 * 4}, rng);
    return gradient_check({x, g}, [&] { return weighted_sum(scale_channels(x, g), mix); });
  }));

  out.push_back(layer_gradient_check("cross_entropy", seeds, tolerance, [](std::uint64_t s) {
    RngStream rng(s, "gc_ce");
    Var z = make_var(random_tensor({2, 4, 4}, rng, -1.5, 1.5), true);
    Tensor labels = random_onehot(2, 4, 4, rng);
    return gradient_check({z}, [&] { return cross_entropy(softmax_axis0(z), labels); });
  }));

  out.push_back(layer_gradient_check("aleatoric_loss", seeds, tolerance, [](std::uint64_t s) {
    RngStream rng(s, "gc_al");
    Var z = make_var(random_tensor({2, 3, 3}, rng, -1.5, 1.5), true);
    Var lv = make_var(random_tensor({9}, rng, -2.0, 1.0), true);
    Tensor labels = random_onehot(2, 3, 3, rng);
    return gradient_check({z, lv}, [&] {
      return aleatoric_loss(z, lv, labels, 16, rng.substream("noise"));
    });
  }));

  return out;
}

std::vector<CheckResult> run_oracle_checks(std::uint64_t seed) {
  std::vector<CheckResult> out;
  RngStream rng(seed, "oracle");

  {
    CheckResult r;
    r.name = "oracle/features";
    r.passed = true;
    for (int trial = 0; trial < 25; ++trial) {
      Tensor map = random_tensor({8, 8}, rng, 0.0, 1.0);
      const std::vector<double> naive_p = naive::percentiles(map.values());
      const std::vector<double> naive_h = naive::cumulative_hist(map.values());
      const std::vector<double> naive_m = naive::moments(map.values());
      const std::vector<double> got_p = percentiles(map);
      const std::vector<double> got_h = cumulative_hist(map);
      const std::vector<double> got_m = moments(map);
      for (std::size_t i = 0; i < 99; ++i)
        r.worst = std::max(r.worst, std::abs(naive_p[i] - got_p[i]));
      for (std::size_t i = 0; i < 13; ++i)
        r.worst = std::max(r.worst, std::abs(naive_h[i] - got_h[i]));
      for (std::size_t i = 0; i < 4; ++i)
        r.worst = std::max(r.worst, std::abs(naive_m[i] - got_m[i]));
    }
    r.passed = r.worst < 1e-12;
    out.push_back(r);
  }

  {
    CheckResult r;
    r.name = "oracle/best_split";
    r.passed = true;
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = 3 + rng.uniform_int(6);
      DataMatrix X;
      X.rows = n;
      X.cols = 3;
      for (std::size_t i = 0; i < n * 3; ++i)
        X.values.push_back(static_cast<double>(rng.uniform_int(5)));
      std::vector<double> y;
      for (std::size_t i = 0; i < n; ++i) y.push_back(static_cast<double>(rng.uniform_int(4)));
      std::vector<std::uint32_t> rows(n);
      for (std::size_t i = 0; i < n; ++i) rows[i] = static_cast<std::uint32_t>(i);
      const SplitChoice got = best_split(X, y, rows, {0, 1, 2});
      const SplitChoice want = naive::best_split(X, y, rows);
      if (got.found != want.found || (got.found && (got.feature != want.feature ||
                                                    got.threshold != want.threshold))) {
        r.passed = false;
        r.detail = "split mismatch on trial " + std::to_string(trial);
        break;
      }
    }
    out.push_back(r);
  }

  {
    CheckResult r;
    r.name = "oracle/f1";
    r.passed = true;
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t e = 8;
      Tensor mask({e, e});
      Tensor prob({2, e, e});
      std::vector<int> m(e * e), p(e * e);
      for (std::size_t i = 0; i < e * e; ++i) {
        m[i] = rng.bernoulli(0.3) ? 1 : 0;
        p[i] = rng.bernoulli(0.3) ? 1 : 0;
        mask[i] = m[i];
        prob[i] = p[i] ? 0.2 : 0.8;
        prob[e * e + i] = p[i] ? 0.8 : 0.2;
      }
      const double got = f1_score(mask, prob);
      const double want = naive::f1_score(m, p);
      r.worst = std::max(r.worst, std::abs(got - want));
    }
    r.passed = r.worst == 0.0;
    out.push_back(r);
  }

  return out;
}

bool all_passed(const std::vector<CheckResult>& results) {
  return std::all_of(results.begin(), results.end(),
                     [](const CheckResult& r) { return r.passed; });
}

}  // namespace fmseg
