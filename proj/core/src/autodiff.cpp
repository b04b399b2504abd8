#include "fmseg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

namespace fmseg {

namespace {

thread_local bool g_grad_enabled = true;

// C(M x N) += A(M x K) * B(K x N), all row-major. When accumulate is false C
// is overwritten. K is blocked so the active slice of B stays cache-resident
// across rows; the k loop is unrolled four-wide to amortize the C row
// traffic. Parallel over rows of C (disjoint writes).
void gemm(const double* A, const double* B, double* C, std::size_t M, std::size_t K,
          std::size_t N, bool accumulate) {
  constexpr std::size_t kBlock = 16;
  parallel_for(M, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      if (!accumulate) std::memset(C + i * N, 0, N * sizeof(double));
    }
    for (std::size_t kb = 0; kb < K; kb += kBlock) {
      const std::size_t ke = std::min(K, kb + kBlock);
      for (std::size_t i = lo; i < hi; ++i) {
        double* c = C + i * N;
        const double* a = A + i * K;
        std::size_t k = kb;
        for (; k + 4 <= ke; k += 4) {
          const double a0 = a[k], a1 = a[k + 1], a2 = a[k + 2], a3 = a[k + 3];
          const double* __restrict__ b0 = B + k * N;
          const double* __restrict__ b1 = b0 + N;
          const double* __restrict__ b2 = b1 + N;
          const double* __restrict__ b3 = b2 + N;
          double* __restrict__ cr = c;
          for (std::size_t j = 0; j < N; ++j)
            cr[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
        }
        for (; k < ke; ++k) {
          const double ak = a[k];
          if (ak == 0.0) continue;
          const double* __restrict__ b = B + k * N;
          double* __restrict__ cr = c;
          for (std::size_t j = 0; j < N; ++j) cr[j] += ak * b[j];
        }
      }
    }
  });
}

// C(M x N) += A(M x P) * B(N x P)^T, i.e. C[m][n] = dot(A row m, B row n).
// Parallel over rows of B (disjoint C columns).
void gemm_abt(const double* A, const double* B, double* C, std::size_t M, std::size_t P,
              std::size_t N) {
  parallel_for(N, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t n = lo; n < hi; ++n) {
      const double* __restrict__ b = B + n * P;
      for (std::size_t m = 0; m < M; ++m) {
        const double* __restrict__ a = A + m * P;
        double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
        std::size_t p = 0;
        for (; p + 4 <= P; p += 4) {
          s0 += a[p] * b[p];
          s1 += a[p + 1] * b[p + 1];
          s2 += a[p + 2] * b[p + 2];
          s3 += a[p + 3] * b[p + 3];
        }
        double s = (s0 + s1) + (s2 + s3);
        for (; p < P; ++p) s += a[p] * b[p];
        C[m * N + n] += s;
      }
    }
  });
}

// cols(Ci*k*k x H*W) from x(Ci x H x W), zero padding k/2
void im2col(const double* x, std::size_t Ci, std::size_t H, std::size_t W, std::size_t k,
            double* cols) {
  const std::size_t pad = k / 2;
  const std::size_t HW = H * W;
  parallel_for(Ci, [&](std::size_t clo, std::size_t chi) {
    for (std::size_t c = clo; c < chi; ++c) {
      const double* xc = x + c * HW;
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          double* row = cols + ((c * k + ky) * k + kx) * HW;
          const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - static_cast<std::ptrdiff_t>(pad);
          const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(pad);
          for (std::size_t y = 0; y < H; ++y) {
            const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
            double* out = row + y * W;
            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) {
              std::memset(out, 0, W * sizeof(double));
              continue;
            }
            const double* src = xc + static_cast<std::size_t>(sy) * W;
            for (std::size_t xw = 0; xw < W; ++xw) {
              const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xw) + dx;
              out[xw] = (sx < 0 || sx >= static_cast<std::ptrdiff_t>(W))
                            ? 0.0
                            : src[static_cast<std::size_t>(sx)];
            }
          }
        }
      }
    }
  });
}

// adjoint of im2col: scatter-add cols back into dx
void col2im_add(const double* cols, std::size_t Ci, std::size_t H, std::size_t W, std::size_t k,
                double* dx) {
  const std::size_t pad = k / 2;
  const std::size_t HW = H * W;
  parallel_for(Ci, [&](std::size_t clo, std::size_t chi) {
    for (std::size_t c = clo; c < chi; ++c) {
      double* dxc = dx + c * HW;
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          const double* row = cols + ((c * k + ky) * k + kx) * HW;
          const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - static_cast<std::ptrdiff_t>(pad);
          const std::ptrdiff_t dx_off = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(pad);
          for (std::size_t y = 0; y < H; ++y) {
            const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) continue;
            const double* src = row + y * W;
            double* dst = dxc + static_cast<std::size_t>(sy) * W;
            for (std::size_t xw = 0; xw < W; ++xw) {
              const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xw) + dx_off;
              if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(W)) continue;
              dst[static_cast<std::size_t>(sx)] += src[xw];
            }
          }
        }
      }
    }
  });
}

bool want_grad(std::initializer_list<const Var*> parents) {
  if (!g_grad_enabled) return false;
  for (const Var* p : parents) {
    if (*p && (*p)->requires_grad) return true;
  }
  return false;
}

Var finish(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop,
           bool record) {
  check_finite(value, "op output");
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (record) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backprop = std::move(backprop);
  }
  return node;
}

}  // namespace

Var make_var(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return node;
}

Var constant(Tensor value) { return make_var(std::move(value), false); }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

Var conv2d(const Var& x, const Var& w, const Var& b) {
  const Tensor& xv = x->value;
  const Tensor& wv = w->value;
  const Tensor& bv = b->value;
  if (xv.rank() != 3 || wv.rank() != 4) throw ShapeError("conv2d: need x rank 3, w rank 4");
  const std::size_t Ci = xv.extent(0), H = xv.extent(1), W = xv.extent(2);
  const std::size_t Co = wv.extent(0), k = wv.extent(2);
  if (wv.extent(1) != Ci) throw ShapeError("conv2d: input channels do not match kernel");
  if (wv.extent(3) != k || k % 2 == 0) throw ShapeError("conv2d: kernel must be odd square");
  if (bv.size() != Co) throw ShapeError("conv2d: bias size mismatch");

  const std::size_t HW = H * W;
  const std::size_t K = Ci * k * k;
  auto cols = std::make_shared<Tensor>(std::vector<std::size_t>{K, HW});
  im2col(xv.data(), Ci, H, W, k, cols->data());

  Tensor out({Co, H, W});
  gemm(wv.data(), cols->data(), out.data(), Co, K, HW, false);
  parallel_for(Co, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t c = lo; c < hi; ++c) {
      double* o = out.data() + c * HW;
      const double bias = bv[c];
      for (std::size_t i = 0; i < HW; ++i) o[i] += bias;
    }
  });

  const bool record = want_grad({&x, &w, &b});
  return finish(
      std::move(out), {x, w, b},
      [cols, Ci, H, W, Co, k, K, HW](Node& n) {
        const Tensor& g = n.grad;  // Co x H x W
        Var xp = n.parents[0], wp = n.parents[1], bp = n.parents[2];
        if (bp->requires_grad) {
          Tensor& db = bp->ensure_grad();
          for (std::size_t c = 0; c < Co; ++c) {
            double s = 0.0;
            const double* gs = g.data() + c * HW;
            for (std::size_t i = 0; i < HW; ++i) s += gs[i];
            db[c] += s;
          }
        }
        if (wp->requires_grad) {
          // dW(Co x K) += g(Co x HW) * cols^T
          gemm_abt(g.data(), cols->data(), wp->ensure_grad().data(), Co, HW, K);
        }
        if (xp->requires_grad) {
          // dcols(K x HW) = W^T(K x Co) * g(Co x HW), then scatter back
          const Tensor& wv2 = wp->value;
          Tensor wt({K, Co});
          for (std::size_t c = 0; c < Co; ++c) {
            for (std::size_t kk = 0; kk < K; ++kk) wt[kk * Co + c] = wv2[c * K + kk];
          }
          Tensor dcols({K, HW});
          gemm(wt.data(), g.data(), dcols.data(), K, Co, HW, false);
          col2im_add(dcols.data(), Ci, H, W, k, xp->ensure_grad().data());
        }
      },
      record);
}

Var dense(const Var& x, const Var& w, const Var& b) {
  const Tensor& xv = x->value;
  const Tensor& wv = w->value;
  const Tensor& bv = b->value;
  if (wv.rank() != 2) throw ShapeError("dense: weight must be rank 2");
  const std::size_t m = wv.extent(0), nIn = wv.extent(1);
  if (xv.size() != nIn) throw ShapeError("dense: input size mismatch");
  if (bv.size() != m) throw ShapeError("dense: bias size mismatch");

  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    const double* wr = wv.data() + i * nIn;
    double s = bv[i];
    for (std::size_t j = 0; j < nIn; ++j) s += wr[j] * xv[j];
    out[i] = s;
  }
  const bool record = want_grad({&x, &w, &b});
  return finish(
      std::move(out), {x, w, b},
      [m, nIn](Node& n) {
        const Tensor& g = n.grad;
        Var xp = n.parents[0], wp = n.parents[1], bp = n.parents[2];
        if (bp->requires_grad) {
          Tensor& db = bp->ensure_grad();
          for (std::size_t i = 0; i < m; ++i) db[i] += g[i];
        }
        if (wp->requires_grad) {
          Tensor& dw = wp->ensure_grad();
          const Tensor& xv2 = xp->value;
          for (std::size_t i = 0; i < m; ++i) {
            double* dwr = dw.data() + i * nIn;
            const double gi = g[i];
            for (std::size_t j = 0; j < nIn; ++j) dwr[j] += gi * xv2[j];
          }
        }
        if (xp->requires_grad) {
          Tensor& dx = xp->ensure_grad();
          const Tensor& wv2 = wp->value;
          for (std::size_t i = 0; i < m; ++i) {
            const double* wr = wv2.data() + i * nIn;
            const double gi = g[i];
            for (std::size_t j = 0; j < nIn; ++j) dx[j] += gi * wr[j];
          }
        }
      },
      record);
}

Var relu(const Var& x) {
  Tensor out = x->value;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  const bool record = want_grad({&x});
  return finish(
      std::move(out), {x},
      [](Node& n) {
        Var xp = n.parents[0];
        if (!xp->requires_grad) return;
        Tensor& dx = xp->ensure_grad();
        const Tensor& xv = xp->value;
        for (std::size_t i = 0; i < dx.size(); ++i) {
          if (xv[i] > 0.0) dx[i] += n.grad[i];
        }
      },
      record);
}

Var sigmoid(const Var& x) {
  Tensor out = x->value;
  for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  auto saved = std::make_shared<Tensor>(out);
  const bool record = want_grad({&x});
  return finish(
      std::move(out), {x},
      [saved](Node& n) {
        Var xp = n.parents[0];
        if (!xp->requires_grad) return;
        Tensor& dx = xp->ensure_grad();
        for (std::size_t i = 0; i < dx.size(); ++i) {
          const double s = (*saved)[i];
          dx[i] += n.grad[i] * s * (1.0 - s);
        }
      },
      record);
}

Var softmax_axis0(const Var& x) {
  const Tensor& xv = x->value;
  if (xv.rank() < 1) throw ShapeError("softmax_axis0: rank must be >= 1");
  const std::size_t C = xv.extent(0);
  const std::size_t P = xv.size() / C;  // positions
  Tensor out = xv;
  for (std::size_t p = 0; p < P; ++p) {
    double mx = -HUGE_VAL;
    for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, xv[c * P + p]);
    double denom = 0.0;
    for (std::size_t c = 0; c < C; ++c) denom += std::exp(xv[c * P + p] - mx);
    for (std::size_t c = 0; c < C; ++c) out[c * P + p] = std::exp(xv[c * P + p] - mx) / denom;
  }
  auto saved = std::make_shared<Tensor>(out);
  const bool record = want_grad({&x});
  return finish(
      std::move(out), {x},
      [saved, C, P](Node& n) {
        Var xp = n.parents[0];
        if (!xp->requires_grad) return;
        Tensor& dx = xp->ensure_grad();
        for (std::size_t p = 0; p < P; ++p) {
          double dot = 0.0;
          for (std::size_t c = 0; c < C; ++c) dot += n.grad[c * P + p] * (*saved)[c * P + p];
          for (std::size_t c = 0; c < C; ++c) {
            const double y = (*saved)[c * P + p];
            dx[c * P + p] += y * (n.grad[c * P + p] - dot);
          }
        }
      },
      record);
}

Var maxpool2d(const Var& x, std::size_t k) {
  const Tensor& xv = x->value;
  if (xv.rank() != 3) throw ShapeError("maxpool2d: need rank 3");
  if (k == 0) throw ConfigError("maxpool2d: window must be positive");
  const std::size_t C = xv.extent(0), H = xv.extent(1), W = xv.extent(2);
  const std::size_t Ho = (H + k - 1) / k, Wo = (W + k - 1) / k;
  Tensor out({C, Ho, Wo});
  auto argmax = std::make_shared<std::vector<std::size_t>>(C * Ho * Wo);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t yo = 0; yo < Ho; ++yo) {
      for (std::size_t xo = 0; xo < Wo; ++xo) {
        double best = -HUGE_VAL;
        std::size_t best_idx = 0;
        for (std::size_t dy = 0; dy < k; ++dy) {
          const std::size_t y = yo * k + dy;
          if (y >= H) break;
          for (std::size_t dx = 0; dx < k; ++dx) {
            const std::size_t xx = xo * k + dx;
            if (xx >= W) break;
            const std::size_t idx = (c * H + y) * W + xx;
            if (xv[idx] > best) {
              best = xv[idx];
              best_idx = idx;
            }
          }
        }
        out[(c * Ho + yo) * Wo + xo] = best;
        (*argmax)[(c * Ho + yo) * Wo + xo] = best_idx;
      }
    }
  }
  const bool record = want_grad({&x});
  return finish(
      std::move(out), {x},
      [argmax](Node& n) {
        Var xp = n.parents[0];
        if (!xp->requires_grad) return;
        Tensor& dx = xp->ensure_grad();
        for (std::size_t i = 0; i < argmax->size(); ++i) dx[(*argmax)[i]] += n.grad[i];
      },
      record);
}

Var upsample_nearest(const Var& x, std::size_t factor) {
  const Tensor& xv = x->value;
  if (xv.rank() != 3) throw ShapeError("upsample_nearest: need rank 3");
  const std::size_t C = xv.extent(0), H = xv.extent(1), W = xv.extent(2);
  const std::size_t Ho = H * factor, Wo = W * factor;
  Tensor out({C, Ho, Wo});
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y < Ho; ++y) {
      const double* src = xv.data() + (c * H + y / factor) * W;
      double* dst = out.data() + (c * Ho + y) * Wo;
      for (std::size_t xx = 0; xx < Wo; ++xx) dst[xx] = src[xx / factor];
    }
  }
  const bool record = want_grad({&x});
  return finish(
      std::move(out), {x},
      [C, H, W, factor](Node& n) {
        Var xp = n.parents[0];
        if (!xp->requires_grad) return;
        Tensor& dx = xp->ensure_grad();
        const std::size_t Ho = H * factor, Wo = W * factor;
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t y = 0; y < Ho; ++y) {
            const double* g = n.grad.data() + (c * Ho + y) * Wo;
            double* d = dx.data() + (c * H + y / factor) * W;
            for (std::size_t xx = 0; xx < Wo; ++xx) d[xx / factor] += g[xx];
          }
        }
      },
      record);
}

Var concat_channels(const Var& a, const Var& b) {
  const Tensor& av = a->value;
  const Tensor& bv = b->value;
  if (av.rank() != 3 || bv.rank() != 3) throw ShapeError("concat_channels: need rank 3");
  if (av.extent(1) != bv.extent(1) || av.extent(2) != bv.extent(2))
    throw ShapeError("concat_channels: spatial extents differ");
  const std::size_t Ca = av.extent(0), Cb = bv.extent(0);
  const std::size_t H = av.extent(1), W = av.extent(2);
  Tensor out({Ca + Cb, H, W});
  std::memcpy(out.data(), av.data(), av.size() * sizeof(double));
  std::memcpy(out.data() + av.size(), bv.data(), bv.size() * sizeof(double));
  const bool record = want_grad({&a, &b});
  const std::size_t na = av.size();
  return finish(
      std::move(out), {a, b},
      [na](Node& n) {
        Var ap = n.parents[0], bp = n.parents[1];
        if (ap->requires_grad) {
          Tensor& da = ap->ensure_grad();
          for (std::size_t i = 0; i < na; ++i) da[i] += n.grad[i];
        }
        if (bp->requires_grad) {
          Tensor& db = bp->ensure_grad();
          for (std::size_t i = 0; i < db.size(); ++i) db[i] += n.grad[na + i];
        }
      },
      record);
}

Var dropout(const Var& x, double p, bool active, RngStream& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: p must be in [0, 1)");
  if (!active || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<Tensor>(Tensor::zeros_like(x->value));
  Tensor out = x->value;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double m = rng.bernoulli(p) ? 0.0 : keep_scale;
    (*mask)[i] = m;
    out[i] *= m;
  }
  const bool record = want_grad({&x});
  return finish(
      std::move(out), {x},
      [mask](Node& n) {
        Var xp = n.parents[0];
        if (!xp->requires_grad) return;
        Tensor& dx = xp->ensure_grad();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += n.grad[i] * (*mask)[i];
      },
      record);
}

Var scale_channels(const Var& x, const Var& g) {
  const Tensor& xv = x->value;
  const Tensor& gv = g->value;
  if (xv.rank() < 1) throw ShapeError("scale_channels: rank must be >= 1");
  const std::size_t C = xv.extent(0);
  if (gv.size() != C) throw ShapeError("scale_channels: gate length must equal channel count");
  const std::size_t P = xv.size() / C;
  Tensor out = xv;
  for (std::size_t c = 0; c < C; ++c) {
    double* o = out.data() + c * P;
    const double gc = gv[c];
    for (std::size_t i = 0; i < P; ++i) o[i] *= gc;
  }
  const bool record = want_grad({&x, &g});
  return finish(
      std::move(out), {x, g},
      [C, P](Node& n) {
        Var xp = n.parents[0], gp = n.parents[1];
        if (xp->requires_grad) {
          Tensor& dx = xp->ensure_grad();
          const Tensor& gv2 = gp->value;
          for (std::size_t c = 0; c < C; ++c) {
            const double gc = gv2[c];
            double* d = dx.data() + c * P;
            const double* gr = n.grad.data() + c * P;
            for (std::size_t i = 0; i < P; ++i) d[i] += gr[i] * gc;
          }
        }
        if (gp->requires_grad) {
          Tensor& dg = gp->ensure_grad();
          const Tensor& xv2 = xp->value;
          for (std::size_t c = 0; c < C; ++c) {
            const double* xr = xv2.data() + c * P;
            const double* gr = n.grad.data() + c * P;
            double s = 0.0;
            for (std::size_t i = 0; i < P; ++i) s += gr[i] * xr[i];
            dg[c] += s;
          }
        }
      },
      record);
}

Var flatten(const Var& x) {
  Tensor out = Tensor::from_values({x->value.size()}, x->value.values());
  const bool record = want_grad({&x});
  return finish(
      std::move(out), {x},
      [](Node& n) {
        Var xp = n.parents[0];
        if (!xp->requires_grad) return;
        Tensor& dx = xp->ensure_grad();
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += n.grad[i];
      },
      record);
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a->value, b->value, "add");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
  const bool record = want_grad({&a, &b});
  return finish(
      std::move(out), {a, b},
      [](Node& n) {
        for (auto& p : n.parents) {
          if (!p->requires_grad) continue;
          Tensor& d = p->ensure_grad();
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += n.grad[i];
        }
      },
      record);
}

void backward(const Var& head) {
  if (!head) throw ConfigError("backward: null head");
  if (head->value.size() != 1) throw ShapeError("backward: head must be scalar");
  if (!head->requires_grad || (!head->backprop && head->parents.empty()))
    throw ConfigError("backward: head does not participate in differentiation");

  // topological order via iterative DFS
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(head.get(), 0);
  seen.insert(head.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* parent = node->parents[idx].get();
      ++idx;
      if (parent->requires_grad && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  head->ensure_grad()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backprop && node->grad_allocated) node->backprop(*node);
  }
}

void zero_grad(const std::vector<Var>& params) {
  for (const Var& p : params) {
    if (p->grad_allocated) p->grad.fill(0.0);
  }
}

}  // namespace fmseg
