#include "fmseg/gradcheck.hpp"

#include <cmath>

namespace fmseg {

Tensor finite_difference_grad(const Var& param, const std::function<double()>& loss_fn,
                              double h) {
  Tensor grad = Tensor::zeros_like(param->value);
  Tensor& pv = param->value;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double keep = pv[i];
    pv[i] = keep + h;
    const double up = loss_fn();
    pv[i] = keep - h;
    const double down = loss_fn();
    pv[i] = keep;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double max_relative_error(const Tensor& analytic, const Tensor& numeric, double floor) {
  check_same_shape(analytic, numeric, "max_relative_error");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max(std::abs(analytic[i]) + std::abs(numeric[i]), floor);
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

double gradient_check(const std::vector<Var>& params, const std::function<Var()>& make_loss,
                      double h) {
  for (const Var& p : params) {
    p->requires_grad = true;
    if (p->grad_allocated) p->grad.fill(0.0);
  }
  Var loss = make_loss();
  backward(loss);
  double worst = 0.0;
  for (const Var& p : params) {
    Tensor analytic = p->grad_allocated ? p->grad : Tensor::zeros_like(p->value);
    Tensor numeric = finite_difference_grad(p, [&make_loss] { return make_loss()->value[0]; }, h);
    worst = std::max(worst, max_relative_error(analytic, numeric));
  }
  return worst;
}

}  // namespace fmseg
