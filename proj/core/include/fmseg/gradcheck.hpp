#pragma once

#include <functional>

#include "fmseg/autodiff.hpp"

namespace fmseg {

/// Central finite differences of loss_fn with respect to param's values.
/// loss_fn must recompute the loss from the current parameter contents (it is
/// re-evaluated 2 * size times).
Tensor finite_difference_grad(const Var& param, const std::function<double()>& loss_fn,
                              double h = 1e-5);

/// max_i |a_i - n_i| / max(|a_i| + |n_i|, floor)
double max_relative_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-6);

/// Runs backward() on the loss built by make_loss and compares every
/// parameter's analytic gradient against finite differences.
/// Returns the worst relative error across all params.
double gradient_check(const std::vector<Var>& params, const std::function<Var()>& make_loss,
                      double h = 1e-5);

}  // namespace fmseg
