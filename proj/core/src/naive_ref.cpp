#include "fmseg/naive_ref.hpp"

#include <algorithm>
#include <cmath>

namespace fmseg {
namespace naive {

std::vector<double> percentiles(const std::vector<double>& values) {
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out;
  for (int p = 1; p <= 99; ++p) {
    const double rank = (static_cast<double>(p) / 100.0) * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = static_cast<std::size_t>(std::ceil(rank));
    const double frac = rank - std::floor(rank);
    out.push_back(sorted[lo] * (1.0 - frac) + sorted[hi] * frac);
  }
  return out;
}

std::vector<double> cumulative_hist(const std::vector<double>& values) {
  std::vector<double> out;
  for (int i = 1; i <= 13; ++i) {
    const double t = 0.05 * i;
    std::size_t count = 0;
    for (double v : values) {
      if (v <= t) ++count;
    }
    out.push_back(static_cast<double>(count) / static_cast<double>(values.size()));
  }
  return out;
}

std::vector<double> moments(const std::vector<double>& values) {
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= n;
  double skew = 0.0, kurt = 0.0;
  if (var >= 1e-24) {
    const double sd = std::sqrt(var);
    for (double v : values) {
      const double z = (v - mean) / sd;
      skew += z * z * z;
      kurt += z * z * z * z;
    }
    skew /= n;
    kurt /= n;
  }
  return {mean, var, skew, kurt};
}

// Exhaustive search over every (feature, midpoint) candidate, re-deriving the
// group statistics from scratch per candidate. Accumulation follows the same
// canonical order as the production search (node totals in given row order,
// left side in (value, row)-sorted order, right side derived from totals) so
// that equal candidates compare bitwise equal.
SplitChoice best_split(const DataMatrix& X, const std::vector<double>& y,
                       const std::vector<std::uint32_t>& rows) {
  SplitChoice best;
  const std::size_t n = rows.size();
  if (n < 2) return best;

  double sum_y = 0.0, sum_y2 = 0.0;
  for (std::uint32_t r : rows) {
    sum_y += y[r];
    sum_y2 += y[r] * y[r];
  }
  const double ss_total = sum_y2 - sum_y * sum_y / static_cast<double>(n);

  for (std::size_t f = 0; f < X.cols; ++f) {
    std::vector<std::pair<double, std::uint32_t>> order;
    for (std::uint32_t r : rows) order.emplace_back(X.at(r, f), r);
    std::sort(order.begin(), order.end());
    for (std::size_t i = 0; i + 1 < n; ++i) {
      if (order[i].first == order[i + 1].first) continue;
      const double threshold = (order[i].first + order[i + 1].first) / 2.0;
      double ls = 0.0, ls2 = 0.0;
      std::size_t nl = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (order[j].first <= threshold) {
          ls += y[order[j].second];
          ls2 += y[order[j].second] * y[order[j].second];
          ++nl;
        }
      }
      const std::size_t nr = n - nl;
      const double rs = sum_y - ls;
      const double rs2 = sum_y2 - ls2;
      const double ss_l = ls2 - ls * ls / static_cast<double>(nl);
      const double ss_r = rs2 - rs * rs / static_cast<double>(nr);
      const double reduction = ss_total - ss_l - ss_r;
      if (reduction > best.reduction) {
        best.found = true;
        best.feature = static_cast<int>(f);
        best.threshold = threshold;
        best.reduction = reduction;
      }
    }
  }
  return best;
}

double f1_score(const std::vector<int>& mask, const std::vector<int>& pred) {
  std::size_t m = 0, p = 0, both = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) ++m;
    if (pred[i]) ++p;
    if (mask[i] && pred[i]) ++both;
  }
  if (m == 0 && p == 0) return 1.0;
  if (m == 0 || p == 0) return 0.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(m + p);
}

}  // namespace naive
}  // namespace fmseg
