#include "fmseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fmseg {

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
  std::size_t n = 1;
  for (std::size_t e : shape_) n *= e;
  data_.assign(n, fill);
}

Tensor Tensor::scalar(double v) {
  Tensor t({1});
  t.data_[0] = v;
  return t;
}

Tensor Tensor::from_values(std::vector<std::size_t> shape, std::vector<double> values) {
  Tensor t;
  t.shape_ = std::move(shape);
  std::size_t n = 1;
  for (std::size_t e : t.shape_) n *= e;
  if (n != values.size()) throw ShapeError("from_values: element count does not match shape");
  t.data_ = std::move(values);
  return t;
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

double Tensor::min() const { return *std::min_element(data_.begin(), data_.end()); }

double Tensor::max() const { return *std::max_element(data_.begin(), data_.end()); }

std::string Tensor::shape_str() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape_[i]);
  }
  return s + "]";
}

void check_finite(const Tensor& t, const char* where) {
  if (!t.all_finite()) throw NumericError(std::string(where) + ": non-finite values");
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* where) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(where) + ": shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
}

}  // namespace fmseg
