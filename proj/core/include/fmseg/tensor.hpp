#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fmseg/common.hpp"

namespace fmseg {

/// Dense n-dimensional array of doubles in row-major order.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }
  static Tensor scalar(double v);
  static Tensor from_values(std::vector<std::size_t> shape, std::vector<double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_[axis]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // rank-3 (C,H,W) accessor
  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }
  // rank-2 (H,W) accessor
  double& at2(std::size_t y, std::size_t x) { return data_[y * shape_[1] + x]; }
  double at2(std::size_t y, std::size_t x) const { return data_[y * shape_[1] + x]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  void fill(double v);

  double sum() const;
  double min() const;
  double max() const;

  std::string shape_str() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// Throws NumericError if t contains NaN or Inf.
void check_finite(const Tensor& t, const char* where);

/// Throws ShapeError unless a and b have identical shapes.
void check_same_shape(const Tensor& a, const Tensor& b, const char* where);

}  // namespace fmseg
