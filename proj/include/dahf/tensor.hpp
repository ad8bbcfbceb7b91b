#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dahf {

/// Thrown when an input violates a documented precondition.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown on filesystem failures (unwritable paths, unreadable files).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major array of doubles. Rank-3 tensors are laid out CHW, rank-4
/// convolution weights OIHW.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);
  Tensor(std::vector<int> shape, std::vector<double> values);

  static Tensor chw(int c, int h, int w, double fill = 0.0) { return Tensor({c, h, w}, fill); }
  static Tensor scalar(double v) { return Tensor({1}, v); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // CHW views; only meaningful for rank-3 tensors.
  int channels() const { return shape_[0]; }
  int height() const { return shape_[1]; }
  int width() const { return shape_[2]; }
  int plane() const { return shape_[1] * shape_[2]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  double at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  std::span<double> channel(int c) {
    return std::span<double>(data_).subspan(static_cast<std::size_t>(c) * plane(), plane());
  }
  std::span<const double> channel(int c) const {
    return std::span<const double>(data_).subspan(static_cast<std::size_t>(c) * plane(), plane());
  }

  void fill(double v);
  Tensor reshaped(std::vector<int> shape) const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  std::string shape_string() const;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

std::size_t shape_numel(const std::vector<int>& shape);
std::string shape_string(const std::vector<int>& shape);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace dahf
