#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace pidaudit {

/// Dense row-major array of doubles. Ops treat the last axis as columns and
/// fold every leading axis into rows.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
  }
  static Tensor vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
  }

  [[nodiscard]] const std::vector<std::size_t>& shape() const { return shape_; }
  [[nodiscard]] std::size_t rank() const { return shape_.size(); }
  [[nodiscard]] std::size_t size() const { return values_.size(); }
  [[nodiscard]] std::size_t cols() const { return shape_.empty() ? 1 : shape_.back(); }
  [[nodiscard]] std::size_t rows() const { return cols() == 0 ? 0 : size() / cols(); }

  [[nodiscard]] std::span<double> data() { return values_; }
  [[nodiscard]] std::span<const double> data() const { return values_; }
  [[nodiscard]] const std::vector<double>& values() const { return values_; }
  [[nodiscard]] std::vector<double>& values() { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  [[nodiscard]] double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  [[nodiscard]] Tensor reshaped(std::vector<std::size_t> shape) const;
  [[nodiscard]] bool all_finite() const;
  void fill(double v);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

std::size_t shape_volume(std::span<const std::size_t> shape);

}  // namespace pidaudit
