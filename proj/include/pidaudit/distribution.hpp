#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pidaudit {

/// Probability vector over a finite support.
class DiscreteDistribution {
 public:
  DiscreteDistribution() = default;
  /// Validates non-negativity and unit mass (1e-12); throws std::invalid_argument.
  explicit DiscreteDistribution(std::vector<double> p);

  [[nodiscard]] std::size_t size() const { return p_.size(); }
  [[nodiscard]] double operator[](std::size_t i) const { return p_[i]; }
  [[nodiscard]] std::span<const double> probs() const { return p_; }

 private:
  std::vector<double> p_;
};

/// Row-major p(x, y) with |X| rows and |Y| columns.
class JointDistribution {
 public:
  JointDistribution() = default;
  JointDistribution(std::size_t nx, std::size_t ny, std::vector<double> p);

  [[nodiscard]] std::size_t nx() const { return nx_; }
  [[nodiscard]] std::size_t ny() const { return ny_; }
  [[nodiscard]] double operator()(std::size_t x, std::size_t y) const { return p_[x * ny_ + y]; }
  [[nodiscard]] std::span<const double> data() const { return p_; }

  [[nodiscard]] std::vector<double> marginal_x() const;
  [[nodiscard]] std::vector<double> marginal_y() const;
  [[nodiscard]] double total_mass() const;

 private:
  std::size_t nx_ = 0;
  std::size_t ny_ = 0;
  std::vector<double> p_;
};

}  // namespace pidaudit
