#include "pidaudit/distribution.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace pidaudit {
namespace {

void check_probabilities(std::span<const double> p, const char* what) {
  if (p.empty()) throw std::invalid_argument(std::string(what) + ": empty support");
  // Neumaier summation so large supports do not drift past the tolerance.
  double mass = 0.0;
  double carry = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string(what) + ": negative or non-finite probability");
    }
    const double t = mass + v;
    carry += std::abs(mass) >= v ? (mass - t) + v : (v - t) + mass;
    mass = t;
  }
  mass += carry;
  if (std::abs(mass - 1.0) > 1e-12) {
    throw std::invalid_argument(std::string(what) + ": mass " + std::to_string(mass) + " != 1");
  }
}

}  // namespace

DiscreteDistribution::DiscreteDistribution(std::vector<double> p) : p_(std::move(p)) {
  check_probabilities(p_, "DiscreteDistribution");
}

JointDistribution::JointDistribution(std::size_t nx, std::size_t ny, std::vector<double> p)
    : nx_(nx), ny_(ny), p_(std::move(p)) {
  if (p_.size() != nx_ * ny_) throw std::invalid_argument("JointDistribution: size mismatch");
  check_probabilities(p_, "JointDistribution");
}

std::vector<double> JointDistribution::marginal_x() const {
  std::vector<double> m(nx_, 0.0);
  for (std::size_t x = 0; x < nx_; ++x)
    for (std::size_t y = 0; y < ny_; ++y) m[x] += p_[x * ny_ + y];
  return m;
}

std::vector<double> JointDistribution::marginal_y() const {
  std::vector<double> m(ny_, 0.0);
  for (std::size_t x = 0; x < nx_; ++x)
    for (std::size_t y = 0; y < ny_; ++y) m[y] += p_[x * ny_ + y];
  return m;
}

double JointDistribution::total_mass() const { return std::accumulate(p_.begin(), p_.end(), 0.0); }

}  // namespace pidaudit
