#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cqcd::restoration {

/// Gradient-RMS scaling: v <- a v + (1 - a) g^2, p <- p - lr g / (sqrt(v) + eps).
class RmsProp {
 public:
  explicit RmsProp(std::size_t n = 0, double alpha = 0.99, double eps = 1e-8)
      : alpha_(alpha), eps_(eps), square_avg_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad, double lr);

  std::vector<double>& square_avg() { return square_avg_; }
  const std::vector<double>& square_avg() const { return square_avg_; }

 private:
  double alpha_, eps_;
  std::vector<double> square_avg_;
};

/// RMS scaling with momentum and bias correction (first and second moments).
class Adam {
 public:
  explicit Adam(std::size_t n = 0, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad, double lr);

  std::vector<double>& first_moment() { return m_; }
  std::vector<double>& second_moment() { return v_; }
  const std::vector<double>& first_moment() const { return m_; }
  const std::vector<double>& second_moment() const { return v_; }
  long long steps() const { return t_; }
  void set_steps(long long t) { t_ = t; }

 private:
  double beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  long long t_ = 0;
};

}  // namespace cqcd::restoration
