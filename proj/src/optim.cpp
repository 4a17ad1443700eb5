#include "cqcd/optim.hpp"

#include <cmath>

#include "cqcd/error.hpp"

namespace cqcd::restoration {

void RmsProp::step(std::span<double> params, std::span<const double> grad, double lr) {
  if (params.size() != grad.size() || params.size() != square_avg_.size())
    throw DimensionError("RmsProp: size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    square_avg_[i] = alpha_ * square_avg_[i] + (1.0 - alpha_) * grad[i] * grad[i];
    params[i] -= lr * grad[i] / (std::sqrt(square_avg_[i]) + eps_);
  }
}

void Adam::step(std::span<double> params, std::span<const double> grad, double lr) {
  if (params.size() != grad.size() || params.size() != m_.size()) throw DimensionError("Adam: size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

}  // namespace cqcd::restoration
