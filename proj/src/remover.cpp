#include "cqcd/remover.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "cqcd/error.hpp"

namespace cqcd::restoration {
namespace {

constexpr double kOutputMargin = 1e-12;

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using ConstMap = Eigen::Map<const MatrixXd>;
using ConstRowMap = Eigen::Map<const RowVectorXd>;
using Map = Eigen::Map<MatrixXd>;
using RowMap = Eigen::Map<RowVectorXd>;

std::uint64_t fnv_mix(std::uint64_t h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xff;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Normalization backward in training mode; returns dL/d(input).
MatrixXd batchnorm_backward_train(const MatrixXd& dxhat, const MatrixXd& xhat, const RowVectorXd& invstd) {
  const double n = static_cast<double>(dxhat.rows());
  const RowVectorXd sum_d = dxhat.colwise().sum();
  const RowVectorXd sum_dx = (dxhat.array() * xhat.array()).colwise().sum();
  MatrixXd out = (n * dxhat).rowwise() - sum_d;
  out -= (xhat.array().rowwise() * sum_dx.array()).matrix();
  out = (out.array().rowwise() * (invstd.array() / n)).matrix();
  return out;
}

}  // namespace

BlurRemover::BlurRemover(int input_planes, int channels, const RemoverConfig& config, std::uint64_t seed)
    : config_(config), inputs_(input_planes), channels_(channels) {
  if (input_planes < 1 || channels < 1 || config.hidden < 1) throw ConfigError("invalid remover widths");
  const Layout l = layout();
  params_.assign(l.total, 0.0);
  std::mt19937_64 rng(seed ^ 0x72656d6f766572ull);
  auto xavier = [&](std::size_t offset, int fan_in, int fan_out) {
    const double k = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-k, k);
    for (std::size_t i = 0; i < static_cast<std::size_t>(fan_in) * fan_out; ++i) params_[offset + i] = u(rng);
  };
  const int h = config.hidden;
  xavier(l.w1, input_planes, h);
  xavier(l.w2, h, h);
  xavier(l.w3, h, channels);
  std::fill(params_.begin() + l.g1, params_.begin() + l.g1 + h, 1.0);
  std::fill(params_.begin() + l.g2, params_.begin() + l.g2 + h, 1.0);
  running_.assign(4 * static_cast<std::size_t>(h), 0.0);
  std::fill(running_.begin() + h, running_.begin() + 2 * h, 1.0);
  std::fill(running_.begin() + 3 * h, running_.end(), 1.0);
}

BlurRemover::Layout BlurRemover::layout() const {
  const std::size_t p = inputs_, h = config_.hidden, c = channels_;
  Layout l{};
  std::size_t o = 0;
  l.w1 = o, o += p * h;
  l.b1 = o, o += h;
  l.g1 = o, o += h;
  l.be1 = o, o += h;
  l.w2 = o, o += h * h;
  l.b2 = o, o += h;
  l.g2 = o, o += h;
  l.be2 = o, o += h;
  l.w3 = o, o += h * c;
  l.b3 = o, o += c;
  l.total = o;
  return l;
}

MatrixXd BlurRemover::forward(const MatrixXd& x, RemoverMode mode, Cache* cache) const {
  if (x.cols() != inputs_)
    throw DimensionError("remover: expected " + std::to_string(inputs_) + " input planes, got " +
                         std::to_string(x.cols()));
  const Layout l = layout();
  const int h = config_.hidden;
  const double* p = params_.data();
  ConstMap w1(p + l.w1, inputs_, h), w2(p + l.w2, h, h), w3(p + l.w3, h, channels_);
  ConstRowMap b1(p + l.b1, h), b2(p + l.b2, h), b3(p + l.b3, channels_);
  ConstRowMap g1(p + l.g1, h), be1(p + l.be1, h), g2(p + l.g2, h), be2(p + l.be2, h);

  Cache local;
  Cache& c = cache ? *cache : local;
  c.mode = mode;
  c.x = x;

  if (config_.linear) {
    c.z1 = (x * w1).rowwise() + b1;
    c.z2 = (c.z1 * w2).rowwise() + b2;
    c.y = (c.z2 * w3).rowwise() + b3;
    return c.y;
  }

  auto normalize = [&](const MatrixXd& z, const RowVectorXd& gamma, const RowVectorXd& beta,
                       std::size_t running_offset, MatrixXd& xhat, RowVectorXd& invstd) {
    const MatrixXd a = z.cwiseMax(0.0);
    RowVectorXd mean, var;
    if (mode == RemoverMode::kTrain) {
      mean = a.colwise().mean();
      var = (a.rowwise() - mean).array().square().colwise().mean();
    } else {
      mean = ConstRowMap(running_.data() + running_offset, h);
      var = ConstRowMap(running_.data() + running_offset + h, h);
    }
    invstd = (var.array() + config_.bn_epsilon).rsqrt();
    xhat = ((a.rowwise() - mean).array().rowwise() * invstd.array()).matrix();
    return MatrixXd(((xhat.array().rowwise() * gamma.array()).rowwise() + beta.array()).matrix());
  };

  c.z1 = (x * w1).rowwise() + b1;
  c.b1 = normalize(c.z1, g1, be1, 0, c.xhat1, c.invstd1);
  c.z2 = (c.b1 * w2).rowwise() + b2;
  c.b2 = normalize(c.z2, g2, be2, 2 * static_cast<std::size_t>(h), c.xhat2, c.invstd2);
  const MatrixXd z3 = (c.b2 * w3).rowwise() + b3;
  c.y = z3.unaryExpr([](double v) {
    const double s = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    return std::clamp(s, kOutputMargin, 1.0 - kOutputMargin);
  });
  return c.y;
}

void BlurRemover::backward(const Cache& c, const MatrixXd& grad_out, std::span<double> grad_params,
                           MatrixXd* grad_input) const {
  const Layout l = layout();
  const int h = config_.hidden;
  const double* p = params_.data();
  ConstMap w1(p + l.w1, inputs_, h), w2(p + l.w2, h, h), w3(p + l.w3, h, channels_);
  ConstRowMap g1(p + l.g1, h), g2(p + l.g2, h);
  const bool want_params = !grad_params.empty();
  if (want_params && grad_params.size() != params_.size())
    throw DimensionError("remover backward: gradient buffer size mismatch");
  double* gp = grad_params.data();

  if (config_.linear) {
    const MatrixXd& dz3 = grad_out;
    if (want_params) {
      Map(gp + l.w3, h, channels_) += c.z2.transpose() * dz3;
      RowMap(gp + l.b3, channels_) += dz3.colwise().sum();
    }
    const MatrixXd dz2 = dz3 * w3.transpose();
    if (want_params) {
      Map(gp + l.w2, h, h) += c.z1.transpose() * dz2;
      RowMap(gp + l.b2, h) += dz2.colwise().sum();
    }
    const MatrixXd dz1 = dz2 * w2.transpose();
    if (want_params) {
      Map(gp + l.w1, inputs_, h) += c.x.transpose() * dz1;
      RowMap(gp + l.b1, h) += dz1.colwise().sum();
    }
    if (grad_input) *grad_input = dz1 * w1.transpose();
    return;
  }

  auto normalize_backward = [&](const MatrixXd& db, const MatrixXd& xhat, const RowVectorXd& invstd,
                                const MatrixXd& z, const RowVectorXd& gamma, std::size_t g_off,
                                std::size_t be_off) {
    if (want_params) {
      RowMap(gp + g_off, h) += (db.array() * xhat.array()).colwise().sum().matrix();
      RowMap(gp + be_off, h) += db.colwise().sum();
    }
    const MatrixXd dxhat = (db.array().rowwise() * gamma.array()).matrix();
    MatrixXd da = c.mode == RemoverMode::kTrain
                      ? batchnorm_backward_train(dxhat, xhat, invstd)
                      : MatrixXd((dxhat.array().rowwise() * invstd.array()).matrix());
    return MatrixXd((da.array() * (z.array() > 0.0).cast<double>()).matrix());
  };

  const MatrixXd dz3 = (grad_out.array() * c.y.array() * (1.0 - c.y.array())).matrix();
  if (want_params) {
    Map(gp + l.w3, h, channels_) += c.b2.transpose() * dz3;
    RowMap(gp + l.b3, channels_) += dz3.colwise().sum();
  }
  const MatrixXd dz2 = normalize_backward(dz3 * w3.transpose(), c.xhat2, c.invstd2, c.z2, g2, l.g2, l.be2);
  if (want_params) {
    Map(gp + l.w2, h, h) += c.b1.transpose() * dz2;
    RowMap(gp + l.b2, h) += dz2.colwise().sum();
  }
  const MatrixXd dz1 = normalize_backward(dz2 * w2.transpose(), c.xhat1, c.invstd1, c.z1, g1, l.g1, l.be1);
  if (want_params) {
    Map(gp + l.w1, inputs_, h) += c.x.transpose() * dz1;
    RowMap(gp + l.b1, h) += dz1.colwise().sum();
  }
  if (grad_input) *grad_input = dz1 * w1.transpose();
}

void BlurRemover::freeze_statistics(const MatrixXd& x) {
  if (config_.linear) return;
  Cache c;
  forward(x, RemoverMode::kTrain, &c);
  const int h = config_.hidden;
  auto store = [&](const MatrixXd& z, std::size_t offset) {
    const MatrixXd a = z.cwiseMax(0.0);
    const RowVectorXd mean = a.colwise().mean();
    const RowVectorXd var = (a.rowwise() - mean).array().square().colwise().mean();
    RowMap(running_.data() + offset, h) = mean;
    RowMap(running_.data() + offset + h, h) = var;
  };
  store(c.z1, 0);
  store(c.z2, 2 * static_cast<std::size_t>(h));
}

std::uint64_t BlurRemover::activation_signature(const Cache& c) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const MatrixXd* z : {&c.z1, &c.z2}) {
    std::uint64_t word = 0;
    int bits = 0;
    for (Eigen::Index i = 0; i < z->size(); ++i) {
      word = (word << 1) | ((*z)(i) > 0.0 ? 1u : 0u);
      if (++bits == 64) h = fnv_mix(h, word), word = 0, bits = 0;
    }
    h = fnv_mix(h, word);
  }
  return h;
}

Eigen::MatrixXd assemble_input(const std::vector<std::vector<Image>>& planes) {
  std::size_t cols = 0;
  for (const auto& f : planes) cols += f.size();
  if (cols == 0) throw DimensionError("assemble_input: no planes");
  const std::size_t n = planes.front().front().pixel_count();
  MatrixXd x(n, cols);
  Eigen::Index col = 0;
  for (const auto& frame : planes)
    for (const auto& plane : frame) {
      if (plane.pixel_count() != n) throw DimensionError("assemble_input: plane size mismatch");
      x.col(col++) = Eigen::Map<const Eigen::VectorXd>(plane.data().data(), static_cast<Eigen::Index>(n));
    }
  return x;
}

std::vector<std::vector<Image>> split_input_gradient(const MatrixXd& grad,
                                                     const std::vector<std::vector<Image>>& like) {
  std::vector<std::vector<Image>> out(like.size());
  Eigen::Index col = 0;
  for (std::size_t t = 0; t < like.size(); ++t)
    for (const auto& plane : like[t]) {
      Image g(plane.height(), plane.width(), 1);
      Eigen::Map<Eigen::VectorXd>(g.data().data(), static_cast<Eigen::Index>(g.size())) = grad.col(col++);
      out[t].push_back(std::move(g));
    }
  return out;
}

Image matrix_to_image(const MatrixXd& m, int height, int width) {
  Image img(height, width, static_cast<int>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    Eigen::Map<Eigen::VectorXd>(img.plane(static_cast<int>(c)).data(), m.rows()) = m.col(c);
  return img;
}

Eigen::MatrixXd image_to_matrix(const Image& img) {
  MatrixXd m(static_cast<Eigen::Index>(img.pixel_count()), img.channels());
  for (int c = 0; c < img.channels(); ++c)
    m.col(c) = Eigen::Map<const Eigen::VectorXd>(img.plane(c).data(), static_cast<Eigen::Index>(img.pixel_count()));
  return m;
}

}  // namespace cqcd::restoration
