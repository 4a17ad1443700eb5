#include "cqcd/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "cqcd/error.hpp"

namespace cqcd::restoration {
namespace {

// Planar multi-channel buffer for the conv backend.
struct Planes {
  int channels = 0, h = 0, w = 0;
  std::vector<double> v;

  Planes() = default;
  Planes(int c, int h_, int w_) : channels(c), h(h_), w(w_), v(static_cast<std::size_t>(c) * h_ * w_, 0.0) {}
  double& at(int c, int y, int x) { return v[(static_cast<std::size_t>(c) * h + y) * w + x]; }
  double at(int c, int y, int x) const { return v[(static_cast<std::size_t>(c) * h + y) * w + x]; }
};

struct ConvLayout {
  int in, width;
  std::size_t w1, b1, w2, b2, w3, b3, total;
};

ConvLayout conv_layout(int in, int width) {
  ConvLayout l{in, width, 0, 0, 0, 0, 0, 0, 0};
  std::size_t o = 0;
  l.w1 = o, o += static_cast<std::size_t>(width) * in * 9;
  l.b1 = o, o += width;
  l.w2 = o, o += static_cast<std::size_t>(width) * width * 9;
  l.b2 = o, o += width;
  l.w3 = o, o += static_cast<std::size_t>(2) * (2 * width) * 9;
  l.b3 = o, o += 2;
  l.total = o;
  return l;
}

Planes conv3x3(const Planes& in, const double* weights, const double* bias, int out_channels) {
  Planes out(out_channels, in.h, in.w);
  for (int o = 0; o < out_channels; ++o) {
    for (int y = 0; y < in.h; ++y)
      for (int x = 0; x < in.w; ++x) out.at(o, y, x) = bias[o];
    for (int i = 0; i < in.channels; ++i)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const double wv = weights[((static_cast<std::size_t>(o) * in.channels + i) * 3 + ky) * 3 + kx];
          if (wv == 0.0) continue;
          for (int y = std::max(0, 1 - ky); y < std::min(in.h, in.h + 1 - ky); ++y)
            for (int x = std::max(0, 1 - kx); x < std::min(in.w, in.w + 1 - kx); ++x)
              out.at(o, y, x) += wv * in.at(i, y + ky - 1, x + kx - 1);
        }
  }
  return out;
}

void conv3x3_backward(const Planes& in, const double* weights, const Planes& dout, double* dweights,
                      double* dbias, Planes* din) {
  for (int o = 0; o < dout.channels; ++o) {
    double sb = 0.0;
    for (int y = 0; y < dout.h; ++y)
      for (int x = 0; x < dout.w; ++x) sb += dout.at(o, y, x);
    dbias[o] += sb;
    for (int i = 0; i < in.channels; ++i)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const std::size_t wi = ((static_cast<std::size_t>(o) * in.channels + i) * 3 + ky) * 3 + kx;
          double sw = 0.0;
          const double wv = weights[wi];
          for (int y = std::max(0, 1 - ky); y < std::min(in.h, in.h + 1 - ky); ++y)
            for (int x = std::max(0, 1 - kx); x < std::min(in.w, in.w + 1 - kx); ++x) {
              const double g = dout.at(o, y, x);
              sw += g * in.at(i, y + ky - 1, x + kx - 1);
              if (din) din->at(i, y + ky - 1, x + kx - 1) += wv * g;
            }
          dweights[wi] += sw;
        }
  }
}

struct ConvForward {
  Planes input, z1, a1, pooled, z2, a2, concat, z3;
};

Planes to_planes(const std::vector<Image>& feats) {
  Planes p(static_cast<int>(feats.size()), feats[0].height(), feats[0].width());
  for (int c = 0; c < p.channels; ++c) std::copy(feats[c].data().begin(), feats[c].data().end(), p.v.begin() + static_cast<std::size_t>(c) * p.h * p.w);
  return p;
}

ConvForward conv_forward(const std::vector<double>& params, const ConvLayout& l, const std::vector<Image>& feats) {
  ConvForward f;
  f.input = to_planes(feats);
  const int h = f.input.h, w = f.input.w, k = l.width;
  f.z1 = conv3x3(f.input, &params[l.w1], &params[l.b1], k);
  f.a1 = f.z1;
  for (auto& v : f.a1.v) v = std::max(v, 0.0);
  const int hp = (h + 1) / 2, wp = (w + 1) / 2;
  f.pooled = Planes(k, hp, wp);
  for (int c = 0; c < k; ++c)
    for (int y = 0; y < hp; ++y)
      for (int x = 0; x < wp; ++x) {
        double s = 0.0;
        int n = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx)
            if (2 * y + dy < h && 2 * x + dx < w) s += f.a1.at(c, 2 * y + dy, 2 * x + dx), ++n;
        f.pooled.at(c, y, x) = s / n;
      }
  f.z2 = conv3x3(f.pooled, &params[l.w2], &params[l.b2], k);
  f.a2 = f.z2;
  for (auto& v : f.a2.v) v = std::max(v, 0.0);
  f.concat = Planes(2 * k, h, w);
  for (int c = 0; c < k; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        f.concat.at(c, y, x) = f.a1.at(c, y, x);
        f.concat.at(k + c, y, x) = f.a2.at(c, y / 2, x / 2);
      }
  f.z3 = conv3x3(f.concat, &params[l.w3], &params[l.b3], 2);
  return f;
}

std::uint64_t fnv_mix(std::uint64_t h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xff;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

std::string to_string(Backend backend) { return backend == Backend::kGrid ? "grid" : "conv"; }

Backend parse_backend(const std::string& name) {
  if (name == "grid" || name == "grid-direct") return Backend::kGrid;
  if (name == "conv" || name == "conv-net") return Backend::kConv;
  throw ConfigError("unknown backend '" + name + "' (expected grid or conv)");
}

DeformationEstimator::DeformationEstimator(const EstimatorConfig& config, int frames, int height,
                                           int width, int feature_planes, std::uint64_t seed)
    : config_(config), frames_(frames), height_(height), width_(width), feature_planes_(feature_planes) {
  if (config.grid_spacing < 1) throw ConfigError("grid_spacing must be >= 1");
  if (!(config.displacement_scale > 0.0)) throw ConfigError("displacement_scale must be > 0");
  if (config.backend == Backend::kGrid) {
    grid_h_ = (height - 1 + config.grid_spacing - 1) / config.grid_spacing + 1;
    grid_w_ = (width - 1 + config.grid_spacing - 1) / config.grid_spacing + 1;
    params_.assign(static_cast<std::size_t>(frames) * 2 * grid_h_ * grid_w_, 0.0);
    return;
  }
  if (config.conv_width < 1) throw ConfigError("conv_width must be >= 1");
  const ConvLayout l = conv_layout(feature_planes, config.conv_width);
  params_.assign(l.total, 0.0);
  std::mt19937_64 rng(seed ^ 0x6573746d61746f72ull);
  auto xavier = [&](std::size_t offset, int cin, int cout) {
    const double k = std::sqrt(6.0 / (9.0 * (cin + cout)));
    std::uniform_real_distribution<double> u(-k, k);
    for (std::size_t i = 0; i < static_cast<std::size_t>(cin) * cout * 9; ++i) params_[offset + i] = u(rng);
  };
  xavier(l.w1, feature_planes, config.conv_width);
  xavier(l.w2, config.conv_width, config.conv_width);
  // The output layer stays zero, so a fresh estimator emits identity maps.
}

std::size_t DeformationEstimator::grid_index(int frame, int component, int gy, int gx) const {
  return ((static_cast<std::size_t>(frame) * 2 + component) * grid_h_ + gy) * grid_w_ + gx;
}

DisplacementField DeformationEstimator::grid_field(int frame) const {
  DisplacementField f(height_, width_);
  const double s = config_.displacement_scale;
  const double inv_spacing = 1.0 / config_.grid_spacing;
  std::vector<double> ctrl(static_cast<std::size_t>(2) * grid_h_ * grid_w_);
  for (int c = 0; c < 2; ++c)
    for (int gy = 0; gy < grid_h_; ++gy)
      for (int gx = 0; gx < grid_w_; ++gx)
        ctrl[(c * grid_h_ + gy) * grid_w_ + gx] = s * std::tanh(params_[grid_index(frame, c, gy, gx)] / s);
  for (int y = 0; y < height_; ++y) {
    const double gyf = y * inv_spacing;
    const int y0 = std::min(static_cast<int>(gyf), grid_h_ - 1);
    const int y1 = std::min(y0 + 1, grid_h_ - 1);
    const double fy = gyf - y0;
    for (int x = 0; x < width_; ++x) {
      const double gxf = x * inv_spacing;
      const int x0 = std::min(static_cast<int>(gxf), grid_w_ - 1);
      const int x1 = std::min(x0 + 1, grid_w_ - 1);
      const double fx = gxf - x0;
      for (int c = 0; c < 2; ++c) {
        const double* g = &ctrl[static_cast<std::size_t>(c) * grid_h_ * grid_w_];
        const double v = (1 - fy) * ((1 - fx) * g[y0 * grid_w_ + x0] + fx * g[y0 * grid_w_ + x1]) +
                         fy * ((1 - fx) * g[y1 * grid_w_ + x0] + fx * g[y1 * grid_w_ + x1]);
        (c == 0 ? f.dx : f.dy)[f.index(y, x)] = v;
      }
    }
  }
  return f;
}

void DeformationEstimator::grid_backward(int frame, const DisplacementField& grad,
                                         std::span<double> grad_params) const {
  const double s = config_.displacement_scale;
  const double inv_spacing = 1.0 / config_.grid_spacing;
  std::vector<double> gctrl(static_cast<std::size_t>(2) * grid_h_ * grid_w_, 0.0);
  for (int y = 0; y < height_; ++y) {
    const double gyf = y * inv_spacing;
    const int y0 = std::min(static_cast<int>(gyf), grid_h_ - 1);
    const int y1 = std::min(y0 + 1, grid_h_ - 1);
    const double fy = gyf - y0;
    for (int x = 0; x < width_; ++x) {
      const double gxf = x * inv_spacing;
      const int x0 = std::min(static_cast<int>(gxf), grid_w_ - 1);
      const int x1 = std::min(x0 + 1, grid_w_ - 1);
      const double fx = gxf - x0;
      for (int c = 0; c < 2; ++c) {
        const double g = (c == 0 ? grad.dx : grad.dy)[grad.index(y, x)];
        double* gc = &gctrl[static_cast<std::size_t>(c) * grid_h_ * grid_w_];
        gc[y0 * grid_w_ + x0] += g * (1 - fy) * (1 - fx);
        gc[y0 * grid_w_ + x1] += g * (1 - fy) * fx;
        gc[y1 * grid_w_ + x0] += g * fy * (1 - fx);
        gc[y1 * grid_w_ + x1] += g * fy * fx;
      }
    }
  }
  for (int c = 0; c < 2; ++c)
    for (int gy = 0; gy < grid_h_; ++gy)
      for (int gx = 0; gx < grid_w_; ++gx) {
        const std::size_t pi = grid_index(frame, c, gy, gx);
        const double th = std::tanh(params_[pi] / s);
        grad_params[pi] += gctrl[(c * grid_h_ + gy) * grid_w_ + gx] * (1.0 - th * th);
      }
}

std::vector<DisplacementField> DeformationEstimator::estimate(const FeatureSet& features) const {
  std::vector<DisplacementField> fields(frames_);
  if (config_.backend == Backend::kGrid) {
    for (int t = 0; t < frames_; ++t) fields[t] = grid_field(t);
    return fields;
  }
  if (static_cast<int>(features.size()) != frames_) throw DimensionError("estimate: feature set has wrong frame count");
  const ConvLayout l = conv_layout(feature_planes_, config_.conv_width);
  const double s = config_.displacement_scale;
  for (int t = 0; t < frames_; ++t) {
    if (static_cast<int>(features[t].size()) != feature_planes_) throw DimensionError("estimate: wrong plane count");
    const ConvForward f = conv_forward(params_, l, features[t]);
    fields[t] = DisplacementField(height_, width_);
    for (std::size_t i = 0; i < fields[t].pixel_count(); ++i) {
      fields[t].dx[i] = s * std::tanh(f.z3.v[i] / s);
      fields[t].dy[i] = s * std::tanh(f.z3.v[fields[t].pixel_count() + i] / s);
    }
  }
  return fields;
}

void DeformationEstimator::backward(const FeatureSet& features, std::span<const DisplacementField> grad_fields,
                                    std::span<double> grad_params) const {
  if (static_cast<int>(grad_fields.size()) != frames_) throw DimensionError("backward: wrong frame count");
  if (grad_params.size() != params_.size()) throw DimensionError("backward: gradient buffer size mismatch");
  if (config_.backend == Backend::kGrid) {
    for (int t = 0; t < frames_; ++t) grid_backward(t, grad_fields[t], grad_params);
    return;
  }
  const ConvLayout l = conv_layout(feature_planes_, config_.conv_width);
  const double s = config_.displacement_scale;
  const int k = config_.conv_width;
  for (int t = 0; t < frames_; ++t) {
    const ConvForward f = conv_forward(params_, l, features[t]);
    const std::size_t n = static_cast<std::size_t>(height_) * width_;
    Planes dz3(2, height_, width_);
    for (std::size_t i = 0; i < n; ++i) {
      const double tx = std::tanh(f.z3.v[i] / s), ty = std::tanh(f.z3.v[n + i] / s);
      dz3.v[i] = grad_fields[t].dx[i] * (1 - tx * tx);
      dz3.v[n + i] = grad_fields[t].dy[i] * (1 - ty * ty);
    }
    Planes dconcat(2 * k, height_, width_);
    conv3x3_backward(f.concat, &params_[l.w3], dz3, &grad_params[l.w3], &grad_params[l.b3], &dconcat);

    Planes da1(k, height_, width_);
    Planes da2(k, f.a2.h, f.a2.w);
    for (int c = 0; c < k; ++c)
      for (int y = 0; y < height_; ++y)
        for (int x = 0; x < width_; ++x) {
          da1.at(c, y, x) = dconcat.at(c, y, x);
          da2.at(c, y / 2, x / 2) += dconcat.at(k + c, y, x);
        }
    Planes dz2 = da2;
    for (std::size_t i = 0; i < dz2.v.size(); ++i)
      if (f.z2.v[i] <= 0.0) dz2.v[i] = 0.0;
    Planes dpooled(k, f.pooled.h, f.pooled.w);
    conv3x3_backward(f.pooled, &params_[l.w2], dz2, &grad_params[l.w2], &grad_params[l.b2], &dpooled);
    for (int c = 0; c < k; ++c)
      for (int y = 0; y < f.pooled.h; ++y)
        for (int x = 0; x < f.pooled.w; ++x) {
          int cnt = 0;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
              if (2 * y + dy < height_ && 2 * x + dx < width_) ++cnt;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
              if (2 * y + dy < height_ && 2 * x + dx < width_)
                da1.at(c, 2 * y + dy, 2 * x + dx) += dpooled.at(c, y, x) / cnt;
        }
    Planes dz1 = da1;
    for (std::size_t i = 0; i < dz1.v.size(); ++i)
      if (f.z1.v[i] <= 0.0) dz1.v[i] = 0.0;
    conv3x3_backward(f.input, &params_[l.w1], dz1, &grad_params[l.w1], &grad_params[l.b1], nullptr);
  }
}

void DeformationEstimator::center_across_frames() {
  if (config_.backend != Backend::kGrid || frames_ < 2) return;
  const std::size_t block = static_cast<std::size_t>(2) * grid_h_ * grid_w_;
  for (std::size_t i = 0; i < block; ++i) {
    double mean = 0.0;
    for (int t = 0; t < frames_; ++t) mean += params_[t * block + i];
    mean /= frames_;
    for (int t = 0; t < frames_; ++t) params_[t * block + i] -= mean;
  }
}

std::uint64_t DeformationEstimator::activation_signature(const FeatureSet& features) const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  if (config_.backend == Backend::kGrid) return h;
  const ConvLayout l = conv_layout(feature_planes_, config_.conv_width);
  for (int t = 0; t < frames_; ++t) {
    const ConvForward f = conv_forward(params_, l, features[t]);
    std::uint64_t word = 0;
    int bits = 0;
    auto push = [&](bool b) {
      word = (word << 1) | (b ? 1u : 0u);
      if (++bits == 64) h = fnv_mix(h, word), word = 0, bits = 0;
    };
    for (double v : f.z1.v) push(v > 0.0);
    for (double v : f.z2.v) push(v > 0.0);
    h = fnv_mix(h, word);
  }
  return h;
}

}  // namespace cqcd::restoration
