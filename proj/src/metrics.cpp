#include "cqcd/metrics.hpp"

#include <array>
#include <cmath>
#include <limits>

#include "cqcd/error.hpp"

namespace cqcd {
namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

std::array<double, kSsimWindow> gaussian_window() {
  std::array<double, kSsimWindow> w{};
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double t = i - kSsimWindow / 2;
    w[i] = std::exp(-t * t / (2.0 * kSsimSigma * kSsimSigma));
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

// Separable "valid" filtering of a single plane.
std::vector<double> filter_valid(std::span<const double> src, int h, int w,
                                 const std::array<double, kSsimWindow>& k) {
  const int ow = w - kSsimWindow + 1;
  const int oh = h - kSsimWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int j = 0; j < kSsimWindow; ++j) s += k[j] * src[y * w + x + j];
      rows[y * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int j = 0; j < kSsimWindow; ++j) s += k[j] * rows[(y + j) * ow + x];
      out[y * ow + x] = s;
    }
  return out;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw DimensionError("psnr: shape mismatch");
  if (a.empty()) throw DimensionError("psnr: empty image");
  double total = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    auto pa = a.plane(c);
    auto pb = b.plane(c);
    double se = 0.0;
    for (std::size_t i = 0; i < pa.size(); ++i) {
      const double d = pa[i] - pb[i];
      se += d * d;
    }
    const double mse = se / static_cast<double>(pa.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    total += 10.0 * std::log10(1.0 / mse);
  }
  return total / a.channels();
}

Image to_gray(const Image& img) {
  if (img.channels() == 1) return img;
  if (img.channels() != 3) throw DimensionError("to_gray: expected 1 or 3 channels");
  Image out(img.height(), img.width(), 1);
  auto r = img.plane(0), g = img.plane(1), b = img.plane(2);
  auto dst = out.plane(0);
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  return out;
}

double ssim(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw DimensionError("ssim: shape mismatch");
  if (a.height() < kSsimWindow || a.width() < kSsimWindow)
    throw DimensionError("ssim: image smaller than the 11x11 window");
  const Image ga = to_gray(a);
  const Image gb = to_gray(b);
  const int h = ga.height(), w = ga.width();
  const auto k = gaussian_window();

  auto pa = ga.plane(0), pb = gb.plane(0);
  std::vector<double> aa(pa.size()), bb(pa.size()), ab(pa.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    aa[i] = pa[i] * pa[i];
    bb[i] = pb[i] * pb[i];
    ab[i] = pa[i] * pb[i];
  }
  const auto mu_a = filter_valid(pa, h, w, k);
  const auto mu_b = filter_valid(pb, h, w, k);
  const auto e_aa = filter_valid(aa, h, w, k);
  const auto e_bb = filter_valid(bb, h, w, k);
  const auto e_ab = filter_valid(ab, h, w, k);

  double sum = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma;
    const double vb = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    sum += ((2 * ma * mb + kSsimC1) * (2 * cov + kSsimC2)) /
           ((ma * ma + mb * mb + kSsimC1) * (va + vb + kSsimC2));
  }
  return sum / static_cast<double>(mu_a.size());
}

Image average_frames(std::span<const Image> frames) {
  if (frames.empty()) throw DimensionError("average_frames: empty sequence");
  validate_sequence(frames);
  Image out(frames[0].height(), frames[0].width(), frames[0].channels());
  auto dst = out.data();
  for (const auto& f : frames) {
    auto src = f.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  const double inv = 1.0 / static_cast<double>(frames.size());
  for (auto& v : dst) v *= inv;
  return out;
}

}  // namespace cqcd
