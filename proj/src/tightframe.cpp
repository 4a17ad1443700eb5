#include "cqcd/tightframe.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include "cqcd/error.hpp"

namespace cqcd::tightframe {
namespace {

int wrap(int i, int n) {
  i %= n;
  return i < 0 ? i + n : i;
}

// out(y, x) = sum_j f[j] * in(y, x + s*(j - c)) along rows (horizontal) or
// columns (vertical); s = -1 flips the filter.
void filter_1d(std::span<const double> in, std::span<double> out, int h, int w,
               const std::vector<double>& f, bool horizontal, bool flip) {
  const int c = static_cast<int>(f.size()) / 2;
  const int s = flip ? -1 : 1;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int j = 0; j < static_cast<int>(f.size()); ++j) {
        if (f[j] == 0.0) continue;
        const int off = s * (j - c);
        acc += horizontal ? f[j] * in[y * w + wrap(x + off, w)] : f[j] * in[wrap(y + off, h) * w + x];
      }
      out[y * w + x] = acc;
    }
}

void require_plane(const Image& plane, const FilterBank& bank) {
  if (plane.channels() != 1) throw DimensionError("tight-frame transform expects a single-channel plane");
  if (plane.height() < bank.support() || plane.width() < bank.support())
    throw DimensionError("image smaller than the filter support");
}

void accumulate(Image& dst, const Image& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

int FilterBank::support() const {
  int s = 0;
  for (const auto& f : filters) s = std::max(s, static_cast<int>(f.size()));
  return s;
}

std::vector<double> FilterBank::kernel(int p, int q) const {
  const auto& row = filters.at(p);
  const auto& col = filters.at(q);
  std::vector<double> k(col.size() * row.size());
  for (std::size_t i = 0; i < col.size(); ++i)
    for (std::size_t j = 0; j < row.size(); ++j) k[i * row.size() + j] = col[i] * row[j];
  return k;
}

FilterBank build_filter_bank() {
  const double a = std::sqrt(6.0) / 6.0;
  const double b = 3.0 * std::sqrt(2.0) / 18.0;
  return FilterBank{{{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}, {a, 0.0, -a}, {b, -2.0 * b, b}}};
}

double uep_residual(const FilterBank& bank, int samples) {
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    const double xi = 2.0 * std::numbers::pi * s / samples;
    double total = 0.0;
    for (const auto& f : bank.filters) {
      const int c = static_cast<int>(f.size()) / 2;
      std::complex<double> resp = 0.0;
      for (int k = 0; k < static_cast<int>(f.size()); ++k)
        resp += f[k] * std::polar(1.0, -static_cast<double>(k - c) * xi);
      total += std::norm(resp);
    }
    worst = std::max(worst, std::abs(total - 1.0));
  }
  return worst;
}

std::vector<std::pair<int, int>> highpass_order(const FilterBank& bank) {
  std::vector<std::pair<int, int>> order;
  for (int p = 0; p < bank.filter_count(); ++p)
    for (int q = 0; q < bank.filter_count(); ++q)
      if (p != 0 || q != 0) order.emplace_back(p, q);
  return order;
}

std::size_t TightFramePyramid::subband_count() const {
  std::size_t n = lowpass.empty() ? 0 : 1;
  for (const auto& level : highpass) n += level.size();
  return n;
}

Image apply_filter(const Image& plane, const FilterBank& bank, int p, int q, bool adjoint) {
  require_plane(plane, bank);
  const int h = plane.height(), w = plane.width();
  Image tmp(h, w), out(h, w);
  filter_1d(plane.plane(0), tmp.plane(0), h, w, bank.filters.at(p), true, adjoint);
  filter_1d(tmp.plane(0), out.plane(0), h, w, bank.filters.at(q), false, adjoint);
  return out;
}

TightFramePyramid decompose(const Image& plane, int levels, const FilterBank& bank) {
  if (levels < 1) throw DimensionError("decompose: level count must be >= 1");
  require_plane(plane, bank);
  const auto order = highpass_order(bank);
  TightFramePyramid pyr;
  pyr.levels = levels;
  Image current = plane;
  for (int l = 0; l < levels; ++l) {
    std::vector<Image> bands;
    bands.reserve(order.size());
    for (auto [p, q] : order) bands.push_back(apply_filter(current, bank, p, q));
    pyr.highpass.push_back(std::move(bands));
    current = apply_filter(current, bank, 0, 0);
  }
  pyr.lowpass = std::move(current);
  return pyr;
}

Image reconstruct(const TightFramePyramid& pyr, const FilterBank& bank) {
  const auto order = highpass_order(bank);
  if (pyr.levels < 1 || static_cast<int>(pyr.highpass.size()) != pyr.levels)
    throw DimensionError("reconstruct: inconsistent level count");
  for (const auto& level : pyr.highpass) {
    if (level.size() != order.size()) throw DimensionError("reconstruct: wrong subband count");
    for (const auto& band : level)
      if (!band.same_shape(pyr.lowpass)) throw DimensionError("reconstruct: subband shape mismatch");
  }
  Image current = pyr.lowpass;
  for (int l = pyr.levels - 1; l >= 0; --l) {
    Image next = apply_filter(current, bank, 0, 0, true);
    for (std::size_t k = 0; k < order.size(); ++k)
      accumulate(next, apply_filter(pyr.highpass[l][k], bank, order[k].first, order[k].second, true));
    current = std::move(next);
  }
  return current;
}

int planes_per_channel(const FilterBank& bank, int levels) {
  return levels * bank.highpass_per_level() + 1;
}

std::vector<Image> feature_stack(const Image& img, int levels, const FilterBank& bank) {
  std::vector<Image> planes;
  planes.reserve(static_cast<std::size_t>(img.channels()) * planes_per_channel(bank, levels));
  for (int c = 0; c < img.channels(); ++c) {
    TightFramePyramid pyr = decompose(img.channel(c), levels, bank);
    planes.push_back(std::move(pyr.lowpass));
    for (auto& level : pyr.highpass)
      for (auto& band : level) planes.push_back(std::move(band));
  }
  return planes;
}

Image feature_stack_adjoint(std::span<const Image> planes, int channels, int levels,
                            const FilterBank& bank) {
  const int per = planes_per_channel(bank, levels);
  if (static_cast<int>(planes.size()) != channels * per)
    throw DimensionError("feature_stack_adjoint: expected " + std::to_string(channels * per) +
                         " planes, got " + std::to_string(planes.size()));
  const int h = planes[0].height(), w = planes[0].width();
  Image out(h, w, channels);
  const int hp = bank.highpass_per_level();
  for (int c = 0; c < channels; ++c) {
    TightFramePyramid pyr;
    pyr.levels = levels;
    pyr.lowpass = planes[c * per];
    for (int l = 0; l < levels; ++l)
      pyr.highpass.emplace_back(planes.begin() + c * per + 1 + l * hp,
                                planes.begin() + c * per + 1 + (l + 1) * hp);
    const Image rec = reconstruct(pyr, bank);
    std::copy(rec.data().begin(), rec.data().end(), out.plane(c).begin());
  }
  return out;
}

}  // namespace cqcd::tightframe
