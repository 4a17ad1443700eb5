#include "cqcd/losses.hpp"

#include <algorithm>
#include <cmath>

#include "cqcd/error.hpp"
#include "cqcd/quasiconformal.hpp"

namespace cqcd::restoration {

double mean_abs_diff(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw DimensionError("L1 loss: shape mismatch");
  auto pa = a.data(), pb = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) s += std::abs(pa[i] - pb[i]);
  return s / static_cast<double>(pa.size());
}

double loss_rec(const Image& restored, std::span<const Image> warped) {
  if (warped.empty()) throw DimensionError("loss_rec: no frames");
  double s = 0.0;
  for (const auto& w : warped) s += mean_abs_diff(restored, w);
  return s / static_cast<double>(warped.size());
}

double loss_dist(std::span<const Image> originals, std::span<const Image> redistorted) {
  if (originals.size() != redistorted.size() || originals.empty())
    throw DimensionError("loss_dist: sequence lengths differ or are empty");
  double s = 0.0;
  for (std::size_t t = 0; t < originals.size(); ++t) s += mean_abs_diff(originals[t], redistorted[t]);
  return s / static_cast<double>(originals.size());
}

LossBreakdown total_losses(const Image& restored, std::span<const Image> originals,
                           std::span<const Image> warped, std::span<const Image> redistorted,
                           std::span<const DisplacementField> fields,
                           std::span<const DisplacementField> inverses, double lambda) {
  LossBreakdown l;
  l.rec = loss_rec(restored, warped);
  l.dist = loss_dist(originals, redistorted);
  l.bc = qc::bc_loss(fields, inverses);
  l.br = l.dist + l.rec;
  l.de = l.br + lambda * l.bc;
  return l;
}

FieldError field_error(const DisplacementField& estimated, const DisplacementField& reference) {
  if (!estimated.same_shape(reference)) throw DimensionError("field_error: shape mismatch");
  FieldError e;
  if (estimated.pixel_count() == 0) return e;
  double sum = 0.0;
  for (std::size_t i = 0; i < estimated.pixel_count(); ++i) {
    const double d = std::hypot(estimated.dx[i] - reference.dx[i], estimated.dy[i] - reference.dy[i]);
    sum += d;
    e.max_epe = std::max(e.max_epe, d);
  }
  e.mean_epe = sum / static_cast<double>(estimated.pixel_count());
  return e;
}

}  // namespace cqcd::restoration
