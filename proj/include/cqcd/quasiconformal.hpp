#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "cqcd/image.hpp"

namespace cqcd::qc {

/// |f_z| at or below this marks a pixel degenerate.
inline constexpr double kDenominatorGuard = 1e-8;
/// Magnitude assigned to degenerate (and larger) |mu| inside losses.
inline constexpr double kMuClamp = 10.0;

struct BeltramiField {
  int height = 0;
  int width = 0;
  std::vector<std::complex<double>> mu;
  /// 1 where |f_z| <= kDenominatorGuard; mu is stored as 0 there.
  std::vector<std::uint8_t> degenerate;

  std::size_t degenerate_count() const;
};

/// Local first derivatives of f(x, y) = (x + dx, y + dy) by central
/// differences in the interior and one-sided differences on the border.
struct Jacobian {
  double ux, uy, vx, vy;  // du/dx, du/dy, dv/dx, dv/dy with (u, v) = f(x, y)
  double determinant() const { return ux * vy - uy * vx; }
};
Jacobian jacobian_at(const DisplacementField& field, int y, int x);

/// mu = f_zbar / f_z per pixel, f_z = (f_x - i f_y) / 2, f_zbar = (f_x + i f_y) / 2.
BeltramiField beltrami(const DisplacementField& field);

struct MapDiagnostics {
  /// max |mu|; +infinity when any pixel is degenerate.
  double sup_mu = 0.0;
  /// (1 + sup_mu) / (1 - sup_mu); +infinity when sup_mu >= 1.
  double dilation_k = 1.0;
  bool k_bounded = true;
  double min_jacobian = 1.0;
  int fold_count = 0;
  int degenerate_count = 0;

  bool homeomorphic() const { return k_bounded && fold_count == 0 && degenerate_count == 0; }
};

MapDiagnostics diagnostics(const DisplacementField& field);

/// Pixel mean of min(|mu|^2, kMuClamp^2) for one map; degenerate pixels count
/// as kMuClamp^2. When `grad` is non-null, `scale` times the derivative with
/// respect to (dx, dy) is added to it. Clamped pixels contribute no gradient.
double mean_squared_mu(const DisplacementField& field, DisplacementField* grad = nullptr,
                       double scale = 1.0);

/// (1 / 4T) sum_t (mean |mu(f_t)|^2 + mean |mu(f_t^-1)|^2).
double bc_loss(std::span<const DisplacementField> fields,
               std::span<const DisplacementField> inverse_fields);

struct InversionResult {
  DisplacementField inverse;
  bool converged = false;
  int iterations = 0;
  /// max over pixels of |g(y) + d(y + g(y))|, i.e. |f(f^-1(y)) - y|.
  double residual = 0.0;
};

/// Fixed-point inversion g <- -d(y + g) starting from g = -d, with bilinear
/// sampling of d. Stops once the largest per-pixel update drops below `tol`
/// pixels or after `max_iter` iterations.
InversionResult invert_field(const DisplacementField& field, double tol = 1e-3, int max_iter = 50);

/// Per-pixel |f(y + g(y)) - y| for a field and a candidate inverse.
std::vector<double> roundtrip_error(const DisplacementField& field, const DisplacementField& inverse);

}  // namespace cqcd::qc
