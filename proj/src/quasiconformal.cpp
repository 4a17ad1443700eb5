#include "cqcd/quasiconformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cqcd/error.hpp"

namespace cqcd::qc {
namespace {

// Derivative stencil along one axis: returns (lo, hi, weight) so that
// d/dt g(t) ~ weight * (g[hi] - g[lo]).
struct Diff {
  int lo, hi;
  double weight;
};

Diff diff_stencil(int i, int n) {
  if (n < 2) return {i, i, 0.0};
  if (i == 0) return {0, 1, 1.0};
  if (i == n - 1) return {n - 2, n - 1, 1.0};
  return {i - 1, i + 1, 0.5};
}

// |mu|^2 = P / Q with P = (a-e)^2 + (b+c)^2, Q = (a+e)^2 + (c-b)^2, where
// a = u_x, b = u_y, c = v_x, e = v_y.
struct MuSquared {
  double value;
  double d_a, d_b, d_c, d_e;
  bool clamped;
};

MuSquared mu_squared(const Jacobian& j) {
  const double a = j.ux, b = j.uy, c = j.vx, e = j.vy;
  const double p = (a - e) * (a - e) + (b + c) * (b + c);
  const double q = (a + e) * (a + e) + (c - b) * (c - b);
  const double clamp2 = kMuClamp * kMuClamp;
  // |f_z|^2 = q / 4
  if (q <= 4.0 * kDenominatorGuard * kDenominatorGuard || p >= clamp2 * q)
    return {clamp2, 0, 0, 0, 0, true};
  const double q2 = q * q;
  MuSquared m{p / q, 0, 0, 0, 0, false};
  m.d_a = (2 * (a - e) * q - 2 * p * (a + e)) / q2;
  m.d_e = (-2 * (a - e) * q - 2 * p * (a + e)) / q2;
  m.d_b = (2 * (b + c) * q + 2 * p * (c - b)) / q2;
  m.d_c = (2 * (b + c) * q - 2 * p * (c - b)) / q2;
  return m;
}

}  // namespace

std::size_t BeltramiField::degenerate_count() const {
  return static_cast<std::size_t>(std::count(degenerate.begin(), degenerate.end(), 1));
}

Jacobian jacobian_at(const DisplacementField& f, int y, int x) {
  const Diff sx = diff_stencil(x, f.width);
  const Diff sy = diff_stencil(y, f.height);
  const std::size_t xl = f.index(y, sx.lo), xh = f.index(y, sx.hi);
  const std::size_t yl = f.index(sy.lo, x), yh = f.index(sy.hi, x);
  // The identity part contributes exactly 1 on the diagonal for either stencil.
  return {1.0 + sx.weight * (f.dx[xh] - f.dx[xl]), sy.weight * (f.dx[yh] - f.dx[yl]),
          sx.weight * (f.dy[xh] - f.dy[xl]), 1.0 + sy.weight * (f.dy[yh] - f.dy[yl])};
}

BeltramiField beltrami(const DisplacementField& field) {
  BeltramiField out;
  out.height = field.height;
  out.width = field.width;
  out.mu.assign(field.pixel_count(), 0.0);
  out.degenerate.assign(field.pixel_count(), 0);
  for (int y = 0; y < field.height; ++y)
    for (int x = 0; x < field.width; ++x) {
      const Jacobian j = jacobian_at(field, y, x);
      const std::complex<double> fx(j.ux, j.vx), fy(j.uy, j.vy);
      const std::complex<double> i(0.0, 1.0);
      const std::complex<double> fz = 0.5 * (fx - i * fy);
      const std::complex<double> fzbar = 0.5 * (fx + i * fy);
      const std::size_t k = field.index(y, x);
      if (std::abs(fz) <= kDenominatorGuard) {
        out.degenerate[k] = 1;
      } else {
        out.mu[k] = fzbar / fz;
      }
    }
  return out;
}

MapDiagnostics diagnostics(const DisplacementField& field) {
  const BeltramiField b = beltrami(field);
  MapDiagnostics d;
  d.sup_mu = 0.0;
  d.min_jacobian = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < b.mu.size(); ++k) {
    if (b.degenerate[k]) {
      ++d.degenerate_count;
    } else {
      d.sup_mu = std::max(d.sup_mu, std::abs(b.mu[k]));
    }
  }
  for (int y = 0; y < field.height; ++y)
    for (int x = 0; x < field.width; ++x) {
      const double det = jacobian_at(field, y, x).determinant();
      d.min_jacobian = std::min(d.min_jacobian, det);
      if (det <= 0.0) ++d.fold_count;
    }
  if (d.degenerate_count > 0) d.sup_mu = std::numeric_limits<double>::infinity();
  d.k_bounded = d.sup_mu < 1.0;
  d.dilation_k = d.k_bounded ? (1.0 + d.sup_mu) / (1.0 - d.sup_mu)
                             : std::numeric_limits<double>::infinity();
  return d;
}

double mean_squared_mu(const DisplacementField& field, DisplacementField* grad, double scale) {
  if (field.pixel_count() == 0) return 0.0;
  if (grad && !grad->same_shape(field)) *grad = DisplacementField(field.height, field.width);
  const double inv_n = 1.0 / static_cast<double>(field.pixel_count());
  double sum = 0.0;
  for (int y = 0; y < field.height; ++y)
    for (int x = 0; x < field.width; ++x) {
      const MuSquared m = mu_squared(jacobian_at(field, y, x));
      sum += m.value;
      if (!grad || m.clamped) continue;
      const double s = scale * inv_n;
      const Diff sx = diff_stencil(x, field.width);
      const Diff sy = diff_stencil(y, field.height);
      const std::size_t xl = field.index(y, sx.lo), xh = field.index(y, sx.hi);
      const std::size_t yl = field.index(sy.lo, x), yh = field.index(sy.hi, x);
      // a = 1 + w_x (dx[xh] - dx[xl]), b = w_y (dx[yh] - dx[yl]),
      // c = w_x (dy[xh] - dy[xl]),     e = 1 + w_y (dy[yh] - dy[yl]).
      grad->dx[xh] += s * m.d_a * sx.weight;
      grad->dx[xl] -= s * m.d_a * sx.weight;
      grad->dx[yh] += s * m.d_b * sy.weight;
      grad->dx[yl] -= s * m.d_b * sy.weight;
      grad->dy[xh] += s * m.d_c * sx.weight;
      grad->dy[xl] -= s * m.d_c * sx.weight;
      grad->dy[yh] += s * m.d_e * sy.weight;
      grad->dy[yl] -= s * m.d_e * sy.weight;
    }
  return sum * inv_n;
}

double bc_loss(std::span<const DisplacementField> fields,
               std::span<const DisplacementField> inverse_fields) {
  if (fields.size() != inverse_fields.size())
    throw DimensionError("bc_loss: forward and inverse lists differ in length");
  if (fields.empty()) throw DimensionError("bc_loss: empty field list");
  double sum = 0.0;
  for (std::size_t t = 0; t < fields.size(); ++t)
    sum += mean_squared_mu(fields[t]) + mean_squared_mu(inverse_fields[t]);
  return sum / (4.0 * static_cast<double>(fields.size()));
}

namespace {

/// Bilinear sample of both displacement planes at one clamped point.
void sample_both(const DisplacementField& f, double x, double y, double& sx, double& sy) {
  const int h = f.height, w = f.width;
  const double xc = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const double yc = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const int x0 = static_cast<int>(xc), y0 = static_cast<int>(yc);
  const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double fx = xc - x0, fy = yc - y0;
  const double w00 = (1 - fx) * (1 - fy), w01 = fx * (1 - fy), w10 = (1 - fx) * fy, w11 = fx * fy;
  const std::size_t i00 = static_cast<std::size_t>(y0) * w + x0, i01 = static_cast<std::size_t>(y0) * w + x1;
  const std::size_t i10 = static_cast<std::size_t>(y1) * w + x0, i11 = static_cast<std::size_t>(y1) * w + x1;
  sx = w00 * f.dx[i00] + w01 * f.dx[i01] + w10 * f.dx[i10] + w11 * f.dx[i11];
  sy = w00 * f.dy[i00] + w01 * f.dy[i01] + w10 * f.dy[i10] + w11 * f.dy[i11];
}

}  // namespace

std::vector<double> roundtrip_error(const DisplacementField& field, const DisplacementField& inverse) {
  if (!field.same_shape(inverse)) throw DimensionError("roundtrip_error: shape mismatch");
  std::vector<double> err(field.pixel_count());
  for (int y = 0; y < field.height; ++y)
    for (int x = 0; x < field.width; ++x) {
      const std::size_t k = field.index(y, x);
      const double px = x + inverse.dx[k], py = y + inverse.dy[k];
      double sx, sy;
      sample_both(field, px, py, sx, sy);
      err[k] = std::hypot(inverse.dx[k] + sx, inverse.dy[k] + sy);
    }
  return err;
}

InversionResult invert_field(const DisplacementField& field, double tol, int max_iter) {
  if (!all_finite(field)) throw NumericalError("invert_field: non-finite displacement");
  InversionResult r;
  r.inverse = field;
  for (auto& v : r.inverse.dx) v = -v;
  for (auto& v : r.inverse.dy) v = -v;
  DisplacementField next(field.height, field.width);
  for (int it = 1; it <= std::max(max_iter, 1); ++it) {
    double max_update2 = 0.0;
    for (int y = 0; y < field.height; ++y)
      for (int x = 0; x < field.width; ++x) {
        const std::size_t k = field.index(y, x);
        double sx, sy;
        sample_both(field, x + r.inverse.dx[k], y + r.inverse.dy[k], sx, sy);
        next.dx[k] = -sx;
        next.dy[k] = -sy;
        const double ux = next.dx[k] - r.inverse.dx[k], uy = next.dy[k] - r.inverse.dy[k];
        max_update2 = std::max(max_update2, ux * ux + uy * uy);
      }
    const double max_update = std::sqrt(max_update2);
    std::swap(r.inverse, next);
    r.iterations = it;
    if (!std::isfinite(max_update)) break;
    if (max_update < tol) {
      r.converged = true;
      break;
    }
  }
  const auto err = roundtrip_error(field, r.inverse);
  r.residual = err.empty() ? 0.0 : *std::max_element(err.begin(), err.end());
  return r;
}

}  // namespace cqcd::qc
