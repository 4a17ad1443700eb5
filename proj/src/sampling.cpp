#include "cqcd/sampling.hpp"

#include <algorithm>
#include <cmath>

#include "cqcd/error.hpp"

namespace cqcd {
namespace {

struct Stencil {
  int x0, x1, y0, y1;
  double fx, fy;
  bool clamped_x, clamped_y;
};

Stencil make_stencil(int width, int height, double x, double y) {
  Stencil s{};
  const double max_x = width - 1;
  const double max_y = height - 1;
  s.clamped_x = x < 0.0 || x > max_x;
  s.clamped_y = y < 0.0 || y > max_y;
  const double xc = std::clamp(x, 0.0, max_x);
  const double yc = std::clamp(y, 0.0, max_y);
  s.x0 = static_cast<int>(std::floor(xc));
  s.y0 = static_cast<int>(std::floor(yc));
  s.x1 = std::min(s.x0 + 1, width - 1);
  s.y1 = std::min(s.y0 + 1, height - 1);
  s.fx = xc - s.x0;
  s.fy = yc - s.y0;
  return s;
}

void check_field(const Image& img, const DisplacementField& field) {
  if (img.height() != field.height || img.width() != field.width)
    throw DimensionError("warp: field shape does not match image");
}

}  // namespace

double bilinear_sample(const Image& img, double x, double y, int channel) {
  const Stencil s = make_stencil(img.width(), img.height(), x, y);
  auto p = img.plane(channel);
  const int w = img.width();
  const double top = (1.0 - s.fx) * p[s.y0 * w + s.x0] + s.fx * p[s.y0 * w + s.x1];
  const double bottom = (1.0 - s.fx) * p[s.y1 * w + s.x0] + s.fx * p[s.y1 * w + s.x1];
  return (1.0 - s.fy) * top + s.fy * bottom;
}

Image warp(const Image& img, const DisplacementField& field) {
  check_field(img, field);
  Image out(img.height(), img.width(), img.channels());
  for (int c = 0; c < img.channels(); ++c) {
    auto dst = out.plane(c);
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        const std::size_t i = field.index(y, x);
        dst[i] = bilinear_sample(img, x + field.dx[i], y + field.dy[i], c);
      }
    }
  }
  return out;
}

void warp_backward(const Image& img, const DisplacementField& field, const Image& grad_out,
                   Image* grad_img, DisplacementField* grad_field) {
  check_field(img, field);
  if (!grad_out.same_shape(img)) throw DimensionError("warp_backward: gradient shape mismatch");
  if (grad_img && !grad_img->same_shape(img)) *grad_img = Image(img.height(), img.width(), img.channels());
  if (grad_field && !grad_field->same_shape(field)) *grad_field = DisplacementField(field.height, field.width);

  const int w = img.width();
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = field.index(y, x);
      const Stencil s = make_stencil(w, img.height(), x + field.dx[i], y + field.dy[i]);
      const std::size_t i00 = s.y0 * w + s.x0, i01 = s.y0 * w + s.x1;
      const std::size_t i10 = s.y1 * w + s.x0, i11 = s.y1 * w + s.x1;
      for (int c = 0; c < img.channels(); ++c) {
        const double g = grad_out.plane(c)[i];
        if (g == 0.0) continue;
        if (grad_img) {
          auto gp = grad_img->plane(c);
          gp[i00] += g * (1.0 - s.fx) * (1.0 - s.fy);
          gp[i01] += g * s.fx * (1.0 - s.fy);
          gp[i10] += g * (1.0 - s.fx) * s.fy;
          gp[i11] += g * s.fx * s.fy;
        }
        if (grad_field) {
          auto p = img.plane(c);
          if (!s.clamped_x) {
            const double ddx = (1.0 - s.fy) * (p[i01] - p[i00]) + s.fy * (p[i11] - p[i10]);
            grad_field->dx[i] += g * ddx;
          }
          if (!s.clamped_y) {
            const double ddy = (1.0 - s.fx) * (p[i10] - p[i00]) + s.fx * (p[i11] - p[i01]);
            grad_field->dy[i] += g * ddy;
          }
        }
      }
    }
  }
}

}  // namespace cqcd
