#pragma once

#include "cqcd/image.hpp"

namespace cqcd {

/// Bilinear interpolation of channel `channel` at subpixel (x, y).
///
/// Coordinates are clamped to [0, W-1] x [0, H-1] before interpolation, so the
/// function is total on finite input.
double bilinear_sample(const Image& img, double x, double y, int channel = 0);

/// Pull-back warp: out(x, y, c) = img(x + dx(x, y), y + dy(x, y), c).
/// One field is shared by every channel.
Image warp(const Image& img, const DisplacementField& field);

/// Reverse-mode derivative of `warp`.
///
/// Given dL/d(out) in `grad_out`, accumulates dL/d(img) into `grad_img` (the
/// adjoint scatter of the bilinear weights) and dL/d(dx, dy) into
/// `grad_field`. Either output may be null. Where a sample coordinate is
/// clamped, its derivative with respect to that coordinate is zero.
void warp_backward(const Image& img, const DisplacementField& field, const Image& grad_out,
                   Image* grad_img, DisplacementField* grad_field);

}  // namespace cqcd
