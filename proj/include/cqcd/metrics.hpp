#pragma once

#include <span>

#include "cqcd/image.hpp"

namespace cqcd {

/// Peak signal-to-noise ratio in dB with unit peak.
///
/// Computed per channel and averaged. Returns +infinity when the images are
/// identical (zero mean squared error).
double psnr(const Image& a, const Image& b);

/// Mean structural similarity over all fully contained 11x11 Gaussian windows
/// (sigma 1.5, C1 = 0.01^2, C2 = 0.03^2). Three-channel inputs are converted
/// to luma first.
double ssim(const Image& a, const Image& b);

/// Luma conversion with weights 0.299 / 0.587 / 0.114; single-channel input is
/// returned unchanged.
Image to_gray(const Image& img);

/// Pixel-wise arithmetic mean.
Image average_frames(std::span<const Image> frames);

}  // namespace cqcd
