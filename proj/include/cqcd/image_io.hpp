#pragma once

#include <filesystem>

#include "cqcd/image.hpp"

namespace cqcd {

/// Loads PNG (8/16-bit gray or RGB; alpha is dropped) or binary PGM/PPM
/// (P5/P6, maxval up to 65535). Intensities are scaled to [0, 1].
Image load_image(const std::filesystem::path& path);

/// Saves by extension: .png, .pgm, .ppm (or .pnm). Values are clamped to
/// [0, 1] and rounded to the nearest level of the requested bit depth (8 or 16).
void save_image(const Image& img, const std::filesystem::path& path, int bit_depth = 8);

}  // namespace cqcd
