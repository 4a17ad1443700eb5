#pragma once

#include <filesystem>

#include "cqcd/image.hpp"

namespace cqcd {

/// Binary field file: magic "CQCDFLD1", u32 height, u32 width (little-endian),
/// then the row-major float32 dx plane followed by the float32 dy plane.
void save_field(const DisplacementField& field, const std::filesystem::path& path);
DisplacementField load_field(const std::filesystem::path& path);

/// Rounds every component through float32, i.e. to exactly what a saved field
/// reloads as.
DisplacementField quantize_to_float(const DisplacementField& field);

}  // namespace cqcd
