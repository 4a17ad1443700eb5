#include "cqcd/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cqcd/error.hpp"

namespace cqcd {

Image::Image(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0 || channels < 0) throw DimensionError("negative image dimension");
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

Image Image::channel(int c) const {
  Image out(height_, width_, 1);
  auto src = plane(c);
  std::copy(src.begin(), src.end(), out.data().begin());
  return out;
}

void validate_sequence(std::span<const Image> frames, std::size_t min_frames) {
  if (frames.size() < min_frames) {
    throw DimensionError("frame sequence needs at least " + std::to_string(min_frames) +
                         " frames, got " + std::to_string(frames.size()));
  }
  for (const auto& f : frames) {
    if (!f.same_shape(frames.front())) throw DimensionError("frames differ in shape");
  }
}

void require_min_size(const Image& img, int min_side, const char* what) {
  if (img.height() < min_side || img.width() < min_side) {
    throw DimensionError(std::string(what) + ": image must be at least " +
                         std::to_string(min_side) + "x" + std::to_string(min_side));
  }
}

double mean_magnitude(const DisplacementField& field) {
  if (field.pixel_count() == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < field.pixel_count(); ++i) sum += std::hypot(field.dx[i], field.dy[i]);
  return sum / static_cast<double>(field.pixel_count());
}

double max_magnitude(const DisplacementField& field) {
  double m = 0.0;
  for (std::size_t i = 0; i < field.pixel_count(); ++i)
    m = std::max(m, std::hypot(field.dx[i], field.dy[i]));
  return m;
}

bool all_finite(const Image& img) {
  return std::all_of(img.data().begin(), img.data().end(), [](double v) { return std::isfinite(v); });
}

bool all_finite(const DisplacementField& field) {
  auto finite = [](double v) { return std::isfinite(v); };
  return std::all_of(field.dx.begin(), field.dx.end(), finite) &&
         std::all_of(field.dy.begin(), field.dy.end(), finite);
}

}  // namespace cqcd
