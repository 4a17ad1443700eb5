#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cqcd {

/// Multi-channel image with double intensities, nominally in [0, 1].
///
/// Storage is planar: each channel is a contiguous row-major plane, so
/// `plane(c)` can be handed to single-channel operations without copying.
/// Pixel coordinates follow (x, y) = (column, row) with the origin at the
/// centre of the top-left pixel.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels = 1, double fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int y, int x, int c = 0) { return data_[index(y, x, c)]; }
  double at(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }

  std::span<double> plane(int c) { return {data_.data() + c * pixel_count(), pixel_count()}; }
  std::span<const double> plane(int c) const {
    return {data_.data() + c * pixel_count(), pixel_count()};
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  /// Single-channel copy of channel `c`.
  Image channel(int c) const;

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  bool operator==(const Image& other) const = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Per-pixel displacement d = (dx, dy) in pixels. The induced map is
/// f(x, y) = (x + dx(x, y), y + dy(x, y)).
struct DisplacementField {
  DisplacementField() = default;
  DisplacementField(int height, int width)
      : height(height),
        width(width),
        dx(static_cast<std::size_t>(height) * width, 0.0),
        dy(static_cast<std::size_t>(height) * width, 0.0) {}

  std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width + x; }
  std::size_t pixel_count() const { return dx.size(); }
  bool same_shape(const DisplacementField& other) const {
    return height == other.height && width == other.width;
  }
  bool operator==(const DisplacementField& other) const = default;

  int height = 0;
  int width = 0;
  std::vector<double> dx;
  std::vector<double> dy;
};

/// Ordered frames of equal shape.
using FrameSequence = std::vector<Image>;

/// Throws DimensionError unless `frames` is non-empty and uniformly shaped.
void validate_sequence(std::span<const Image> frames, std::size_t min_frames = 1);

/// Throws DimensionError if the image is smaller than `min_side` in either direction.
void require_min_size(const Image& img, int min_side, const char* what);

/// Mean of |d| over pixels.
double mean_magnitude(const DisplacementField& field);
double max_magnitude(const DisplacementField& field);

bool all_finite(const Image& img);
bool all_finite(const DisplacementField& field);

}  // namespace cqcd
