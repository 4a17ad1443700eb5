#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cqcd/image.hpp"

namespace cqcd::restoration {

enum class Backend { kGrid, kConv };

std::string to_string(Backend backend);
/// "grid" or "conv".
Backend parse_backend(const std::string& name);

struct EstimatorConfig {
  Backend backend = Backend::kGrid;
  /// Control-point spacing of the grid backend, px.
  int grid_spacing = 8;
  /// Bound on |dx| and |dy|, px.
  double displacement_scale = 10.0;
  /// Feature width of the conv backend.
  int conv_width = 16;
};

/// features[t] holds the feature planes of frame t.
using FeatureSet = std::vector<std::vector<Image>>;

/// Produces one displacement field per frame.
///
/// The grid backend keeps an independent control grid per frame, squashes
/// every control value with s * tanh(v / s) and upsamples bilinearly to full
/// resolution; it ignores feature values. The conv backend is a small
/// encoder-decoder with weights shared across frames that reads each frame's
/// features and squashes its two output planes the same way. Both start at
/// the identity map.
class DeformationEstimator {
 public:
  DeformationEstimator() = default;
  DeformationEstimator(const EstimatorConfig& config, int frames, int height, int width,
                       int feature_planes, std::uint64_t seed);

  const EstimatorConfig& config() const { return config_; }
  int frames() const { return frames_; }
  int height() const { return height_; }
  int width() const { return width_; }
  int feature_planes() const { return feature_planes_; }
  int grid_height() const { return grid_h_; }
  int grid_width() const { return grid_w_; }

  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }

  std::vector<DisplacementField> estimate(const FeatureSet& features) const;

  /// Adds dL/d(parameters) to `grad_params` given dL/d(field) per frame.
  void backward(const FeatureSet& features, std::span<const DisplacementField> grad_fields,
                std::span<double> grad_params) const;

  /// Grid backend: removes the across-frame mean of every control value, so
  /// the fields carry no common displacement. No-op for the conv backend.
  void center_across_frames();

  /// Hash of all piecewise-linear branch decisions (ReLU masks) taken while
  /// evaluating `features`; constant for the grid backend.
  std::uint64_t activation_signature(const FeatureSet& features) const;

  /// Raw control value index for the grid backend.
  std::size_t grid_index(int frame, int component, int gy, int gx) const;

 private:
  DisplacementField grid_field(int frame) const;
  void grid_backward(int frame, const DisplacementField& grad, std::span<double> grad_params) const;

  EstimatorConfig config_;
  int frames_ = 0, height_ = 0, width_ = 0, feature_planes_ = 0;
  int grid_h_ = 0, grid_w_ = 0;
  std::vector<double> params_;
};

}  // namespace cqcd::restoration
