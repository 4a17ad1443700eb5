#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cqcd/image.hpp"

namespace cqcd::sim {

enum class Preset { kMild, kMedium, kSevere, kCustom };

std::string to_string(Preset preset);
/// Accepts "mild", "medium", "severe", "custom"; throws ConfigError otherwise.
Preset parse_preset(const std::string& name);

struct TurbulenceConfig {
  Preset preset = Preset::kMild;
  double amplitude = 2.0;            // px, max displacement magnitude
  double correlation_length = 16.0;  // px
  double blur_sigma = 0.5;           // px
  double noise_sigma = 0.005;
  int frames = 10;
  std::uint64_t seed = 0;

  /// Preset values (amplitude, correlation length, blur, noise):
  /// mild (2, 16, 0.5, 0.005), medium (4, 12, 1.0, 0.01), severe (7, 8, 1.5, 0.02).
  static TurbulenceConfig from_preset(Preset preset, int frames, std::uint64_t seed);

  void validate() const;
};

/// Seed for frame `frame_index` on a named stream ("field", "noise", ...).
std::uint64_t derive_seed(std::uint64_t seed, int frame_index, std::uint64_t stream);
inline constexpr std::uint64_t kFieldStream = 1;
inline constexpr std::uint64_t kNoiseStream = 2;

/// Gaussian white noise per component, smoothed periodically with
/// sigma = correlation_length / 2, then rescaled so the largest vector has
/// length `amplitude`. Components are rounded through float32 so the field
/// survives a save/load round trip unchanged.
DisplacementField random_smooth_field(const TurbulenceConfig& config, int height, int width,
                                      int frame_index);

/// Periodic Gaussian blur truncated at 3 sigma; sigma <= 0 returns the input.
Image gaussian_blur(const Image& img, double sigma);

/// warp by field -> Gaussian blur -> additive Gaussian noise -> clip to [0, 1].
Image apply_distortion(const Image& clean, const DisplacementField& field, double blur_sigma,
                       double noise_sigma, std::uint64_t noise_seed);

struct GroundTruthBundle {
  Image clean;
  FrameSequence frames;
  std::vector<DisplacementField> fields;
  TurbulenceConfig config;
};

GroundTruthBundle generate(const Image& clean, const TurbulenceConfig& config);

/// Synthetic test scene with edges at several orientations and scales.
Image default_scene(int height = 64, int width = 64, int channels = 1);

/// Writes clean.png, frame_%03d.png, field_%03d.fld and config.json.
void save_bundle(const GroundTruthBundle& bundle, const std::filesystem::path& dir);
GroundTruthBundle load_bundle(const std::filesystem::path& dir);

std::string numbered(const std::string& prefix, int index, const std::string& ext);

}  // namespace cqcd::sim
