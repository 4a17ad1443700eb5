#include "cqcd/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

#include "cqcd/error.hpp"
#include "cqcd/field_io.hpp"
#include "cqcd/image_io.hpp"
#include "cqcd/sampling.hpp"

namespace cqcd::sim {
namespace {

int wrap(int i, int n) {
  i %= n;
  return i < 0 ? i + n : i;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (auto& v : k) v /= sum;
  return k;
}

void blur_plane(std::span<double> plane, int h, int w, const std::vector<double>& k) {
  const int r = static_cast<int>(k.size()) / 2;
  std::vector<double> tmp(plane.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int j = -r; j <= r; ++j) s += k[j + r] * plane[y * w + wrap(x + j, w)];
      tmp[y * w + x] = s;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int j = -r; j <= r; ++j) s += k[j + r] * tmp[wrap(y + j, h) * w + x];
      plane[y * w + x] = s;
    }
}

}  // namespace

std::string to_string(Preset preset) {
  switch (preset) {
    case Preset::kMild: return "mild";
    case Preset::kMedium: return "medium";
    case Preset::kSevere: return "severe";
    case Preset::kCustom: return "custom";
  }
  return "custom";
}

Preset parse_preset(const std::string& name) {
  if (name == "mild") return Preset::kMild;
  if (name == "medium") return Preset::kMedium;
  if (name == "severe") return Preset::kSevere;
  if (name == "custom") return Preset::kCustom;
  throw ConfigError("unknown preset '" + name + "' (expected mild, medium, severe or custom)");
}

TurbulenceConfig TurbulenceConfig::from_preset(Preset preset, int frames, std::uint64_t seed) {
  TurbulenceConfig c;
  c.preset = preset;
  c.frames = frames;
  c.seed = seed;
  switch (preset) {
    case Preset::kMedium:
      c.amplitude = 4.0, c.correlation_length = 12.0, c.blur_sigma = 1.0, c.noise_sigma = 0.01;
      break;
    case Preset::kSevere:
      c.amplitude = 7.0, c.correlation_length = 8.0, c.blur_sigma = 1.5, c.noise_sigma = 0.02;
      break;
    case Preset::kMild:
    case Preset::kCustom:
      break;
  }
  return c;
}

void TurbulenceConfig::validate() const {
  if (!(amplitude >= 0.0)) throw ConfigError("amplitude must be >= 0");
  if (!(correlation_length >= 2.0)) throw ConfigError("correlation_length must be >= 2");
  if (!(noise_sigma >= 0.0 && noise_sigma <= 0.1)) throw ConfigError("noise_sigma must lie in [0, 0.1]");
  if (!(blur_sigma >= 0.0)) throw ConfigError("blur_sigma must be >= 0");
  if (frames < 1) throw ConfigError("frame count must be >= 1");
}

std::uint64_t derive_seed(std::uint64_t seed, int frame_index, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(frame_index), static_cast<std::uint32_t>(stream)};
  std::mt19937_64 rng(seq);
  return rng();
}

DisplacementField random_smooth_field(const TurbulenceConfig& config, int height, int width,
                                      int frame_index) {
  config.validate();
  DisplacementField field(height, width);
  if (config.amplitude == 0.0) return field;
  std::mt19937_64 rng(derive_seed(config.seed, frame_index, kFieldStream));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : field.dx) v = normal(rng);
  for (auto& v : field.dy) v = normal(rng);
  const auto k = gaussian_kernel(config.correlation_length / 2.0);
  blur_plane(field.dx, height, width, k);
  blur_plane(field.dy, height, width, k);
  const double peak = max_magnitude(field);
  if (peak > 0.0) {
    const double s = config.amplitude / peak;
    for (auto& v : field.dx) v = static_cast<float>(v * s);
    for (auto& v : field.dy) v = static_cast<float>(v * s);
  }
  return field;
}

Image gaussian_blur(const Image& img, double sigma) {
  if (sigma <= 0.0) return img;
  Image out = img;
  const auto k = gaussian_kernel(sigma);
  for (int c = 0; c < out.channels(); ++c) blur_plane(out.plane(c), out.height(), out.width(), k);
  return out;
}

Image apply_distortion(const Image& clean, const DisplacementField& field, double blur_sigma,
                       double noise_sigma, std::uint64_t noise_seed) {
  Image out = gaussian_blur(warp(clean, field), blur_sigma);
  if (noise_sigma > 0.0) {
    std::mt19937_64 rng(noise_seed);
    std::normal_distribution<double> normal(0.0, noise_sigma);
    for (auto& v : out.data()) v += normal(rng);
  }
  for (auto& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

GroundTruthBundle generate(const Image& clean, const TurbulenceConfig& config) {
  config.validate();
  require_min_size(clean, 8, "simulate");
  GroundTruthBundle b;
  b.clean = clean;
  b.config = config;
  b.fields.resize(config.frames);
  b.frames.resize(config.frames);
  for (int t = 0; t < config.frames; ++t) {
    b.fields[t] = random_smooth_field(config, clean.height(), clean.width(), t);
    b.frames[t] = apply_distortion(clean, b.fields[t], config.blur_sigma, config.noise_sigma,
                                   derive_seed(config.seed, t, kNoiseStream));
  }
  return b;
}

Image default_scene(int height, int width, int channels) {
  Image img(height, width, channels);
  const double cos30 = std::cos(std::numbers::pi / 6), sin30 = std::sin(std::numbers::pi / 6);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double u = (x + 0.5) / width, v = (y + 0.5) / height;
      double val = 0.3 + 0.25 * u + 0.1 * v;
      if (u > 0.55 && v < 0.4) val = 0.45 + 0.3 * std::sin(2 * std::numbers::pi * y / 9.0);
      if (u < 0.45 && v > 0.6) val = 0.5 + 0.3 * std::sin(2 * std::numbers::pi * x / 8.0);
      const double du = u - 0.3, dv = v - 0.32;
      if (du * du + dv * dv < 0.17 * 0.17) val = 0.85;
      if (du * du + dv * dv < 0.07 * 0.07) val = 0.2;
      const double ru = (u - 0.72) * cos30 + (v - 0.7) * sin30;
      const double rv = -(u - 0.72) * sin30 + (v - 0.7) * cos30;
      if (std::abs(ru) < 0.14 && std::abs(rv) < 0.14) val = 0.12;
      if (std::abs(ru) < 0.05 && std::abs(rv) < 0.05) val = 0.9;
      if (std::abs(u + v - 1.0) < 0.02) val = 0.95;
      for (int c = 0; c < channels; ++c) {
        const double tint = channels == 1 ? 1.0 : (c == 0 ? 1.0 : c == 1 ? 0.85 : 0.7);
        img.at(y, x, c) = std::clamp(val * tint + (channels == 1 ? 0.0 : 0.05 * c), 0.0, 1.0);
      }
    }
  return img;
}

std::string numbered(const std::string& prefix, int index, const std::string& ext) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", index);
  return prefix + "_" + buf + ext;
}

void save_bundle(const GroundTruthBundle& b, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_image(b.clean, dir / "clean.png");
  for (std::size_t t = 0; t < b.frames.size(); ++t) {
    save_image(b.frames[t], dir / numbered("frame", static_cast<int>(t), ".png"));
    save_field(b.fields[t], dir / numbered("field", static_cast<int>(t), ".fld"));
  }
  nlohmann::ordered_json j;
  j["preset"] = to_string(b.config.preset);
  j["amplitude"] = b.config.amplitude;
  j["correlation_length"] = b.config.correlation_length;
  j["blur_sigma"] = b.config.blur_sigma;
  j["noise_sigma"] = b.config.noise_sigma;
  j["frames"] = b.config.frames;
  j["seed"] = b.config.seed;
  j["height"] = b.clean.height();
  j["width"] = b.clean.width();
  j["channels"] = b.clean.channels();
  auto& seeds = j["noise_seeds"] = nlohmann::ordered_json::array();
  for (int t = 0; t < b.config.frames; ++t) seeds.push_back(derive_seed(b.config.seed, t, kNoiseStream));
  std::ofstream os(dir / "config.json");
  if (!os) throw IoError("cannot write " + (dir / "config.json").string());
  os << j.dump(2) << "\n";
}

GroundTruthBundle load_bundle(const std::filesystem::path& dir) {
  std::ifstream is(dir / "config.json");
  if (!is) throw IoError("missing " + (dir / "config.json").string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("config.json: " + std::string(e.what()));
  }
  GroundTruthBundle b;
  b.config.preset = parse_preset(j.at("preset").get<std::string>());
  b.config.amplitude = j.at("amplitude").get<double>();
  b.config.correlation_length = j.at("correlation_length").get<double>();
  b.config.blur_sigma = j.at("blur_sigma").get<double>();
  b.config.noise_sigma = j.at("noise_sigma").get<double>();
  b.config.frames = j.at("frames").get<int>();
  b.config.seed = j.at("seed").get<std::uint64_t>();
  b.clean = load_image(dir / "clean.png");
  for (int t = 0; t < b.config.frames; ++t) {
    b.frames.push_back(load_image(dir / numbered("frame", t, ".png")));
    b.fields.push_back(load_field(dir / numbered("field", t, ".fld")));
  }
  return b;
}

}  // namespace cqcd::sim
