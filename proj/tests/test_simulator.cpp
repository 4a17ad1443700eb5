#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "cqcd/error.hpp"
#include "cqcd/image_io.hpp"
#include "cqcd/losses.hpp"
#include "cqcd/metrics.hpp"
#include "cqcd/quasiconformal.hpp"
#include "cqcd/simulator.hpp"
#include "json.hpp"
#include "test_util.hpp"

using namespace cqcd;
using namespace cqcd::sim;

namespace {

double variance(const Image& img) {
  double m = 0.0, s = 0.0;
  for (double v : img.data()) m += v;
  m /= img.size();
  for (double v : img.data()) s += (v - m) * (v - m);
  return s / img.size();
}

}  // namespace

TEST(Config, PresetsAndValidation) {
  const auto m = TurbulenceConfig::from_preset(Preset::kMild, 10, 1);
  EXPECT_EQ(m.amplitude, 2.0);
  EXPECT_EQ(m.correlation_length, 16.0);
  EXPECT_EQ(m.blur_sigma, 0.5);
  EXPECT_EQ(m.noise_sigma, 0.005);
  const auto md = TurbulenceConfig::from_preset(Preset::kMedium, 10, 1);
  EXPECT_EQ(md.amplitude, 4.0);
  EXPECT_EQ(md.correlation_length, 12.0);
  const auto s = TurbulenceConfig::from_preset(Preset::kSevere, 10, 1);
  EXPECT_EQ(s.amplitude, 7.0);
  EXPECT_EQ(s.noise_sigma, 0.02);
  EXPECT_EQ(parse_preset("severe"), Preset::kSevere);
  EXPECT_THROW(parse_preset("hurricane"), ConfigError);
  auto bad = m;
  bad.correlation_length = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = m;
  bad.noise_sigma = 0.2;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = m;
  bad.amplitude = -1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = m;
  bad.frames = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Field, ZeroAmplitudeAndDeterminism) {
  auto c = TurbulenceConfig::from_preset(Preset::kMild, 4, 3);
  c.amplitude = 0.0;
  const auto z = random_smooth_field(c, 16, 16, 0);
  for (double v : z.dx) EXPECT_EQ(v, 0.0);
  c.amplitude = 2.0;
  EXPECT_EQ(random_smooth_field(c, 16, 16, 2), random_smooth_field(c, 16, 16, 2));
  EXPECT_NE(random_smooth_field(c, 16, 16, 2), random_smooth_field(c, 16, 16, 3));
  EXPECT_NEAR(max_magnitude(random_smooth_field(c, 16, 16, 1)), 2.0, 1e-6);
}

TEST(Field, MildPresetIsMostlyQuasiconformal) {
  int good = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto f = random_smooth_field(TurbulenceConfig::from_preset(Preset::kMild, 1, seed), 64, 64, 0);
    const auto d = qc::diagnostics(f);
    good += d.fold_count == 0 && d.sup_mu < 0.6;
  }
  EXPECT_GE(good, 99);
}

TEST(Field, PresetMonotonicity) {
  double prev_mag = -1.0, prev_blur = -1.0;
  for (auto p : {Preset::kMild, Preset::kMedium, Preset::kSevere}) {
    const auto c = TurbulenceConfig::from_preset(p, 10, 7);
    double mag = 0.0;
    for (int t = 0; t < 10; ++t) mag += mean_magnitude(random_smooth_field(c, 64, 64, t));
    EXPECT_GT(mag, prev_mag);
    EXPECT_GT(c.blur_sigma, prev_blur);
    prev_mag = mag;
    prev_blur = c.blur_sigma;
  }
}

TEST(Distortion, IdentityDegradation) {
  const Image clean = default_scene(32, 32, 1);
  EXPECT_EQ(apply_distortion(clean, DisplacementField(32, 32), 0.0, 0.0, 5), clean);
}

TEST(Distortion, BlurContractsVariance) {
  const Image clean = default_scene(32, 32, 1);
  EXPECT_LT(variance(apply_distortion(clean, DisplacementField(32, 32), 1.0, 0.0, 5)), variance(clean));
}

TEST(Distortion, ShapeMismatch) {
  EXPECT_THROW(apply_distortion(Image(16, 16), DisplacementField(16, 17), 0.5, 0.0, 1), DimensionError);
}

TEST(Distortion, MildChainPsnrBand) {
  // Frozen from a seeded measurement of this configuration.
  const auto b = generate(default_scene(), TurbulenceConfig::from_preset(Preset::kMild, 10, 7));
  for (const auto& f : b.frames) {
    const double p = psnr(f, b.clean);
    EXPECT_GT(p, 14.0);
    EXPECT_LT(p, 26.0);
  }
  for (const auto& f : b.frames)
    for (double v : f.data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
}

TEST(Generate, TrivialBundle) {
  auto c = TurbulenceConfig::from_preset(Preset::kMild, 1, 0);
  c.amplitude = c.blur_sigma = c.noise_sigma = 0.0;
  const Image clean = default_scene(16, 16, 3);
  const auto b = generate(clean, c);
  ASSERT_EQ(b.frames.size(), 1u);
  EXPECT_EQ(b.frames[0], clean);
}

TEST(Generate, DistinctFieldsAndDeterminism) {
  const auto c = TurbulenceConfig::from_preset(Preset::kMild, 10, 11);
  const auto a = generate(default_scene(), c), b = generate(default_scene(), c);
  ASSERT_EQ(a.frames.size(), 10u);
  ASSERT_EQ(a.fields.size(), 10u);
  EXPECT_EQ(a.frames, b.frames);
  EXPECT_EQ(a.fields, b.fields);
  for (int i = 0; i < 10; ++i)
    for (int j = i + 1; j < 10; ++j) EXPECT_GT(restoration::field_error(a.fields[i], a.fields[j]).mean_epe, 0.0);
}

TEST(Bundle, RoundTripReproducesFrames) {
  const auto dir = cqcd::testing::scratch_dir("bundle");
  const Image clean = default_scene();
  const auto c = TurbulenceConfig::from_preset(Preset::kMedium, 4, 5);
  const auto b = generate(clean, c);
  save_bundle(b, dir);
  for (const char* name : {"clean.png", "frame_000.png", "frame_003.png", "field_003.fld", "config.json"})
    EXPECT_TRUE(std::filesystem::exists(dir / name)) << name;
  const auto l = load_bundle(dir);
  ASSERT_EQ(l.fields.size(), 4u);
  EXPECT_EQ(l.fields, b.fields);
  EXPECT_EQ(l.config.seed, c.seed);
  EXPECT_EQ(l.config.amplitude, c.amplitude);
  std::ifstream in(dir / "config.json");
  const auto j = nlohmann::json::parse(in);
  ASSERT_EQ(j.at("noise_seeds").size(), 4u);
  for (int t = 0; t < 4; ++t) {
    const Image again = apply_distortion(clean, l.fields[t], l.config.blur_sigma, l.config.noise_sigma,
                                         j.at("noise_seeds")[t].get<std::uint64_t>());
    EXPECT_EQ(again, b.frames[t]);
    // Stored frames are 8-bit quantizations of the in-memory ones.
    for (std::size_t i = 0; i < again.size(); ++i)
      EXPECT_LE(std::abs(l.frames[t].data()[i] - again.data()[i]), 0.5 / 255 + 1e-12);
  }
}

TEST(Bundle, MissingDirectory) {
  EXPECT_THROW(load_bundle("/nonexistent/cqcd/bundle"), IoError);
}

TEST(Scene, DefaultSceneProperties) {
  const Image s = default_scene(64, 64, 3);
  EXPECT_EQ(s.channels(), 3);
  EXPECT_GT(variance(s), 0.01);
  for (double v : s.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(default_scene(), default_scene());
}
