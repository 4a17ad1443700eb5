#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <random>

#include "cqcd/error.hpp"
#include "cqcd/quasiconformal.hpp"
#include "cqcd/sampling.hpp"
#include "cqcd/simulator.hpp"
#include "test_util.hpp"

using namespace cqcd;
using namespace cqcd::qc;
using cd = std::complex<double>;

namespace {

/// Displacement of the affine map z -> a z + b conj(z) + c.
DisplacementField affine(int h, int w, cd a, cd b, cd c = 0.0) {
  DisplacementField f(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const cd z(x, y);
      const cd v = a * z + b * std::conj(z) + c;
      f.dx[f.index(y, x)] = v.real() - x;
      f.dy[f.index(y, x)] = v.imag() - y;
    }
  return f;
}

DisplacementField smooth_field(int size, double amp, double corr, std::uint64_t seed) {
  sim::TurbulenceConfig c;
  c.preset = sim::Preset::kCustom;
  c.amplitude = amp;
  c.correlation_length = corr;
  c.seed = seed;
  return sim::random_smooth_field(c, size, size, 0);
}

}  // namespace

TEST(Beltrami, IdentityIsZero) {
  const auto b = beltrami(DisplacementField(9, 9));
  for (auto m : b.mu) EXPECT_EQ(m, cd(0.0));
  EXPECT_EQ(b.degenerate_count(), 0u);
}

TEST(Beltrami, HorizontalScaling) {
  DisplacementField f(10, 10);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) f.dx[f.index(y, x)] = 0.2 * x;
  const auto b = beltrami(f);
  for (int y = 1; y < 9; ++y)
    for (int x = 1; x < 9; ++x) {
      EXPECT_NEAR(b.mu[f.index(y, x)].real(), 0.1 / 1.1, 1e-12);
      EXPECT_NEAR(b.mu[f.index(y, x)].imag(), 0.0, 1e-12);
    }
}

TEST(Beltrami, ZPlusPointThreeZbar) {
  DisplacementField f(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      f.dx[f.index(y, x)] = 0.3 * x;
      f.dy[f.index(y, x)] = -0.3 * y;
    }
  for (auto m : beltrami(f).mu) EXPECT_NEAR(std::abs(m - cd(0.3)), 0.0, 1e-12);
}

TEST(Beltrami, AffineOracle) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 20; ++k) {
    const cd a = std::polar(0.5 + u(rng), 2 * M_PI * u(rng));
    const cd b = a * std::polar(0.9 * k / 19.0, 2 * M_PI * u(rng));
    const auto f = affine(12, 12, a, b, cd(u(rng), u(rng)));
    const auto mu = beltrami(f);
    for (int y = 1; y < 11; ++y)
      for (int x = 1; x < 11; ++x) EXPECT_LT(std::abs(mu.mu[f.index(y, x)] - b / a), 1e-10);
    const auto d = diagnostics(f);
    const double s = std::abs(b / a);
    EXPECT_NEAR(d.sup_mu, s, 1e-10);
    EXPECT_NEAR(d.dilation_k, (1 + d.sup_mu) / (1 - d.sup_mu), 1e-15);
  }
}

TEST(Beltrami, DegeneratePixelsFlagged) {
  DisplacementField f(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) f.dx[f.index(y, x)] = -x;  // f_x = 0 + 0i, f_y = i: f_z = 1/2, fine
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) f.dy[f.index(y, x)] = -y;  // now f is constant: f_z = 0
  const auto b = beltrami(f);
  EXPECT_EQ(b.degenerate_count(), 64u);
  const auto d = diagnostics(f);
  EXPECT_TRUE(std::isinf(d.sup_mu));
  EXPECT_FALSE(d.k_bounded);
  EXPECT_FALSE(d.homeomorphic());
  EXPECT_EQ(d.degenerate_count, 64);
}

TEST(Diagnostics, Identity) {
  const auto d = diagnostics(DisplacementField(8, 8));
  EXPECT_EQ(d.sup_mu, 0.0);
  EXPECT_EQ(d.dilation_k, 1.0);
  EXPECT_EQ(d.min_jacobian, 1.0);
  EXPECT_EQ(d.fold_count, 0);
  EXPECT_TRUE(d.homeomorphic());
}

TEST(Diagnostics, HalfConjugateGivesKThree) {
  const auto d = diagnostics(affine(8, 8, 1.0, 0.5));
  EXPECT_NEAR(d.sup_mu, 0.5, 1e-12);
  EXPECT_NEAR(d.dilation_k, 3.0, 1e-11);
}

TEST(Diagnostics, OrientationReversalFolds) {
  DisplacementField f(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) f.dx[f.index(y, x)] = -2.0 * x;
  const auto d = diagnostics(f);
  EXPECT_GT(d.fold_count, 0);
  EXPECT_GE(d.sup_mu, 1.0);
  EXPECT_FALSE(d.k_bounded);
  EXPECT_LE(d.min_jacobian, 0.0);
}

TEST(Diagnostics, MuBelowOneIffPositiveJacobian) {
  int folded = 0;
  for (int k = 0; k < 200; ++k) {
    const auto f = smooth_field(16, 2.0 + 0.05 * k, 4.0, 1000 + k);
    const auto b = beltrami(f);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        const auto i = f.index(y, x);
        const double det = jacobian_at(f, y, x).determinant();
        if (b.degenerate[i]) continue;
        EXPECT_EQ(std::abs(b.mu[i]) < 1.0, det > 0.0) << "field " << k << " pixel " << i;
        folded += det <= 0.0;
      }
  }
  EXPECT_GT(folded, 0);  // the sweep reaches folding amplitudes
}

TEST(BcLoss, Examples) {
  const std::vector<DisplacementField> id(3, DisplacementField(8, 8));
  EXPECT_EQ(bc_loss(id, id), 0.0);
  const auto f = affine(16, 16, 1.0, 0.3);
  // Inverse of z + 0.3 zbar is (z - 0.3 zbar) / 0.91.
  const auto g = affine(16, 16, 1.0 / 0.91, -0.3 / 0.91);
  EXPECT_NEAR(bc_loss(std::vector{f}, std::vector{g}), 0.045, 1e-12);
  EXPECT_NEAR(bc_loss(std::vector{f, f}, std::vector{g, g}), 0.045, 1e-12);
  EXPECT_THROW(bc_loss(std::vector{f}, std::vector<DisplacementField>{}), DimensionError);
  EXPECT_THROW(bc_loss(std::vector<DisplacementField>{}, std::vector<DisplacementField>{}), DimensionError);
}

TEST(BcLoss, InvariantUnderReordering) {
  const auto a = smooth_field(12, 2.0, 4.0, 1), b = smooth_field(12, 3.0, 4.0, 2), c = smooth_field(12, 1.0, 4.0, 3);
  EXPECT_NEAR(bc_loss(std::vector{a, b, c}, std::vector{c, a, b}), bc_loss(std::vector{c, a, b}, std::vector{b, c, a}),
              1e-15);
}

TEST(BcLoss, DegenerateClampValue) {
  DisplacementField f(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      f.dx[f.index(y, x)] = -x;
      f.dy[f.index(y, x)] = -y;
    }
  EXPECT_NEAR(mean_squared_mu(f), kMuClamp * kMuClamp, 1e-12);
}

TEST(BcLoss, GradientMatchesFiniteDifferences) {
  for (int seed = 0; seed < 5; ++seed) {
    const auto f = cqcd::testing::random_field(8, 8, 50 + seed, 0.3);
    DisplacementField grad(8, 8);
    mean_squared_mu(f, &grad, 1.0);
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < f.pixel_count(); ++i)
      for (int comp = 0; comp < 2; ++comp) {
        DisplacementField p = f, m = f;
        (comp ? p.dy : p.dx)[i] += h;
        (comp ? m.dy : m.dx)[i] -= h;
        const double num = (mean_squared_mu(p) - mean_squared_mu(m)) / (2 * h);
        const double ana = (comp ? grad.dy : grad.dx)[i];
        worst = std::max(worst, std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-8}));
      }
    EXPECT_LE(worst, 1e-4) << "seed " << seed;
  }
}

TEST(Inversion, ZeroField) {
  const auto r = invert_field(DisplacementField(8, 8));
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.iterations, 1);
  for (double v : r.inverse.dx) EXPECT_EQ(v, 0.0);
}

TEST(Inversion, ConstantShift) {
  DisplacementField f(16, 16);
  std::ranges::fill(f.dx, 2.0);
  const auto r = invert_field(f);
  EXPECT_TRUE(r.converged);
  for (int y = 0; y < 16; ++y)
    for (int x = 2; x < 14; ++x) {
      EXPECT_NEAR(r.inverse.dx[f.index(y, x)], -2.0, 1e-12);
      EXPECT_NEAR(r.inverse.dy[f.index(y, x)], 0.0, 1e-12);
    }
}

TEST(Inversion, SmoothFieldRoundTrip) {
  const auto f = smooth_field(48, 3.0, 16.0, 9);
  const auto r = invert_field(f);
  ASSERT_TRUE(r.converged);
  const auto err = roundtrip_error(f, r.inverse);
  double worst = 0.0;
  for (int y = 4; y < 44; ++y)
    for (int x = 4; x < 44; ++x) worst = std::max(worst, err[f.index(y, x)]);
  EXPECT_LT(worst, 1e-2);
}

TEST(Inversion, NonConvergenceReported) {
  const auto f = smooth_field(32, 12.0, 3.0, 4);
  const auto r = invert_field(f, 1e-3, 3);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 3);
  EXPECT_GT(r.residual, 0.0);
}
