// Acceptance suite: prints one PASS/FAIL line per criterion, exits nonzero if any fails.
// Usage: cqcd_acceptance [criterion numbers...]   (default: all)
#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cqcd/checkpoint.hpp"
#include "cqcd/image_io.hpp"
#include "cqcd/gradient_check.hpp"
#include "cqcd/losses.hpp"
#include "cqcd/metrics.hpp"
#include "cqcd/parallel.hpp"
#include "cqcd/quasiconformal.hpp"
#include "cqcd/restoration.hpp"
#include "cqcd/simulator.hpp"
#include "cqcd/tightframe.hpp"

using namespace cqcd;
using namespace cqcd::restoration;
namespace tf = cqcd::tightframe;
using cd = std::complex<double>;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void log(const std::string& s) {
  std::fprintf(stderr, "  .. %s\n", s.c_str());
  std::fflush(stderr);
}

// ---- shared restoration runs (criteria 6, 9, 11 reuse the mild run) ----

struct Run {
  sim::GroundTruthBundle bundle;
  restoration::OptimizeResult result;
  double seconds = 0.0;
};

Run run_scene(sim::Preset preset, double lambda, bool use_tf) {
  Run r;
  const auto sc = sim::TurbulenceConfig::from_preset(preset, 10, 7);
  r.bundle = sim::generate(sim::default_scene(64, 64, 1), sc);
  restoration::RestorationConfig c;
  c.lambda = lambda;
  c.use_tf_features = use_tf;
  c.total_epochs = 1000;
  c.seed = 7;
  const auto t0 = Clock::now();
  r.result = restoration::optimize(c, r.bundle.frames, [&](const restoration::PhaseEvent& e) {
    if (e.epoch % 250 == 0)
      log(fmt("%s lambda=%g tf=%d epoch %d L_DE %.5f", sim::to_string(preset).c_str(), lambda, int(use_tf), e.epoch,
              e.losses.de));
  });
  r.seconds = seconds_since(t0);
  return r;
}

struct FieldSummary {
  int folds = 0;
  double sup_mu = 0.0;
};

FieldSummary summarize(const restoration::OptimizeResult& r) {
  FieldSummary s;
  for (const auto* set : {&r.fields, &r.inverses})
    for (const auto& f : *set) {
      const auto d = qc::diagnostics(f);
      s.folds += d.fold_count;
      s.sup_mu = std::max(s.sup_mu, d.sup_mu);
    }
  return s;
}

double restored_psnr(const Run& r) { return psnr(r.result.restored, r.bundle.clean); }

Run& mild() {
  static Run run = [] {
    log("mild scene, 1000 epochs");
    return run_scene(sim::Preset::kMild, 0.1, true);
  }();
  return run;
}

// ---- criteria ----

Outcome c1() {
  const auto t0 = Clock::now();
  const double r = tf::uep_residual(tf::build_filter_bank(), 1024);
  const double s = seconds_since(t0);
  return {r <= 1e-12 && s < 1.0, fmt("sup residual %.3e over 1024 samples, %.3fs", r, s)};
}

Outcome c2() {
  const auto t0 = Clock::now();
  const auto bank = tf::build_filter_bank();
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> side(16, 128), level(1, 3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const int h = side(rng), w = side(rng), L = level(rng);
    Image img(h, w, 1);
    for (double& v : img.data()) v = u(rng);
    const Image back = tf::reconstruct(tf::decompose(img, L, bank), bank);
    for (std::size_t i = 0; i < img.data().size(); ++i)
      worst = std::max(worst, std::abs(back.data()[i] - img.data()[i]));
  }
  const double s = seconds_since(t0);
  return {worst <= 1e-9 && s < 30.0, fmt("max abs error %.3e over 100 images, %.2fs", worst, s)};
}

DisplacementField affine(int h, int w, cd a, cd b, cd c) {
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

Outcome c3() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_mu = 0.0;
  bool k_exact = true;
  for (int k = 0; k < 20; ++k) {
    const cd a = std::polar(0.5 + u(rng), 2 * M_PI * u(rng));
    const cd b = a * std::polar(0.9 * k / 19.0, 2 * M_PI * u(rng));
    const auto f = affine(16, 16, a, b, cd(3 * u(rng), 3 * u(rng)));
    const auto mu = qc::beltrami(f);
    for (int y = 1; y < 15; ++y)
      for (int x = 1; x < 15; ++x) worst_mu = std::max(worst_mu, std::abs(mu.mu[f.index(y, x)] - b / a));
    const auto d = qc::diagnostics(f);
    if (d.dilation_k != (1 + d.sup_mu) / (1 - d.sup_mu)) k_exact = false;
  }
  return {worst_mu <= 1e-10 && k_exact,
          fmt("max interior |mu - b/a| %.3e, K identity %s", worst_mu, k_exact ? "exact" : "mismatch")};
}

// Largest spectral norm of the displacement Jacobian (central differences).
double lipschitz(const DisplacementField& f) {
  double worst = 0.0;
  for (int y = 1; y + 1 < f.height; ++y)
    for (int x = 1; x + 1 < f.width; ++x) {
      const double a = 0.5 * (f.dx[f.index(y, x + 1)] - f.dx[f.index(y, x - 1)]);
      const double b = 0.5 * (f.dx[f.index(y + 1, x)] - f.dx[f.index(y - 1, x)]);
      const double c = 0.5 * (f.dy[f.index(y, x + 1)] - f.dy[f.index(y, x - 1)]);
      const double d = 0.5 * (f.dy[f.index(y + 1, x)] - f.dy[f.index(y - 1, x)]);
      const double s = a * a + b * b + c * c + d * d;
      const double det = a * d - b * c;
      worst = std::max(worst, std::sqrt(0.5 * (s + std::sqrt(std::max(0.0, s * s - 4 * det * det)))));
    }
  return worst;
}

Outcome c4() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int converged = 0;
  double worst = 0.0, worst_lip = 0.0;
  for (int k = 0; k < 50; ++k) {
    sim::TurbulenceConfig c;
    c.preset = sim::Preset::kCustom;
    c.amplitude = 1.0 + 4.0 * u(rng);
    c.correlation_length = 6.0 + 14.0 * u(rng);
    c.seed = 1000 + k;
    const int size = 32 + 8 * (k % 5);
    auto f = sim::random_smooth_field(c, size, size, 0);
    const double lip = lipschitz(f), target = 0.05 + 0.4 * u(rng);
    if (lip > target)
      for (std::size_t i = 0; i < f.dx.size(); ++i) {
        f.dx[i] *= target / lip;
        f.dy[i] *= target / lip;
      }
    worst_lip = std::max(worst_lip, lipschitz(f));
    const auto r = qc::invert_field(f);
    if (r.converged) ++converged;
    const auto err = qc::roundtrip_error(f, r.inverse);
    const int margin = static_cast<int>(std::ceil(max_magnitude(f))) + 2;
    for (int y = margin; y < size - margin; ++y)
      for (int x = margin; x < size - margin; ++x) worst = std::max(worst, err[f.index(y, x)]);
  }
  const double s = seconds_since(t0);
  return {converged == 50 && worst < 1e-2 && worst_lip < 0.5 && s < 30.0,
          fmt("%d/50 converged, max interior residual %.3e px, max contraction %.3f, %.2fs", converged, worst,
              worst_lip, s)};
}

Outcome c5() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  int checked = 0, skipped = 0;
  for (double lambda : {0.0, 0.1}) {
    GradientCheckOptions o;
    o.lambda = lambda;
    o.samples = 64;
    const auto r = gradient_check(o);
    worst = std::max(worst, r.max_rel_error);
    checked = std::min(checked == 0 ? r.checked_de + r.checked_br : checked, r.checked_de + r.checked_br);
    skipped += r.skipped;
  }
  const double s = seconds_since(t0);
  return {worst <= 1e-4 && checked >= 64 && s < 120.0,
          fmt("max rel error %.3e, >=%d parameters per run (%d skipped at kinks), %.1fs", worst, checked, skipped,
              s)};
}

Outcome c6() {
  Run& r = mild();
  const double p = restored_psnr(r), base = psnr(average_frames(r.bundle.frames), r.bundle.clean);
  const auto fs_ = summarize(r.result);
  return {p >= base + 1.0 && fs_.folds == 0 && fs_.sup_mu < 1.0 && r.seconds < 600.0,
          fmt("PSNR %.2f dB vs average %.2f dB (gain %+.2f), folds %d, sup_mu %.3f, %d epochs, %.0fs", p, base,
              p - base, fs_.folds, fs_.sup_mu, r.result.state.epoch, r.seconds)};
}

Outcome c7() {
  const auto t0 = Clock::now();
  log("severe scene, lambda 0");
  const Run r0 = run_scene(sim::Preset::kSevere, 0.0, true);
  log("severe scene, lambda 0.1");
  const Run r1 = run_scene(sim::Preset::kSevere, 0.1, true);
  const double s = seconds_since(t0);
  const auto s0 = summarize(r0.result), s1 = summarize(r1.result);
  const double bc0 = r0.result.state.final_losses.bc, bc1 = r1.result.state.final_losses.bc;
  const bool ok = bc0 > bc1 && s1.folds == 0 && (s0.sup_mu >= 1.0 || s0.folds > 0) && s < 1200.0;
  return {ok, fmt("L_bc %.4e (lambda 0) vs %.4e (lambda 0.1); lambda 0: folds %d sup_mu %.3f; lambda 0.1: folds %d "
                  "sup_mu %.3f; %.0fs",
                  bc0, bc1, s0.folds, s0.sup_mu, s1.folds, s1.sup_mu, s)};
}

Outcome c8() {
  const auto t0 = Clock::now();
  log("medium scene, tight-frame features");
  const Run with_tf = run_scene(sim::Preset::kMedium, 0.1, true);
  log("medium scene, raw intensities");
  const Run raw = run_scene(sim::Preset::kMedium, 0.1, false);
  const double s = seconds_since(t0);
  const double p_tf = restored_psnr(with_tf), p_raw = restored_psnr(raw);
  return {p_raw <= p_tf + 0.1 && p_tf >= p_raw && s < 1200.0,
          fmt("PSNR %.3f dB with TF vs %.3f dB raw, %.0fs", p_tf, p_raw, s)};
}

Outcome c9() {
  Run& r = mild();
  // The estimated field undoes the distortion, so its inverse is compared with the simulator's field.
  double est = 0.0, zero = 0.0;
  const std::size_t T = r.bundle.fields.size();
  for (std::size_t t = 0; t < T; ++t) {
    est += field_error(r.result.inverses[t], r.bundle.fields[t]).mean_epe;
    zero += mean_magnitude(r.bundle.fields[t]);
  }
  est /= T;
  zero /= T;
  return {est <= 0.6 * zero, fmt("mean EPE %.4f px vs zero-field %.4f px (ratio %.3f)", est, zero, est / zero)};
}

Outcome c10() {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    std::vector<Image> frames(5, Image(4, 4, 1));
    for (auto& f : frames)
      for (double& v : f.data()) v = u(rng);
    Image median(4, 4, 1);
    double brute = 0.0;
    for (int i = 0; i < 16; ++i) {
      std::vector<double> v;
      for (const auto& f : frames) v.push_back(f.data()[i]);
      auto sorted = v;
      std::ranges::sort(sorted);
      median.data()[i] = sorted[2];
      // scan a fine grid plus every observed value
      std::vector<double> candidates = v;
      for (int k = 0; k <= 4000; ++k) candidates.push_back(k / 4000.0);
      double best = std::numeric_limits<double>::infinity();
      for (double c : candidates) {
        double s = 0.0;
        for (double x : v) s += std::abs(c - x);
        best = std::min(best, s);
      }
      brute += best;
    }
    brute /= 16.0 * 5.0;
    worst = std::max(worst, std::abs(loss_rec(median, frames) - brute));
  }
  return {worst <= 1e-12, fmt("max |L_rec(median) - brute-force minimum| %.3e over 20 instances", worst)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome c11() {
  Run& first = mild();
  log("mild scene, second run");
  const Run second = run_scene(sim::Preset::kMild, 0.1, true);
  const fs::path dir = fs::temp_directory_path() / "cqcd_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_losses_csv(first.result.state.history, dir / "a.csv");
  write_losses_csv(second.result.state.history, dir / "b.csv");
  save_image(first.result.restored, dir / "a.png", 16);
  save_image(second.result.restored, dir / "b.png", 16);
  const bool csv = slurp(dir / "a.csv") == slurp(dir / "b.csv");
  const bool png = slurp(dir / "a.png") == slurp(dir / "b.png");
  const std::span<const double> x = first.result.restored.data(), y = second.result.restored.data();
  const bool raw = x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size_bytes()) == 0;
  fs::remove_all(dir);
  return {csv && png && raw, fmt("loss CSV %s, restored PNG %s, restored values %s", csv ? "identical" : "DIFFERENT",
                                 png ? "identical" : "DIFFERENT", raw ? "identical" : "DIFFERENT")};
}

}  // namespace

int main(int argc, char** argv) {
  parallel::tune_allocator();
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"UEP identity", c1},
      {"perfect reconstruction", c2},
      {"Beltrami affine oracle", c3},
      {"inversion round-trip", c4},
      {"gradient correctness", c5},
      {"end-to-end mild scene", c6},
      {"lambda ablation trend", c7},
      {"tight-frame ablation trend", c8},
      {"deformation recovery", c9},
      {"median minimizes L_rec", c10},
      {"determinism", c11},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("[%s] %2d %-28s %s\n", o.pass ? "PASS" : "FAIL", id, criteria[k].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
