#include "cqcd/gradient_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "cqcd/error.hpp"
#include "cqcd/quasiconformal.hpp"
#include "cqcd/restoration.hpp"
#include "cqcd/simulator.hpp"

namespace cqcd::restoration {

namespace {

struct Fnv {
  std::uint64_t h = 0xcbf29ce484222325ull;
  void add(std::uint64_t v) {
    h ^= v;
    h *= 0x100000001b3ull;
  }
};

int sgn(double v) { return v > 0.0 ? 1 : (v < 0.0 ? 2 : 0); }

/// Everything piecewise about the objective at this point: ReLU masks, L1
/// residual signs, bilinear cells and clamps of the forward warps, the mu
/// clamp and the output clamp.
std::uint64_t kink_signature(const RestorationState& state, const Problem& problem, const Evaluation& ev) {
  Fnv f;
  f.add(state.estimator.activation_signature(problem.frame_features));
  f.add(BlurRemover::activation_signature(ev.cache));
  for (double y : ev.restored.data()) f.add(y <= 1e-12 || y >= 1.0 - 1e-12);
  for (std::size_t t = 0; t < ev.warped.size(); ++t) {
    auto r = ev.restored.data(), w = ev.warped[t].data(), o = problem.frames[t].data(),
         b = ev.redistorted[t].data();
    for (std::size_t i = 0; i < r.size(); ++i) f.add(static_cast<std::uint64_t>(sgn(r[i] - w[i]) * 3 + sgn(o[i] - b[i])));
    const auto& d = ev.fields[t];
    for (int y = 0; y < d.height; ++y)
      for (int x = 0; x < d.width; ++x) {
        const std::size_t i = d.index(y, x);
        const double sx = x + d.dx[i], sy = y + d.dy[i];
        f.add(static_cast<std::uint64_t>(std::floor(std::clamp(sx, 0.0, d.width - 1.0))));
        f.add(static_cast<std::uint64_t>(std::floor(std::clamp(sy, 0.0, d.height - 1.0))));
        f.add((sx < 0.0) | ((sx > d.width - 1.0) << 1) | ((sy < 0.0) << 2) | ((sy > d.height - 1.0) << 3));
      }
    const auto mu = qc::beltrami(d);
    for (std::size_t i = 0; i < mu.mu.size(); ++i)
      f.add(mu.degenerate[i] || std::abs(mu.mu[i]) >= qc::kMuClamp);
  }
  return f.h;
}

double rel_error(double a, double n, double floor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

}  // namespace

GradientCheckResult gradient_check(const GradientCheckOptions& o) {
  if (o.size < 4 || o.frames < 2 || o.samples < 1 || !(o.step > 0.0))
    throw ConfigError("gradient_check: invalid options");

  auto sim_cfg = sim::TurbulenceConfig::from_preset(sim::Preset::kMild, o.frames, o.seed);
  const auto bundle = sim::generate(sim::default_scene(o.size, o.size, 1), sim_cfg);

  RestorationConfig cfg;
  cfg.lambda = o.lambda;
  cfg.seed = o.seed;
  cfg.estimator.backend = o.backend;
  cfg.estimator.grid_spacing = o.grid_spacing;
  cfg.remover.hidden = o.hidden;
  cfg.remover.linear = o.linear_remover;
  const Problem problem = Problem::make(bundle.frames, cfg);
  RestorationState state = initialize(cfg, problem);

  std::mt19937_64 rng(o.seed ^ 0x6772616463686b00ull);
  const double jitter = o.backend == Backend::kGrid ? o.estimator_jitter : 0.1 * o.estimator_jitter;
  std::uniform_real_distribution<double> uni(-jitter, jitter);
  for (double& p : state.estimator.parameters()) p += uni(rng);

  const Evaluation base = evaluate(state, problem, RemoverMode::kTrain);
  state.remover.freeze_statistics(base.input);
  const std::vector<DisplacementField> inverses = base.inverses;

  GradientCheckResult result;
  auto run = [&](std::vector<double>& params, RemoverMode mode, bool de, double& max_err, int& checked) {
    const Evaluation ev0 = evaluate(state, problem, mode, &inverses);
    const std::uint64_t sig0 = kink_signature(state, problem, ev0);
    const std::vector<double> analytic =
        de ? estimator_gradient(state, problem, ev0) : remover_gradient(state, problem, ev0);
    std::vector<std::size_t> order(params.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t k = 0; k < order.size() && checked < o.samples; ++k) {
      const std::size_t i = order[k];
      const double keep = params[i];
      params[i] = keep + o.step;
      const Evaluation plus = evaluate(state, problem, mode, &inverses);
      const std::uint64_t sp = kink_signature(state, problem, plus);
      params[i] = keep - o.step;
      const Evaluation minus = evaluate(state, problem, mode, &inverses);
      const std::uint64_t sm = kink_signature(state, problem, minus);
      params[i] = keep;
      if (sp != sig0 || sm != sig0) {
        ++result.skipped;
        continue;
      }
      const double lp = de ? plus.losses.de : plus.losses.br;
      const double lm = de ? minus.losses.de : minus.losses.br;
      const double numeric = (lp - lm) / (2.0 * o.step);
      max_err = std::max(max_err, rel_error(analytic[i], numeric, o.floor));
      ++checked;
    }
  };
  run(state.estimator.parameters(), RemoverMode::kEval, true, result.max_rel_error_de, result.checked_de);
  run(state.remover.parameters(), RemoverMode::kTrain, false, result.max_rel_error_br, result.checked_br);
  result.max_rel_error = std::max(result.max_rel_error_de, result.max_rel_error_br);
  return result;
}

}  // namespace cqcd::restoration
