#include "cqcd/restoration.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <limits>
#include <sstream>

#include "json.hpp"

#include "cqcd/error.hpp"
#include "cqcd/parallel.hpp"
#include "cqcd/quasiconformal.hpp"
#include "cqcd/sampling.hpp"

namespace cqcd::restoration {

using Eigen::MatrixXd;
using nlohmann::json;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("invalid restoration config: " + what);
}

bool finite(const LossBreakdown& l) {
  return std::isfinite(l.rec) && std::isfinite(l.dist) && std::isfinite(l.bc) && std::isfinite(l.de) &&
         std::isfinite(l.br);
}

/// dL/dI* of rec + dist; also dL_rec/dI_t (direct term) when `dwarped` is set.
Image restored_gradient(const Problem& problem, const Evaluation& ev, std::vector<Image>* dwarped) {
  const std::size_t T = ev.warped.size();
  const Image& r = ev.restored;
  const double scale = 1.0 / (static_cast<double>(T) * static_cast<double>(r.size()));
  std::vector<Image> per_frame(T);
  if (dwarped) dwarped->assign(T, Image());
  parallel::for_each(T, [&](std::size_t t) {
    Image d(r.height(), r.width(), r.channels());
    Image dw(r.height(), r.width(), r.channels());
    Image dred(r.height(), r.width(), r.channels());
    auto rd = r.data(), wd = ev.warped[t].data(), od = problem.frames[t].data(), bd = ev.redistorted[t].data();
    auto dd = d.data(), dwd = dw.data(), dr = dred.data();
    for (std::size_t i = 0; i < rd.size(); ++i) {
      const double s = scale * sign(rd[i] - wd[i]);
      dd[i] += s;
      dwd[i] = -s;
      dr[i] = -scale * sign(od[i] - bd[i]);
    }
    warp_backward(r, ev.inverses[t], dred, &d, nullptr);
    per_frame[t] = std::move(d);
    if (dwarped) (*dwarped)[t] = std::move(dw);
  });
  Image total(r.height(), r.width(), r.channels());
  auto td = total.data();
  for (const auto& d : per_frame) {
    auto dd = d.data();
    for (std::size_t i = 0; i < td.size(); ++i) td[i] += dd[i];
  }
  return total;
}

}  // namespace

void RestorationConfig::validate() const {
  require(std::isfinite(lambda) && lambda >= 0.0, "lambda must be >= 0");
  require(tf_level >= 1 && tf_level <= 3, "tf_level must be in [1, 3]");
  require(estimator.grid_spacing >= 1, "grid_spacing must be >= 1");
  require(std::isfinite(estimator.displacement_scale) && estimator.displacement_scale > 0.0,
          "displacement_scale must be > 0");
  require(estimator.conv_width >= 1, "conv_width must be >= 1");
  require(remover.hidden >= 1, "hidden must be >= 1");
  require(remover.bn_epsilon > 0.0, "bn_epsilon must be > 0");
  require(total_epochs >= 0, "epochs must be >= 0");
  require(phase_epochs >= 1, "phase_epochs must be >= 1");
  require(lr_estimator > 0.0 && lr_remover > 0.0, "learning rates must be > 0");
  require(lr_decay > 0.0 && lr_decay <= 1.0, "lr_decay must be in (0, 1]");
  require(decay_every >= 1, "decay_every must be >= 1");
  require(early_stop_tolerance >= 0.0, "early_stop_tolerance must be >= 0");
  require(early_stop_window >= 1, "early_stop_window must be >= 1");
  require(inverse_tol > 0.0 && inverse_max_iter >= 1, "inverse tolerance/iterations");
}

std::string config_to_json(const RestorationConfig& c) {
  json j = {
      {"lambda", c.lambda},
      {"tf_level", c.tf_level},
      {"use_tf_features", c.use_tf_features},
      {"backend", to_string(c.estimator.backend)},
      {"grid_spacing", c.estimator.grid_spacing},
      {"displacement_scale", c.estimator.displacement_scale},
      {"conv_width", c.estimator.conv_width},
      {"hidden", c.remover.hidden},
      {"linear_remover", c.remover.linear},
      {"bn_epsilon", c.remover.bn_epsilon},
      {"total_epochs", c.total_epochs},
      {"phase_epochs", c.phase_epochs},
      {"lr_estimator", c.lr_estimator},
      {"lr_remover", c.lr_remover},
      {"lr_decay", c.lr_decay},
      {"decay_every", c.decay_every},
      {"early_stop_tolerance", c.early_stop_tolerance},
      {"early_stop_window", c.early_stop_window},
      {"inverse_tol", c.inverse_tol},
      {"inverse_max_iter", c.inverse_max_iter},
      {"center_fields", c.center_fields},
      {"remover_first", c.remover_first},
      {"seed", c.seed},
  };
  return j.dump();
}

RestorationConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("restoration config: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("restoration config: expected an object");
  RestorationConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "lambda") c.lambda = v.get<double>();
      else if (key == "tf_level") c.tf_level = v.get<int>();
      else if (key == "use_tf_features") c.use_tf_features = v.get<bool>();
      else if (key == "backend") c.estimator.backend = parse_backend(v.get<std::string>());
      else if (key == "grid_spacing") c.estimator.grid_spacing = v.get<int>();
      else if (key == "displacement_scale") c.estimator.displacement_scale = v.get<double>();
      else if (key == "conv_width") c.estimator.conv_width = v.get<int>();
      else if (key == "hidden") c.remover.hidden = v.get<int>();
      else if (key == "linear_remover") c.remover.linear = v.get<bool>();
      else if (key == "bn_epsilon") c.remover.bn_epsilon = v.get<double>();
      else if (key == "total_epochs") c.total_epochs = v.get<int>();
      else if (key == "phase_epochs") c.phase_epochs = v.get<int>();
      else if (key == "lr_estimator") c.lr_estimator = v.get<double>();
      else if (key == "lr_remover") c.lr_remover = v.get<double>();
      else if (key == "lr_decay") c.lr_decay = v.get<double>();
      else if (key == "decay_every") c.decay_every = v.get<int>();
      else if (key == "early_stop_tolerance") c.early_stop_tolerance = v.get<double>();
      else if (key == "early_stop_window") c.early_stop_window = v.get<int>();
      else if (key == "inverse_tol") c.inverse_tol = v.get<double>();
      else if (key == "inverse_max_iter") c.inverse_max_iter = v.get<int>();
      else if (key == "center_fields") c.center_fields = v.get<bool>();
      else if (key == "remover_first") c.remover_first = v.get<bool>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else throw ConfigError("restoration config: unknown key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("restoration config: ") + e.what());
  }
  c.validate();
  return c;
}

Problem Problem::make(const FrameSequence& frames, const RestorationConfig& config) {
  config.validate();
  validate_sequence(frames, 2);
  Problem p;
  p.frames = frames;
  p.bank = tightframe::build_filter_bank();
  p.tf_level = config.tf_level;
  p.use_tf_features = config.use_tf_features;
  p.frame_features.resize(frames.size());
  parallel::for_each(frames.size(), [&](std::size_t t) { p.frame_features[t] = p.features(frames[t]); });
  return p;
}

int Problem::planes_per_frame() const {
  return use_tf_features ? channels() * tightframe::planes_per_channel(bank, tf_level) : channels();
}

std::vector<Image> Problem::features(const Image& img) const {
  if (use_tf_features) return tightframe::feature_stack(img, tf_level, bank);
  std::vector<Image> planes;
  for (int c = 0; c < img.channels(); ++c) planes.push_back(img.channel(c));
  return planes;
}

Image Problem::features_adjoint(std::span<const Image> planes) const {
  if (use_tf_features) return tightframe::feature_stack_adjoint(planes, channels(), tf_level, bank);
  Image out(height(), width(), channels());
  for (int c = 0; c < channels(); ++c) std::ranges::copy(planes[c].data(), out.plane(c).begin());
  return out;
}

RestorationState initialize(const RestorationConfig& config, const Problem& problem) {
  config.validate();
  RestorationState s;
  s.config = config;
  const int T = static_cast<int>(problem.frames.size());
  s.estimator = DeformationEstimator(config.estimator, T, problem.height(), problem.width(),
                                     problem.planes_per_frame(), splitmix(config.seed ^ 0x45535449ull));
  s.remover = BlurRemover(T * problem.planes_per_frame(), problem.channels(), config.remover,
                          splitmix(config.seed ^ 0x52454d4full));
  s.estimator_optimizer = RmsProp(s.estimator.parameters().size());
  s.remover_optimizer = Adam(s.remover.parameters().size());
  return s;
}

Evaluation evaluate(const RestorationState& state, const Problem& problem, RemoverMode mode,
                    const std::vector<DisplacementField>* fixed_inverses) {
  const std::size_t T = problem.frames.size();
  const auto& cfg = state.config;
  Evaluation ev;
  ev.fields = state.estimator.estimate(problem.frame_features);
  ev.warped.resize(T);
  ev.features.resize(T);
  if (fixed_inverses) {
    if (fixed_inverses->size() != T) throw DimensionError("evaluate: inverse count mismatch");
    ev.inverses = *fixed_inverses;
  } else {
    ev.inverses.resize(T);
  }
  std::vector<char> converged(T, 1);
  parallel::for_each(T, [&](std::size_t t) {
    ev.warped[t] = warp(problem.frames[t], ev.fields[t]);
    ev.features[t] = problem.features(ev.warped[t]);
    if (!fixed_inverses) {
      auto inv = qc::invert_field(ev.fields[t], cfg.inverse_tol, cfg.inverse_max_iter);
      ev.inverses[t] = std::move(inv.inverse);
      converged[t] = inv.converged ? 1 : 0;
    }
  });
  ev.inverse_converged.assign(converged.begin(), converged.end());

  ev.input = assemble_input(ev.features);
  const MatrixXd y = state.remover.forward(ev.input, mode, &ev.cache);
  ev.restored = matrix_to_image(y, problem.height(), problem.width());

  ev.redistorted.resize(T);
  parallel::for_each(T, [&](std::size_t t) { ev.redistorted[t] = warp(ev.restored, ev.inverses[t]); });
  ev.losses = total_losses(ev.restored, problem.frames, ev.warped, ev.redistorted, ev.fields, ev.inverses,
                           cfg.lambda);
  return ev;
}

std::vector<double> estimator_gradient(const RestorationState& state, const Problem& problem,
                                       const Evaluation& ev) {
  const std::size_t T = problem.frames.size();
  std::vector<Image> dwarped;
  const Image drestored = restored_gradient(problem, ev, &dwarped);

  MatrixXd dinput;
  state.remover.backward(ev.cache, image_to_matrix(drestored), {}, &dinput);
  const auto dfeatures = split_input_gradient(dinput, ev.features);

  const double bc_scale = state.config.lambda / (4.0 * static_cast<double>(T));
  std::vector<DisplacementField> dfields(T);
  parallel::for_each(T, [&](std::size_t t) {
    Image dw = problem.features_adjoint(dfeatures[t]);
    auto a = dw.data();
    auto b = dwarped[t].data();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    DisplacementField g(ev.fields[t].height, ev.fields[t].width);
    warp_backward(problem.frames[t], ev.fields[t], dw, nullptr, &g);
    if (bc_scale > 0.0) qc::mean_squared_mu(ev.fields[t], &g, bc_scale);
    dfields[t] = std::move(g);
  });

  std::vector<double> grad(state.estimator.parameters().size(), 0.0);
  state.estimator.backward(problem.frame_features, dfields, grad);
  return grad;
}

std::vector<double> remover_gradient(const RestorationState& state, const Problem& problem,
                                     const Evaluation& ev) {
  const Image drestored = restored_gradient(problem, ev, nullptr);
  std::vector<double> grad(state.remover.parameters().size(), 0.0);
  state.remover.backward(ev.cache, image_to_matrix(drestored), grad, nullptr);
  return grad;
}

double decay_factor(const RestorationConfig& config, int epoch) {
  return std::pow(config.lr_decay, epoch / config.decay_every);
}

bool is_estimator_epoch(const RestorationConfig& config, int epoch) {
  const bool odd_block = (epoch / config.phase_epochs) % 2 == 1;
  return config.remover_first ? odd_block : !odd_block;
}

bool should_stop(const RestorationConfig& config, const std::vector<LossBreakdown>& history) {
  const std::size_t w = static_cast<std::size_t>(config.early_stop_window);
  if (history.size() <= w) return false;
  const std::size_t split = history.size() - w;
  double before = std::numeric_limits<double>::infinity(), recent = before;
  for (std::size_t i = 0; i < split; ++i) before = std::min(before, history[i].de);
  for (std::size_t i = split; i < history.size(); ++i) recent = std::min(recent, history[i].de);
  const double improvement = (before - recent) / std::max(std::abs(before), 1e-300);
  return improvement < config.early_stop_tolerance;
}

void train(RestorationState& state, const Problem& problem, int until_epoch, const ProgressCallback& progress) {
  const auto& cfg = state.config;
  const int until = std::min(until_epoch, cfg.total_epochs);
  // remover input is fixed during a remover block, so eval statistics only need refreshing when it ends
  std::optional<Eigen::MatrixXd> pending_input;
  while (state.epoch < until && !state.stopped_early) {
    const int e = state.epoch;
    const bool est = is_estimator_epoch(cfg, e);
    const double factor = decay_factor(cfg, e);
    Evaluation ev = evaluate(state, problem, est ? RemoverMode::kEval : RemoverMode::kTrain);
    if (!finite(ev.losses)) {
      std::ostringstream msg;
      msg << "non-finite loss at epoch " << e << " (rec=" << ev.losses.rec << ", dist=" << ev.losses.dist
          << ", bc=" << ev.losses.bc << ")";
      throw NumericalError(msg.str());
    }
    if (progress && e % cfg.phase_epochs == 0) progress({e, est, ev.losses});
    if (est) {
      const auto g = estimator_gradient(state, problem, ev);
      state.estimator_optimizer.step(state.estimator.parameters(), g, cfg.lr_estimator * factor);
      if (cfg.center_fields) state.estimator.center_across_frames();
    } else {
      const auto g = remover_gradient(state, problem, ev);
      state.remover_optimizer.step(state.remover.parameters(), g, cfg.lr_remover * factor);
      if ((e + 1) % cfg.phase_epochs == 0) {
        state.remover.freeze_statistics(ev.input);
        pending_input.reset();
      } else {
        pending_input = std::move(ev.input);
      }
    }
    if (std::ranges::find(ev.inverse_converged, false) != ev.inverse_converged.end()) ++state.nonconverged_epochs;
    state.history.push_back(ev.losses);
    ++state.epoch;
    if (should_stop(cfg, state.history)) state.stopped_early = true;
  }
  if (pending_input) state.remover.freeze_statistics(*pending_input);
  finalize(state, problem);
}

void finalize(RestorationState& state, const Problem& problem) {
  Evaluation ev = evaluate(state, problem, RemoverMode::kEval);
  if (!finite(ev.losses)) throw NumericalError("non-finite loss in final evaluation");
  state.fields = std::move(ev.fields);
  state.inverses = std::move(ev.inverses);
  state.restored = std::move(ev.restored);
  state.final_losses = ev.losses;
  state.warnings.clear();
  if (state.nonconverged_epochs > 0)
    state.warnings.push_back("field inversion hit the iteration limit in " +
                             std::to_string(state.nonconverged_epochs) + " epoch(s)");
  for (std::size_t t = 0; t < ev.inverse_converged.size(); ++t)
    if (!ev.inverse_converged[t])
      state.warnings.push_back("final inversion of field " + std::to_string(t) + " did not converge");
}

OptimizeResult optimize(const RestorationConfig& config, const FrameSequence& frames,
                        const ProgressCallback& progress) {
  const Problem problem = Problem::make(frames, config);
  OptimizeResult r;
  r.state = initialize(config, problem);
  train(r.state, problem, config.total_epochs, progress);
  r.restored = r.state.restored;
  r.fields = r.state.fields;
  r.inverses = r.state.inverses;
  return r;
}

}  // namespace cqcd::restoration
