#include "cqcd/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cqcd/checkpoint.hpp"
#include "cqcd/error.hpp"
#include "cqcd/field_io.hpp"
#include "cqcd/gradient_check.hpp"
#include "cqcd/image_io.hpp"
#include "cqcd/metrics.hpp"
#include "cqcd/quasiconformal.hpp"
#include "cqcd/restoration.hpp"
#include "cqcd/simulator.hpp"
#include "cqcd/tightframe.hpp"

namespace cqcd::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Thrown when a check subcommand falls outside its tolerance.
struct ToleranceFailure {};

/// Lets config files use flat keys: unsectioned entries belong to whichever
/// subcommand was selected on the command line.
class FlatConfig : public CLI::ConfigINI {
 public:
  explicit FlatConfig(const CLI::App* app) : app_(app) {}
  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    auto items = CLI::ConfigINI::from_config(in);
    const auto subs = app_->get_subcommands();
    if (subs.empty()) return items;
    for (auto& item : items)
      if (item.parents.empty()) item.parents = {subs.front()->get_name()};
    return items;
  }

 private:
  const CLI::App* app_;
};

/// Non-finite values become strings so every output stays valid JSON.
json num(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

json to_json(const qc::MapDiagnostics& d) {
  return {{"sup_mu", num(d.sup_mu)},       {"dilation_k", num(d.dilation_k)},
          {"k_bounded", d.k_bounded},      {"min_jacobian", num(d.min_jacobian)},
          {"fold_count", d.fold_count},    {"degenerate_count", d.degenerate_count},
          {"homeomorphic", d.homeomorphic()}};
}

json to_json(const restoration::LossBreakdown& l) {
  return {{"l_rec", num(l.rec)}, {"l_dist", num(l.dist)}, {"l_bc", num(l.bc)}, {"l_de", num(l.de)}, {"l_br", num(l.br)}};
}

json field_summary(const DisplacementField& f) {
  json j = to_json(qc::diagnostics(f));
  j["mean_magnitude"] = num(mean_magnitude(f));
  j["max_magnitude"] = num(max_magnitude(f));
  return j;
}

void emit(const json& j) { std::cout << j.dump() << std::endl; }

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

bool is_image_file(const fs::path& p) {
  const auto ext = p.extension().string();
  return ext == ".png" || ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

/// A single directory expands to its frame_* images in name order.
FrameSequence load_frames(const std::vector<std::string>& inputs) {
  std::vector<fs::path> paths;
  if (inputs.size() == 1 && fs::is_directory(inputs.front())) {
    for (const auto& entry : fs::directory_iterator(inputs.front()))
      if (entry.is_regular_file() && entry.path().filename().string().starts_with("frame_") &&
          is_image_file(entry.path()))
        paths.push_back(entry.path());
    std::ranges::sort(paths);
    if (paths.empty()) throw IoError("no frame_* images in " + inputs.front());
  } else {
    for (const auto& s : inputs) paths.emplace_back(s);
  }
  FrameSequence frames;
  for (const auto& p : paths) frames.push_back(load_image(p));
  return frames;
}

std::vector<DisplacementField> load_numbered_fields(const fs::path& dir, const std::string& prefix, int count) {
  std::vector<DisplacementField> out;
  for (int t = 0; t < count; ++t) out.push_back(load_field(dir / sim::numbered(prefix, t, ".fld")));
  return out;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string input;
  std::string out;
  std::string preset = "mild";
  int frames = 10;
  std::uint64_t seed = 0;
  int size = 64;
  int channels = 1;
  std::optional<double> amplitude, correlation_length, blur_sigma, noise_sigma;
};

void simulate(const SimulateArgs& a) {
  if (a.out.empty()) throw ConfigError("simulate: an output directory is required");
  auto cfg = sim::TurbulenceConfig::from_preset(sim::parse_preset(a.preset), a.frames, a.seed);
  if (a.amplitude) cfg.amplitude = *a.amplitude;
  if (a.correlation_length) cfg.correlation_length = *a.correlation_length;
  if (a.blur_sigma) cfg.blur_sigma = *a.blur_sigma;
  if (a.noise_sigma) cfg.noise_sigma = *a.noise_sigma;
  if (a.amplitude || a.correlation_length || a.blur_sigma || a.noise_sigma) cfg.preset = sim::Preset::kCustom;
  cfg.validate();
  const Image clean = a.input.empty() ? sim::default_scene(a.size, a.size, a.channels) : load_image(a.input);
  const auto bundle = sim::generate(clean, cfg);
  sim::save_bundle(bundle, a.out);
  double mag = 0.0;
  for (const auto& f : bundle.fields) mag += mean_magnitude(f);
  emit({{"frames", cfg.frames},
        {"preset", sim::to_string(cfg.preset)},
        {"seed", cfg.seed},
        {"mean_field_magnitude", num(mag / static_cast<double>(bundle.fields.size()))},
        {"out", a.out}});
}

// ---------------------------------------------------------------------------

struct RestoreArgs {
  std::vector<std::string> inputs;
  std::string out = "restore_out";
  restoration::RestorationConfig config;
  std::string backend = "grid";
  bool no_tf = false;
  bool no_center = false;
  bool estimator_first = false;
  std::string resume;
  bool checkpoint = false;
  int bit_depth = 8;
  bool quiet = false;
};

void restore(RestoreArgs a) {
  auto& cfg = a.config;
  cfg.estimator.backend = restoration::parse_backend(a.backend);
  cfg.use_tf_features = !a.no_tf;
  cfg.center_fields = !a.no_center;
  cfg.remover_first = !a.estimator_first;
  cfg.validate();
  const FrameSequence frames = load_frames(a.inputs);
  validate_sequence(frames, 2);

  const fs::path out(a.out);
  fs::create_directories(out);
  write_json(json::parse(restoration::config_to_json(cfg)), out / "config.json");

  const auto problem = restoration::Problem::make(frames, cfg);
  restoration::RestorationState state;
  if (!a.resume.empty()) {
    auto ckp = restoration::load_checkpoint(a.resume);
    // Flags may extend the schedule of a resumed run but nothing else.
    ckp.config.total_epochs = cfg.total_epochs;
    state = restoration::restore_state(ckp, problem);
  } else {
    state = restoration::initialize(cfg, problem);
  }

  auto progress = [&](const restoration::PhaseEvent& e) {
    if (a.quiet) return;
    std::cerr << "epoch " << e.epoch << (e.estimator_phase ? " estimator" : " remover") << " phase: L_DE "
              << e.losses.de << " L_BR " << e.losses.br << " L_bc " << e.losses.bc << '\n';
  };

  const auto start = std::chrono::steady_clock::now();
  try {
    restoration::train(state, problem, cfg.total_epochs, progress);
  } catch (const NumericalError& e) {
    restoration::write_losses_csv(state.history, out / "losses.csv");
    json d = {{"error", e.what()}, {"epoch", state.epoch}, {"history_length", state.history.size()}};
    if (!state.history.empty()) d["last_losses"] = to_json(state.history.back());
    write_json(d, out / "diagnostics.json");
    throw;
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  save_image(state.restored, out / "restored.png", a.bit_depth);
  json fields = json::array(), inverses = json::array();
  double mean_d = 0.0;
  bool fold_free = true;
  for (std::size_t t = 0; t < state.fields.size(); ++t) {
    save_field(state.fields[t], out / sim::numbered("est_field", static_cast<int>(t), ".fld"));
    save_field(state.inverses[t], out / sim::numbered("inv_field", static_cast<int>(t), ".fld"));
    fields.push_back(field_summary(state.fields[t]));
    inverses.push_back(field_summary(state.inverses[t]));
    fold_free = fold_free && fields.back()["fold_count"] == 0 && inverses.back()["fold_count"] == 0;
    mean_d += mean_magnitude(state.fields[t]);
  }
  mean_d /= static_cast<double>(state.fields.size());
  restoration::write_losses_csv(state.history, out / "losses.csv");
  if (a.checkpoint) restoration::save_checkpoint(restoration::make_checkpoint(state, problem), out / "checkpoint.bin");

  const json report = {{"schema_version", kReportSchemaVersion},
                       {"frames", frames.size()},
                       {"height", problem.height()},
                       {"width", problem.width()},
                       {"epochs_run", state.epoch},
                       {"stopped_early", state.stopped_early},
                       {"final_losses", to_json(state.final_losses)},
                       {"mean_displacement", num(mean_d)},
                       {"fields", fields},
                       {"inverse_fields", inverses},
                       {"warnings", state.warnings},
                       {"wall_time_s", wall},
                       {"config", json::parse(restoration::config_to_json(state.config))}};
  write_json(report, out / "report.json");
  emit({{"out", a.out},
        {"epochs_run", state.epoch},
        {"stopped_early", state.stopped_early},
        {"l_de", num(state.final_losses.de)},
        {"l_br", num(state.final_losses.br)},
        {"mean_displacement", num(mean_d)},
        {"fold_free", fold_free},
        {"wall_time_s", wall}});
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string restored, clean, bundle, fields, report;
  std::string field_prefix = "inv_field";
};

void evaluate(EvaluateArgs a) {
  if (!a.report.empty()) {
    std::ifstream in(a.report);
    if (!in) throw IoError("cannot open " + a.report);
    json r;
    try {
      r = json::parse(in);
    } catch (const json::exception& e) {
      throw FormatError(a.report + ": " + e.what());
    }
    if (!r.contains("schema_version") || r["schema_version"] != kReportSchemaVersion)
      throw FormatError(a.report + ": unsupported report schema version");
    const fs::path dir = fs::path(a.report).parent_path();
    if (a.restored.empty()) a.restored = (dir / "restored.png").string();
    if (a.fields.empty()) a.fields = dir.empty() ? "." : dir.string();
  }
  if (a.clean.empty() && !a.bundle.empty()) a.clean = (fs::path(a.bundle) / "clean.png").string();
  if (a.clean.empty()) throw ConfigError("evaluate: a clean reference is required (--clean or --bundle)");
  if (a.restored.empty()) throw ConfigError("evaluate: --restored is required");

  const Image clean = load_image(a.clean);
  const Image restored = load_image(a.restored);
  json j = {{"psnr", num(psnr(restored, clean))}, {"ssim", num(ssim(restored, clean))}};

  if (!a.bundle.empty()) {
    const auto bundle = sim::load_bundle(a.bundle);
    const Image avg = average_frames(bundle.frames);
    j["baseline"] = {{"psnr", num(psnr(avg, clean))}, {"ssim", num(ssim(avg, clean))}};
    if (!a.fields.empty()) {
      const auto est = load_numbered_fields(a.fields, a.field_prefix, static_cast<int>(bundle.fields.size()));
      json per = json::array();
      double mean = 0.0, zero = 0.0;
      for (std::size_t t = 0; t < est.size(); ++t) {
        const auto e = restoration::field_error(est[t], bundle.fields[t]);
        per.push_back({{"mean_epe", num(e.mean_epe)}, {"max_epe", num(e.max_epe)}});
        mean += e.mean_epe;
        zero += mean_magnitude(bundle.fields[t]);
      }
      const double T = static_cast<double>(est.size());
      j["epe"] = per;
      j["mean_epe"] = num(mean / T);
      j["zero_field_mean_epe"] = num(zero / T);
    }
  }
  emit(j);
}

// ---------------------------------------------------------------------------

void tf_roundtrip(const std::string& input, int levels, int size) {
  const auto bank = tightframe::build_filter_bank();
  const Image img = input.empty() ? sim::default_scene(size, size, 1) : load_image(input);
  const double uep = tightframe::uep_residual(bank);
  double err = 0.0;
  for (int c = 0; c < img.channels(); ++c) {
    const Image plane = img.channel(c);
    const Image back = tightframe::reconstruct(tightframe::decompose(plane, levels, bank), bank);
    for (std::size_t i = 0; i < plane.size(); ++i) err = std::max(err, std::abs(plane.data()[i] - back.data()[i]));
  }
  emit({{"uep_residual", num(uep)}, {"recon_error", num(err)}, {"levels", levels}});
  if (!(uep <= 1e-12 && err <= 1e-9)) throw ToleranceFailure{};
}

void inspect_bc(const std::string& path, const std::string& mu_image) {
  const auto field = load_field(path);
  const auto d = qc::diagnostics(field);
  if (!mu_image.empty()) {
    // |mu| as gray, 1 and above (folds, degenerate pixels) saturate
    const auto b = qc::beltrami(field);
    Image img(field.height, field.width, 1);
    for (std::size_t i = 0; i < b.mu.size(); ++i) img.data()[i] = b.degenerate[i] ? 1.0 : std::min(1.0, std::abs(b.mu[i]));
    save_image(img, mu_image, 16);
  }
  emit(to_json(d));
  if (!d.homeomorphic()) throw ToleranceFailure{};
}

void gradient_check(const restoration::GradientCheckOptions& o, double tolerance) {
  const auto r = restoration::gradient_check(o);
  emit({{"max_rel_grad_err", num(r.max_rel_error)},
        {"max_rel_grad_err_de", num(r.max_rel_error_de)},
        {"max_rel_grad_err_br", num(r.max_rel_error_br)},
        {"checked_de", r.checked_de},
        {"checked_br", r.checked_br},
        {"skipped", r.skipped}});
  if (!(r.max_rel_error <= tolerance)) throw ToleranceFailure{};
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Multi-frame deturbulence by circular deformation estimation and blur removal", "cqcd"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Flat key = value file; keys match flag names; flags take precedence");
  app.config_formatter(std::make_shared<FlatConfig>(&app));
  app.allow_config_extras(false);

  // simulate
  SimulateArgs sa;
  std::string sim_out_flag;
  auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic distorted sequence with ground truth");
  sim_cmd->add_option("input", sa.input, "Clean image (default: built-in scene)");
  sim_cmd->add_option("output", sa.out, "Output directory");
  sim_cmd->add_option("--out", sim_out_flag, "Output directory");
  sim_cmd->add_option("--preset", sa.preset, "mild | medium | severe")->check(CLI::IsMember({"mild", "medium", "severe"}));
  sim_cmd->add_option("--frames", sa.frames, "Number of frames")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--seed", sa.seed, "Random seed");
  sim_cmd->add_option("--size", sa.size, "Side of the built-in scene")->check(CLI::Range(8, 4096));
  sim_cmd->add_option("--channels", sa.channels, "Channels of the built-in scene")->check(CLI::IsMember({1, 3}));
  sim_cmd->add_option("--amplitude", sa.amplitude, "Override: max displacement, px");
  sim_cmd->add_option("--correlation-length", sa.correlation_length, "Override: field correlation length, px");
  sim_cmd->add_option("--blur-sigma", sa.blur_sigma, "Override: blur sigma, px");
  sim_cmd->add_option("--noise-sigma", sa.noise_sigma, "Override: noise standard deviation");

  // restore
  RestoreArgs ra;
  auto& rc = ra.config;
  auto* res_cmd = app.add_subcommand("restore", "Restore one image from a distorted sequence");
  res_cmd->add_option("inputs", ra.inputs, "Frame images, or a directory of frame_* images")->required();
  res_cmd->add_option("--out", ra.out, "Output directory");
  res_cmd->add_option("--lambda", rc.lambda, "Weight of the Beltrami regularizer")->check(CLI::NonNegativeNumber);
  res_cmd->add_option("--tf-level", rc.tf_level, "Tight-frame decomposition level")->check(CLI::Range(1, 3));
  res_cmd->add_option("--backend", ra.backend, "Deformation estimator")->check(CLI::IsMember({"grid", "conv"}));
  res_cmd->add_option("--epochs", rc.total_epochs, "Total epochs")->check(CLI::NonNegativeNumber);
  res_cmd->add_option("--seed", rc.seed, "Random seed");
  res_cmd->add_flag("--no-tf", ra.no_tf, "Feed raw intensities instead of tight-frame features");
  res_cmd->add_option("--phase-epochs", rc.phase_epochs, "Epochs per alternation block")->check(CLI::PositiveNumber);
  res_cmd->add_option("--lr-estimator", rc.lr_estimator, "Estimator learning rate")->check(CLI::PositiveNumber);
  res_cmd->add_option("--lr-remover", rc.lr_remover, "Remover learning rate")->check(CLI::PositiveNumber);
  res_cmd->add_option("--grid-spacing", rc.estimator.grid_spacing, "Control-point spacing, px")->check(CLI::PositiveNumber);
  res_cmd->add_option("--displacement-scale", rc.estimator.displacement_scale, "Displacement bound, px")
      ->check(CLI::PositiveNumber);
  res_cmd->add_option("--hidden", rc.remover.hidden, "Remover hidden width")->check(CLI::PositiveNumber);
  res_cmd->add_flag("--no-center", ra.no_center, "Keep the common displacement of all frames");
  res_cmd->add_flag("--estimator-first", ra.estimator_first, "Start the alternation with an estimator block");
  res_cmd->add_option("--resume", ra.resume, "Continue from a checkpoint file");
  res_cmd->add_flag("--checkpoint", ra.checkpoint, "Write checkpoint.bin next to the results");
  res_cmd->add_option("--bit-depth", ra.bit_depth, "Bit depth of restored.png")->check(CLI::IsMember({8, 16}));
  res_cmd->add_flag("--quiet", ra.quiet, "No progress lines");

  // evaluate
  EvaluateArgs ea;
  std::uint64_t unused_seed = 0;
  auto* eval_cmd = app.add_subcommand("evaluate", "PSNR/SSIM and field errors against ground truth");
  eval_cmd->add_option("--restored", ea.restored, "Restored image");
  eval_cmd->add_option("--clean", ea.clean, "Clean reference image");
  eval_cmd->add_option("--bundle", ea.bundle, "Simulator bundle (clean image, frames, reference fields)");
  eval_cmd->add_option("--fields", ea.fields, "Directory with estimated fields");
  eval_cmd->add_option("--field-prefix", ea.field_prefix, "File prefix of the estimated fields");
  eval_cmd->add_option("--report", ea.report, "report.json of a restore run");
  eval_cmd->add_option("--seed", unused_seed, "Accepted for uniformity; unused");

  // tf-roundtrip
  std::string tf_input;
  int tf_level = 1, tf_size = 64;
  auto* tf_cmd = app.add_subcommand("tf-roundtrip", "Check the tight-frame filter bank and reconstruction");
  tf_cmd->add_option("input", tf_input, "Image (default: built-in scene)");
  tf_cmd->add_option("--tf-level", tf_level, "Decomposition level")->check(CLI::Range(1, 8));
  tf_cmd->add_option("--size", tf_size, "Side of the built-in scene")->check(CLI::Range(8, 4096));
  tf_cmd->add_option("--seed", unused_seed, "Accepted for uniformity; unused");

  // inspect-bc
  std::string field_path;
  auto* bc_cmd = app.add_subcommand("inspect-bc", "Beltrami diagnostics of a stored field");
  bc_cmd->add_option("field", field_path, "Field file")->required();
  std::string mu_image;
  bc_cmd->add_option("--mu-image", mu_image, "Also write |mu| as a grayscale PNG");
  bc_cmd->add_option("--seed", unused_seed, "Accepted for uniformity; unused");

  // gradient-check
  restoration::GradientCheckOptions go;
  std::string gc_backend = "grid";
  double gc_tol = 1e-4;
  auto* gc_cmd = app.add_subcommand("gradient-check", "Compare analytic and finite-difference gradients");
  gc_cmd->add_option("--seed", go.seed, "Random seed");
  gc_cmd->add_option("--samples", go.samples, "Parameters per objective")->check(CLI::PositiveNumber);
  gc_cmd->add_option("--lambda", go.lambda, "Weight of the Beltrami regularizer")->check(CLI::NonNegativeNumber);
  gc_cmd->add_option("--frames", go.frames, "Frames")->check(CLI::Range(2, 3));
  gc_cmd->add_option("--size", go.size, "Image side")->check(CLI::Range(8, 16));
  gc_cmd->add_option("--backend", gc_backend, "Deformation estimator")->check(CLI::IsMember({"grid", "conv"}));
  gc_cmd->add_flag("--linear", go.linear_remover, "Linear remover path");
  gc_cmd->add_option("--tolerance", gc_tol, "Pass threshold")->check(CLI::PositiveNumber);

  for (auto* sub : {sim_cmd, res_cmd, eval_cmd, tf_cmd, bc_cmd, gc_cmd}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (sim_cmd->parsed()) {
      if (!sim_out_flag.empty()) {
        if (!sa.out.empty()) sa.input = sa.out;  // "simulate in.png --out dir" binds the image to `out`
        sa.out = sim_out_flag;
      } else if (sa.out.empty()) {
        std::swap(sa.input, sa.out);  // a lone positional is the output directory
      }
      simulate(sa);
    } else if (res_cmd->parsed()) {
      restore(ra);
    } else if (eval_cmd->parsed()) {
      evaluate(ea);
    } else if (tf_cmd->parsed()) {
      tf_roundtrip(tf_input, tf_level, tf_size);
    } else if (bc_cmd->parsed()) {
      inspect_bc(field_path, mu_image);
    } else if (gc_cmd->parsed()) {
      go.backend = restoration::parse_backend(gc_backend);
      gradient_check(go, gc_tol);
    }
  } catch (const ToleranceFailure&) {
    return kExitTolerance;
  } catch (const NumericalError& e) {
    std::cerr << "cqcd: numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "cqcd: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "cqcd: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitOk;
}

}  // namespace cqcd::cli
