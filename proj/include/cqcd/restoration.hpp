#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cqcd/estimator.hpp"
#include "cqcd/image.hpp"
#include "cqcd/losses.hpp"
#include "cqcd/optim.hpp"
#include "cqcd/remover.hpp"
#include "cqcd/tightframe.hpp"

namespace cqcd::restoration {

struct RestorationConfig {
  double lambda = 0.1;
  int tf_level = 1;
  /// false: the remover (and conv estimator) read raw intensities.
  bool use_tf_features = true;
  EstimatorConfig estimator;
  RemoverConfig remover;

  int total_epochs = 1000;
  int phase_epochs = 50;
  double lr_estimator = 1e-2;
  double lr_remover = 1e-3;
  double lr_decay = 0.5;
  int decay_every = 250;
  double early_stop_tolerance = 1e-5;
  int early_stop_window = 100;

  double inverse_tol = 1e-3;
  int inverse_max_iter = 50;

  /// Remove the across-frame mean displacement after every estimator step.
  bool center_fields = true;
  /// Start the alternation with a remover block.
  bool remover_first = true;
  std::uint64_t seed = 0;

  void validate() const;
};

std::string config_to_json(const RestorationConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
RestorationConfig config_from_json(const std::string& text);

/// Inputs that stay fixed during optimization.
struct Problem {
  FrameSequence frames;
  tightframe::FilterBank bank;
  int tf_level = 1;
  bool use_tf_features = true;
  /// Features of the observed frames (estimator input).
  FeatureSet frame_features;

  static Problem make(const FrameSequence& frames, const RestorationConfig& config);

  int height() const { return frames.front().height(); }
  int width() const { return frames.front().width(); }
  int channels() const { return frames.front().channels(); }
  int planes_per_frame() const;
  std::vector<Image> features(const Image& img) const;
  Image features_adjoint(std::span<const Image> planes) const;
};

struct RestorationState {
  RestorationConfig config;
  DeformationEstimator estimator;
  BlurRemover remover;
  RmsProp estimator_optimizer;
  Adam remover_optimizer;
  int epoch = 0;
  bool stopped_early = false;
  std::vector<LossBreakdown> history;
  /// Epochs in which at least one inversion hit the iteration limit.
  int nonconverged_epochs = 0;

  std::vector<DisplacementField> fields;
  std::vector<DisplacementField> inverses;
  Image restored;
  LossBreakdown final_losses;
  std::vector<std::string> warnings;
};

RestorationState initialize(const RestorationConfig& config, const Problem& problem);

/// One pass of the cycle: fields -> warps -> features -> restored image ->
/// inverses -> redistortions -> losses.
struct Evaluation {
  std::vector<DisplacementField> fields;
  std::vector<DisplacementField> inverses;
  std::vector<bool> inverse_converged;
  std::vector<Image> warped;
  std::vector<std::vector<Image>> features;
  Eigen::MatrixXd input;
  BlurRemover::Cache cache;
  Image restored;
  std::vector<Image> redistorted;
  LossBreakdown losses;
};

/// With `fixed_inverses` the inversion step is skipped and those fields are
/// used instead.
Evaluation evaluate(const RestorationState& state, const Problem& problem, RemoverMode mode,
                    const std::vector<DisplacementField>* fixed_inverses = nullptr);

/// dL_DE / d(estimator parameters). The inverses are treated as constants.
std::vector<double> estimator_gradient(const RestorationState& state, const Problem& problem,
                                       const Evaluation& ev);

/// dL_BR / d(remover parameters).
std::vector<double> remover_gradient(const RestorationState& state, const Problem& problem,
                                     const Evaluation& ev);

struct PhaseEvent {
  int epoch;
  bool estimator_phase;
  LossBreakdown losses;
};
using ProgressCallback = std::function<void(const PhaseEvent&)>;

/// Runs epochs until `until_epoch` (clamped to total_epochs) or early stop,
/// then refreshes the final outputs. Throws NumericalError on a non-finite
/// loss; `state` then holds everything up to the failing epoch.
void train(RestorationState& state, const Problem& problem, int until_epoch,
           const ProgressCallback& progress = {});

/// Recomputes fields, inverses, restored image and final losses from the
/// current parameters (eval mode).
void finalize(RestorationState& state, const Problem& problem);

struct OptimizeResult {
  Image restored;
  std::vector<DisplacementField> fields;
  std::vector<DisplacementField> inverses;
  RestorationState state;
};

OptimizeResult optimize(const RestorationConfig& config, const FrameSequence& frames,
                        const ProgressCallback& progress = {});

/// Learning-rate multiplier for `epoch`.
double decay_factor(const RestorationConfig& config, int epoch);
/// Whether `epoch` trains the estimator.
bool is_estimator_epoch(const RestorationConfig& config, int epoch);
/// Early-stop rule on the L_DE history.
bool should_stop(const RestorationConfig& config, const std::vector<LossBreakdown>& history);

}  // namespace cqcd::restoration
