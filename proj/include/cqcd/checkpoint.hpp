#pragma once

#include <filesystem>
#include <vector>

#include "cqcd/restoration.hpp"

namespace cqcd::restoration {

/// Binary training snapshot ("CQCDCKP1", little-endian): config echo, problem
/// dimensions, epoch, every parameter array, optimizer accumulators,
/// normalization statistics and the loss history, all float64.
struct Checkpoint {
  RestorationConfig config;
  int frames = 0, height = 0, width = 0, channels = 0;
  int epoch = 0;
  bool stopped_early = false;
  int nonconverged_epochs = 0;
  std::vector<double> estimator_params, remover_params, running_stats;
  std::vector<double> rms_square_avg, adam_m, adam_v;
  long long adam_steps = 0;
  std::vector<LossBreakdown> history;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

Checkpoint make_checkpoint(const RestorationState& state, const Problem& problem);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rebuilds a state that continues exactly where the snapshot left off.
/// Throws DimensionError when `problem` does not match the snapshot.
RestorationState restore_state(const Checkpoint& checkpoint, const Problem& problem);

/// epoch,l_rec,l_dist,l_bc,l_de,l_br with round-trip precision.
void write_losses_csv(const std::vector<LossBreakdown>& history, const std::filesystem::path& path);

}  // namespace cqcd::restoration
