#pragma once

#include <span>

#include "cqcd/image.hpp"

namespace cqcd::restoration {

/// Pixel-mean absolute difference over all pixels and channels.
double mean_abs_diff(const Image& a, const Image& b);

/// (1/T) sum_t mean|restored - warped_t|.
double loss_rec(const Image& restored, std::span<const Image> warped);

/// (1/T) sum_t mean|original_t - redistorted_t|.
double loss_dist(std::span<const Image> originals, std::span<const Image> redistorted);

struct LossBreakdown {
  double rec = 0.0;
  double dist = 0.0;
  double bc = 0.0;
  double de = 0.0;  ///< dist + rec + lambda * bc
  double br = 0.0;  ///< dist + rec
};

/// Both objectives and their components. `redistorted` must already be
/// restored composed with each inverse field.
LossBreakdown total_losses(const Image& restored, std::span<const Image> originals,
                           std::span<const Image> warped, std::span<const Image> redistorted,
                           std::span<const DisplacementField> fields,
                           std::span<const DisplacementField> inverses, double lambda);

struct FieldError {
  double mean_epe = 0.0;
  double max_epe = 0.0;
};

/// Endpoint error |estimated - reference| per pixel, averaged and maximized.
FieldError field_error(const DisplacementField& estimated, const DisplacementField& reference);

}  // namespace cqcd::restoration
