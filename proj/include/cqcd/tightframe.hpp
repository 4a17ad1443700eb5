#pragma once

#include <span>
#include <utility>
#include <vector>

#include "cqcd/image.hpp"

namespace cqcd::tightframe {

/// One-dimensional framelet filters m_0 (lowpass) ... m_r, each of odd length
/// and centred. Two-dimensional kernels are tensor products: W_{p,q} has
/// m_p along rows (horizontal direction) and m_q along columns.
struct FilterBank {
  std::vector<std::vector<double>> filters;

  int filter_count() const { return static_cast<int>(filters.size()); }
  int highpass_per_level() const { return filter_count() * filter_count() - 1; }
  int support() const;

  /// Row-major 2-D kernel, entry (i, j) = m_q[i] * m_p[j].
  std::vector<double> kernel(int p, int q) const;
};

/// Lowpass (1/3)[1, 1, 1] with highpass filters (sqrt(6)/6)[1, 0, -1] and
/// (3 sqrt(2)/18)[1, -2, 1].
FilterBank build_filter_bank();

/// sup over `samples` uniformly spaced frequencies in [0, 2pi) of
/// |sum_p |m_p^(xi)|^2 - 1|.
double uep_residual(const FilterBank& bank, int samples = 1024);

/// Highpass (p, q) pairs in feature order: row-major over p then q, skipping (0, 0).
std::vector<std::pair<int, int>> highpass_order(const FilterBank& bank);

/// Undecimated level-L decomposition of one plane.
struct TightFramePyramid {
  int levels = 0;
  Image lowpass;
  /// highpass[l - 1][k] is the subband for level l and highpass_order()[k].
  std::vector<std::vector<Image>> highpass;

  std::size_t subband_count() const;
};

/// Periodic 2-D filtering with W_{p,q}, applied as a sliding stencil
/// (correlation). With `adjoint` the flipped kernel is used instead.
Image apply_filter(const Image& plane, const FilterBank& bank, int p, int q, bool adjoint = false);

TightFramePyramid decompose(const Image& plane, int levels, const FilterBank& bank);

/// Synthesis with the adjoint filters. This is the exact adjoint of
/// `decompose`, and under the UEP also its inverse.
Image reconstruct(const TightFramePyramid& pyramid, const FilterBank& bank);

/// Planes per channel for a level-L decomposition.
int planes_per_channel(const FilterBank& bank, int levels);

/// Decomposes every channel of `img` and concatenates the subbands
/// channel-major. Within a channel: lowpass first, then highpass subbands by
/// ascending level and highpass_order().
std::vector<Image> feature_stack(const Image& img, int levels, const FilterBank& bank);

/// Adjoint of feature_stack: maps per-plane gradients back to an image with
/// `channels` channels.
Image feature_stack_adjoint(std::span<const Image> planes, int channels, int levels,
                            const FilterBank& bank);

}  // namespace cqcd::tightframe
