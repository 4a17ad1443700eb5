#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cqcd/image.hpp"

namespace cqcd::restoration {

struct RemoverConfig {
  int hidden = 256;
  /// Drops ReLU, normalization and the output sigmoid, leaving a purely linear
  /// map. Used for hand-constructed weights and exact gradient checks.
  bool linear = false;
  double bn_epsilon = 1e-5;
};

enum class RemoverMode {
  kTrain,  ///< batch statistics over all pixels
  kEval,   ///< frozen running statistics
};

/// Pixel-wise network [inputs -> hidden -> hidden -> channels]: each hidden
/// layer is a 1x1 convolution followed by ReLU and per-plane normalization;
/// the output passes through a sigmoid clamped strictly inside (0, 1).
///
/// Inputs are an N x P matrix (one row per pixel, one column per feature
/// plane); outputs are N x channels.
class BlurRemover {
 public:
  struct Cache {
    RemoverMode mode = RemoverMode::kTrain;
    Eigen::MatrixXd x, z1, xhat1, b1, z2, xhat2, b2, y;
    Eigen::RowVectorXd invstd1, invstd2;
  };

  BlurRemover() = default;
  BlurRemover(int input_planes, int channels, const RemoverConfig& config, std::uint64_t seed);

  const RemoverConfig& config() const { return config_; }
  int input_planes() const { return inputs_; }
  int channels() const { return channels_; }

  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }
  /// mean1, var1, mean2, var2 (hidden entries each).
  std::vector<double>& running_statistics() { return running_; }
  const std::vector<double>& running_statistics() const { return running_; }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, RemoverMode mode, Cache* cache = nullptr) const;

  /// Adds dL/d(parameters) to `grad_params` (may be empty to skip) and writes
  /// dL/d(input) to `grad_input` when non-null.
  void backward(const Cache& cache, const Eigen::MatrixXd& grad_out, std::span<double> grad_params,
                Eigen::MatrixXd* grad_input) const;

  /// Sets the running statistics to the batch statistics of `x`.
  void freeze_statistics(const Eigen::MatrixXd& x);

  /// Hash of the ReLU masks in `cache`.
  static std::uint64_t activation_signature(const Cache& cache);

  struct Layout {
    std::size_t w1, b1, g1, be1, w2, b2, g2, be2, w3, b3, total;
  };
  Layout layout() const;

 private:
  RemoverConfig config_;
  int inputs_ = 0, channels_ = 0;
  std::vector<double> params_;
  std::vector<double> running_;
};

/// Concatenates per-frame planes into the remover's N x P input matrix,
/// frame-major.
Eigen::MatrixXd assemble_input(const std::vector<std::vector<Image>>& planes);

/// Splits dL/d(input) back into per-frame planes shaped like `like`.
std::vector<std::vector<Image>> split_input_gradient(const Eigen::MatrixXd& grad,
                                                     const std::vector<std::vector<Image>>& like);

Image matrix_to_image(const Eigen::MatrixXd& m, int height, int width);
Eigen::MatrixXd image_to_matrix(const Image& img);

}  // namespace cqcd::restoration
