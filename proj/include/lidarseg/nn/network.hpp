#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lidarseg/nn/tensor.hpp"

namespace lidarseg::nn {

struct NetworkConfig {
  int input_size = 64;
  int input_channels = 3;
  int kernel_size = 3;
  std::array<int, 3> conv_channels = {32, 32, 64};
  int fc_width = 128;
  int n_classes = 5;

  void validate() const;
  /// Spatial size after the three conv/pool stages.
  int pooled_size() const { return input_size / 8; }
  int flat_size() const { return pooled_size() * pooled_size() * conv_channels[2]; }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Weight matrix plus a 1 x out bias row.
struct DenseLayer {
  Matrix weight;
  Matrix bias;

  friend bool operator==(const DenseLayer& a, const DenseLayer& b) {
    return a.weight.rows() == b.weight.rows() && a.weight.cols() == b.weight.cols() &&
           a.bias.cols() == b.bias.cols() && a.weight == b.weight && a.bias == b.bias;
  }
};

inline constexpr int kTensorCount = 12;

/// conv1..3, then fc1, fc2 and the linear classifier head.
struct NetworkParams {
  NetworkConfig config;
  std::array<DenseLayer, 3> conv;
  std::array<DenseLayer, 3> fc;

  /// Weight/bias matrices in manifest order: conv1.w, conv1.b, ..., head.b.
  std::array<Matrix*, kTensorCount> tensors();
  std::array<const Matrix*, kTensorCount> tensors() const;
  static std::array<std::string, kTensorCount> tensor_names();
  std::size_t parameter_count() const;

  /// Same shapes, all zeros.
  NetworkParams zeros_like() const;
  bool all_finite() const;

  friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

/// Truncated normal (stddev 0.1, resampled outside +-2 sigma) weights and
/// zero biases, deterministic in `seed`.
NetworkParams init_params(const NetworkConfig& cfg, std::uint64_t seed);

inline constexpr double kInitStddev = 0.1;

/// Keeps the conv stack and re-initializes fc1, fc2 and the head for
/// `new_classes` outputs using the init_params rule.
NetworkParams replace_head(const NetworkParams& params, int new_classes, std::uint64_t seed);

/// Class probabilities, one row per batch item.
Matrix forward(const NetworkParams& params, const Tensor4& batch);

/// Mean negative log-probability of the true class. Probabilities below
/// 1e-12 are clamped before the log; `clamped` counts how many.
double cross_entropy(const Matrix& probs, std::span<const int> labels, std::size_t* clamped = nullptr);

inline constexpr double kProbabilityFloor = 1e-12;

struct LossAndGradients {
  double loss = 0.0;
  NetworkParams grads;
};

/// Analytic gradient of cross_entropy(forward(params, batch), labels).
LossAndGradients backward(const NetworkParams& params, const Tensor4& batch, std::span<const int> labels);

}  // namespace lidarseg::nn
