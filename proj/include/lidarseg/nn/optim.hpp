#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "lidarseg/nn/network.hpp"

namespace lidarseg::nn {

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  friend bool operator==(const AdamHyper&, const AdamHyper&) = default;
};

struct AdamState {
  AdamHyper hyper;
  NetworkParams m;
  NetworkParams v;
  std::int64_t t = 0;

  static AdamState for_params(const NetworkParams& params, const AdamHyper& hyper = {});

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One bias-corrected ADAM update in place. A non-finite gradient throws
/// NumericError and leaves both params and state untouched.
void adam_step(NetworkParams& params, const NetworkParams& grads, AdamState& state);

/// Serializable training snapshot. `loss_window` carries the running-loss
/// history so a resumed run makes the same stopping decision.
struct Checkpoint {
  NetworkParams params;
  AdamState adam;
  std::vector<double> loss_window;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// LCKP file: magic, u16 version, config manifest (S, channels, kernel, conv
/// widths, fc width, K, tensor shapes), f64 parameter planes in manifest
/// order, ADAM state (t, hyperparameters, m planes, v planes), loss window.
void write_checkpoint(std::ostream& os, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lidarseg::nn
