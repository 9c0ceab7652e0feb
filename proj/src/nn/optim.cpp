#include "lidarseg/nn/optim.hpp"

#include <cmath>
#include <fstream>

#include "lidarseg/detail/binary_io.hpp"

namespace lidarseg::nn {

namespace {

constexpr std::uint16_t kCheckpointVersion = 1;

void write_tensor_values(std::ostream& os, const NetworkParams& p) {
  for (const Matrix* t : p.tensors()) {
    for (Eigen::Index i = 0; i < t->size(); ++i) detail::write_le<double>(os, t->data()[i]);
  }
}

void read_tensor_values(std::istream& is, NetworkParams& p) {
  for (Matrix* t : p.tensors()) {
    for (Eigen::Index i = 0; i < t->size(); ++i) t->data()[i] = detail::read_le<double>(is);
  }
}

}  // namespace

AdamState AdamState::for_params(const NetworkParams& params, const AdamHyper& hyper) {
  AdamState s;
  s.hyper = hyper;
  s.m = params.zeros_like();
  s.v = params.zeros_like();
  return s;
}

void adam_step(NetworkParams& params, const NetworkParams& grads, AdamState& state) {
  if (!grads.all_finite()) throw NumericError("adam_step: non-finite gradient");
  const auto p_tensors = params.tensors();
  const auto g_tensors = grads.tensors();
  const auto m_tensors = state.m.tensors();
  const auto v_tensors = state.v.tensors();
  for (int i = 0; i < kTensorCount; ++i) {
    if (p_tensors[i]->rows() != g_tensors[i]->rows() || p_tensors[i]->cols() != g_tensors[i]->cols() ||
        p_tensors[i]->rows() != m_tensors[i]->rows() || p_tensors[i]->cols() != m_tensors[i]->cols()) {
      throw ShapeError("adam_step: shape mismatch in " + NetworkParams::tensor_names()[i]);
    }
  }

  const AdamHyper& h = state.hyper;
  const std::int64_t t = state.t + 1;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  for (int i = 0; i < kTensorCount; ++i) {
    auto g = g_tensors[i]->array();
    auto m = m_tensors[i]->array();
    auto v = v_tensors[i]->array();
    m = h.beta1 * m + (1.0 - h.beta1) * g;
    v = h.beta2 * v + (1.0 - h.beta2) * g.square();
    p_tensors[i]->array() -= h.lr * (m / c1) / ((v / c2).sqrt() + h.eps);
  }
  state.t = t;
}

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
  const NetworkParams& p = ckpt.params;
  const NetworkConfig& cfg = p.config;
  detail::write_magic(os, "LCKP");
  detail::write_le<std::uint16_t>(os, kCheckpointVersion);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.input_size));
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.input_channels));
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.kernel_size));
  for (int c : cfg.conv_channels) detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(c));
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.fc_width));
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.n_classes));
  detail::write_le<std::uint32_t>(os, kTensorCount);
  for (const Matrix* t : p.tensors()) {
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t->rows()));
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t->cols()));
  }
  write_tensor_values(os, p);

  const AdamState& a = ckpt.adam;
  detail::write_le<std::int64_t>(os, a.t);
  detail::write_le<double>(os, a.hyper.lr);
  detail::write_le<double>(os, a.hyper.beta1);
  detail::write_le<double>(os, a.hyper.beta2);
  detail::write_le<double>(os, a.hyper.eps);
  write_tensor_values(os, a.m);
  write_tensor_values(os, a.v);

  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.loss_window.size()));
  for (double l : ckpt.loss_window) detail::write_le<double>(os, l);
}

Checkpoint read_checkpoint(std::istream& is) {
  detail::expect_magic(is, "LCKP");
  if (detail::read_le<std::uint16_t>(is) != kCheckpointVersion) throw FormatError("unsupported LCKP version");
  NetworkConfig cfg;
  cfg.input_size = static_cast<int>(detail::read_le<std::uint32_t>(is));
  cfg.input_channels = static_cast<int>(detail::read_le<std::uint32_t>(is));
  cfg.kernel_size = static_cast<int>(detail::read_le<std::uint32_t>(is));
  for (int& c : cfg.conv_channels) c = static_cast<int>(detail::read_le<std::uint32_t>(is));
  cfg.fc_width = static_cast<int>(detail::read_le<std::uint32_t>(is));
  cfg.n_classes = static_cast<int>(detail::read_le<std::uint32_t>(is));
  try {
    cfg.validate();
  } catch (const ShapeError& e) {
    throw FormatError(std::string("checkpoint manifest: ") + e.what());
  }
  if (detail::read_le<std::uint32_t>(is) != kTensorCount) throw FormatError("checkpoint: unexpected tensor count");

  // The manifest must agree with the shapes the config implies.
  Checkpoint ckpt;
  ckpt.params = init_params(cfg, 0).zeros_like();
  for (Matrix* t : ckpt.params.tensors()) {
    const auto rows = detail::read_le<std::uint32_t>(is);
    const auto cols = detail::read_le<std::uint32_t>(is);
    if (rows != t->rows() || cols != t->cols()) throw FormatError("checkpoint: tensor shape disagrees with config");
  }
  read_tensor_values(is, ckpt.params);

  ckpt.adam = AdamState::for_params(ckpt.params);
  ckpt.adam.t = detail::read_le<std::int64_t>(is);
  ckpt.adam.hyper.lr = detail::read_le<double>(is);
  ckpt.adam.hyper.beta1 = detail::read_le<double>(is);
  ckpt.adam.hyper.beta2 = detail::read_le<double>(is);
  ckpt.adam.hyper.eps = detail::read_le<double>(is);
  read_tensor_values(is, ckpt.adam.m);
  read_tensor_values(is, ckpt.adam.v);

  const auto window = detail::read_le<std::uint32_t>(is);
  ckpt.loss_window.resize(window);
  for (double& l : ckpt.loss_window) l = detail::read_le<double>(is);
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  write_checkpoint(os, ckpt);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path.string());
  return read_checkpoint(is);
}

}  // namespace lidarseg::nn
