#include "lidarseg/nn/network.hpp"

#include <cmath>
#include <random>

#include "lidarseg/nn/layers.hpp"

namespace lidarseg::nn {

void NetworkConfig::validate() const {
  if (input_size < 8 || input_size % 8 != 0) {
    throw ShapeError("network: input_size must be a positive multiple of 8");
  }
  if (input_channels < 1) throw ShapeError("network: input_channels must be >= 1");
  if (kernel_size < 1 || kernel_size % 2 == 0) throw ShapeError("network: kernel_size must be odd");
  for (int c : conv_channels) {
    if (c < 1) throw ShapeError("network: conv channels must be >= 1");
  }
  if (fc_width < 1) throw ShapeError("network: fc_width must be >= 1");
  if (n_classes < 2) throw ShapeError("network: n_classes must be >= 2");
}

std::array<Matrix*, kTensorCount> NetworkParams::tensors() {
  return {&conv[0].weight, &conv[0].bias, &conv[1].weight, &conv[1].bias, &conv[2].weight, &conv[2].bias,
          &fc[0].weight,   &fc[0].bias,   &fc[1].weight,   &fc[1].bias,   &fc[2].weight,   &fc[2].bias};
}

std::array<const Matrix*, kTensorCount> NetworkParams::tensors() const {
  return {&conv[0].weight, &conv[0].bias, &conv[1].weight, &conv[1].bias, &conv[2].weight, &conv[2].bias,
          &fc[0].weight,   &fc[0].bias,   &fc[1].weight,   &fc[1].bias,   &fc[2].weight,   &fc[2].bias};
}

std::array<std::string, kTensorCount> NetworkParams::tensor_names() {
  return {"conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias", "conv3.weight", "conv3.bias",
          "fc1.weight",   "fc1.bias",   "fc2.weight",   "fc2.bias",   "head.weight",  "head.bias"};
}

std::size_t NetworkParams::parameter_count() const {
  std::size_t n = 0;
  for (const Matrix* t : tensors()) n += static_cast<std::size_t>(t->size());
  return n;
}

NetworkParams NetworkParams::zeros_like() const {
  NetworkParams out = *this;
  for (Matrix* t : out.tensors()) t->setZero();
  return out;
}

bool NetworkParams::all_finite() const {
  for (const Matrix* t : tensors()) {
    if (!t->allFinite()) return false;
  }
  return true;
}

namespace {

Matrix truncated_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, kInitStddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    double v = dist(rng);
    while (std::abs(v) > 2.0 * kInitStddev) v = dist(rng);
    m.data()[i] = v;
  }
  return m;
}

DenseLayer make_layer(Eigen::Index in, Eigen::Index out, std::mt19937_64& rng) {
  return {truncated_normal(in, out, rng), Matrix::Zero(1, out)};
}

// Activations retained for the backward pass.
struct Trace {
  std::array<Tensor4, 3> inputs;     // conv inputs
  std::array<Matrix, 3> patches;     // im2col of each conv input
  std::array<Matrix, 3> activated;   // post-ReLU conv outputs
  std::array<PoolIndex, 3> pools;
  Matrix flat;
  Matrix hidden1;
  Matrix hidden2;
  Matrix probs;
};

void check_batch(const NetworkParams& params, const Tensor4& batch) {
  const NetworkConfig& cfg = params.config;
  if (batch.rows != cfg.input_size || batch.cols != cfg.input_size || batch.channels != cfg.input_channels) {
    throw ShapeError("forward: batch " + batch.shape_string() + " does not match input size " +
                     std::to_string(cfg.input_size) + "x" + std::to_string(cfg.input_channels));
  }
  if (batch.batch < 1) throw ShapeError("forward: empty batch");
}

Matrix run_forward(const NetworkParams& params, const Tensor4& batch, Trace* trace) {
  check_batch(params, batch);
  const int k = params.config.kernel_size;

  Tensor4 x = batch;
  for (int l = 0; l < 3; ++l) {
    Matrix patches = im2col(x, k);
    Tensor4 y = conv2d(patches, x, params.conv[l].weight, params.conv[l].bias);
    relu_inplace(y.values);
    PoolIndex pool;
    Tensor4 pooled = maxpool2(y, pool);
    if (trace) {
      trace->inputs[l] = std::move(x);
      trace->patches[l] = std::move(patches);
      trace->activated[l] = std::move(y.values);
      trace->pools[l] = std::move(pool);
    }
    x = std::move(pooled);
  }

  // NHWC storage makes each sample's pooled map one contiguous row.
  const Eigen::Index n = x.batch;
  Matrix flat = Eigen::Map<const Matrix>(x.values.data(), n, x.values.size() / n);

  Matrix h1 = flat * params.fc[0].weight;
  h1.rowwise() += params.fc[0].bias.row(0);
  relu_inplace(h1);
  Matrix h2 = h1 * params.fc[1].weight;
  h2.rowwise() += params.fc[1].bias.row(0);
  relu_inplace(h2);
  Matrix logits = h2 * params.fc[2].weight;
  logits.rowwise() += params.fc[2].bias.row(0);
  Matrix probs = softmax_rows(logits);

  if (trace) {
    trace->flat = std::move(flat);
    trace->hidden1 = std::move(h1);
    trace->hidden2 = std::move(h2);
    trace->probs = probs;
  }
  return probs;
}

}  // namespace

NetworkParams init_params(const NetworkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  NetworkParams p;
  p.config = cfg;
  const int kk = cfg.kernel_size * cfg.kernel_size;
  int in_ch = cfg.input_channels;
  for (int l = 0; l < 3; ++l) {
    p.conv[l] = make_layer(Eigen::Index(kk) * in_ch, cfg.conv_channels[l], rng);
    in_ch = cfg.conv_channels[l];
  }
  p.fc[0] = make_layer(cfg.flat_size(), cfg.fc_width, rng);
  p.fc[1] = make_layer(cfg.fc_width, cfg.fc_width, rng);
  p.fc[2] = make_layer(cfg.fc_width, cfg.n_classes, rng);
  return p;
}

NetworkParams replace_head(const NetworkParams& params, int new_classes, std::uint64_t seed) {
  NetworkConfig cfg = params.config;
  cfg.n_classes = new_classes;
  NetworkParams fresh = init_params(cfg, seed);
  fresh.conv = params.conv;
  return fresh;
}

Matrix forward(const NetworkParams& params, const Tensor4& batch) {
  return run_forward(params, batch, nullptr);
}

double cross_entropy(const Matrix& probs, std::span<const int> labels, std::size_t* clamped) {
  if (static_cast<std::size_t>(probs.rows()) != labels.size()) {
    throw ShapeError("cross_entropy: label count does not match batch");
  }
  if (labels.empty()) return 0.0;
  double total = 0.0;
  std::size_t floor_hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= probs.cols()) throw ShapeError("cross_entropy: label out of range");
    double p = probs(static_cast<Eigen::Index>(i), y);
    if (p < kProbabilityFloor) {
      p = kProbabilityFloor;
      ++floor_hits;
    }
    total -= std::log(p);
  }
  if (clamped) *clamped = floor_hits;
  return total / static_cast<double>(labels.size());
}

LossAndGradients backward(const NetworkParams& params, const Tensor4& batch, std::span<const int> labels) {
  if (static_cast<std::size_t>(batch.batch) != labels.size()) {
    throw ShapeError("backward: label count does not match batch");
  }
  Trace t;
  run_forward(params, batch, &t);

  LossAndGradients out;
  out.loss = cross_entropy(t.probs, labels);
  out.grads.config = params.config;
  const int k = params.config.kernel_size;
  const double inv_n = 1.0 / static_cast<double>(labels.size());

  Matrix d_logits = t.probs;
  for (std::size_t i = 0; i < labels.size(); ++i) d_logits(static_cast<Eigen::Index>(i), labels[i]) -= 1.0;
  d_logits *= inv_n;

  auto dense_grad = [](const Matrix& input, const Matrix& d_out) {
    DenseLayer g;
    g.weight.noalias() = input.transpose() * d_out;
    g.bias = d_out.colwise().sum();
    return g;
  };

  out.grads.fc[2] = dense_grad(t.hidden2, d_logits);
  Matrix d_h2 = d_logits * params.fc[2].weight.transpose();
  relu_backward_inplace(d_h2, t.hidden2);
  out.grads.fc[1] = dense_grad(t.hidden1, d_h2);
  Matrix d_h1 = d_h2 * params.fc[1].weight.transpose();
  relu_backward_inplace(d_h1, t.hidden1);
  out.grads.fc[0] = dense_grad(t.flat, d_h1);
  Matrix d_flat = d_h1 * params.fc[0].weight.transpose();

  // Back to the NHWC layout of the last pooled map.
  const int pooled = params.config.pooled_size();
  Matrix d_x = Eigen::Map<const Matrix>(d_flat.data(), Eigen::Index(batch.batch) * pooled * pooled,
                                        params.config.conv_channels[2]);

  for (int l = 2; l >= 0; --l) {
    const Tensor4& in = t.inputs[l];
    Matrix d_act = maxpool2_backward(d_x, t.pools[l], t.activated[l].rows());
    relu_backward_inplace(d_act, t.activated[l]);
    out.grads.conv[l] = dense_grad(t.patches[l], d_act);
    if (l > 0) {
      Matrix d_patches = d_act * params.conv[l].weight.transpose();
      d_x = col2im(d_patches, in.batch, in.rows, in.cols, in.channels, k).values;
    }
  }
  return out;
}

}  // namespace lidarseg::nn
