#include <doctest.h>

#include <cmath>
#include <random>

#include "lidarseg/nn/layers.hpp"
#include "lidarseg/nn/network.hpp"
#include "oracles.hpp"

using namespace lidarseg::nn;

namespace {

Tensor4 random_tensor(int n, int h, int w, int c, std::uint64_t seed) {
  Tensor4 t(n, h, w, c);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  for (Eigen::Index i = 0; i < t.values.size(); ++i) t.values.data()[i] = d(rng);
  return t;
}

NetworkConfig small_config(int classes = 5) {
  NetworkConfig cfg;
  cfg.input_size = 16;
  cfg.conv_channels = {4, 4, 8};
  cfg.fc_width = 16;
  cfg.n_classes = classes;
  return cfg;
}

}  // namespace

TEST_CASE("im2col convolution matches direct convolution") {
  for (int k : {1, 3, 5}) {
    const Tensor4 in = random_tensor(2, 7, 9, 3, 1 + static_cast<std::uint64_t>(k));
    Matrix w = random_tensor(1, 1, k * k * 3, 4, 2).values.reshaped<Eigen::RowMajor>(k * k * 3, 4);
    Matrix b = random_tensor(1, 1, 1, 4, 3).values;
    const Tensor4 got = conv2d(im2col(in, k), in, w, b);
    const Tensor4 expect = oracle::conv_direct(in, w, b, k);
    CHECK(got.same_shape(expect));
    CHECK((got.values - expect.values).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("col2im is the adjoint of im2col") {
  const Tensor4 x = random_tensor(2, 5, 6, 3, 4);
  const Matrix cols = im2col(x, 3);
  const Matrix y = random_tensor(1, 1, static_cast<int>(cols.rows()), static_cast<int>(cols.cols()), 5)
                       .values.reshaped<Eigen::RowMajor>(cols.rows(), cols.cols());
  const Tensor4 back = col2im(y, 2, 5, 6, 3, 3);
  // <im2col(x), y> == <x, col2im(y)>
  CHECK((cols.array() * y.array()).sum() == doctest::Approx((x.values.array() * back.values.array()).sum()));
}

TEST_CASE("max pooling matches the direct oracle") {
  const Tensor4 in = random_tensor(2, 8, 6, 3, 6);
  PoolIndex idx;
  const Tensor4 got = maxpool2(in, idx);
  const Tensor4 expect = oracle::pool_direct(in);
  CHECK(got.same_shape(expect));
  CHECK(got.values == expect.values);
}

TEST_CASE("forward matches the direct-loop network") {
  const NetworkParams p = init_params(small_config(7), 3);
  const Tensor4 x = random_tensor(3, 16, 16, 3, 8);
  const Matrix got = forward(p, x);
  const Matrix expect = oracle::forward_direct(p, x);
  REQUIRE(got.rows() == 3);
  REQUIRE(got.cols() == 7);
  CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-12);
  for (Eigen::Index r = 0; r < got.rows(); ++r) CHECK(got.row(r).sum() == doctest::Approx(1.0));
}

TEST_CASE("forward rejects mismatched input") {
  const NetworkParams p = init_params(small_config(), 1);
  CHECK_THROWS_AS(forward(p, Tensor4(1, 8, 8, 3)), ShapeError);
  CHECK_THROWS_AS(forward(p, Tensor4(1, 16, 16, 2)), ShapeError);
}

TEST_CASE("config validation") {
  NetworkConfig cfg;
  cfg.input_size = 12;
  CHECK_THROWS_AS(cfg.validate(), ShapeError);
  cfg = NetworkConfig{};
  cfg.kernel_size = 2;
  CHECK_THROWS_AS(cfg.validate(), ShapeError);
  CHECK(NetworkConfig{}.pooled_size() == 8);
  CHECK(NetworkConfig{}.flat_size() == 8 * 8 * 64);
}

TEST_CASE("cross entropy of a uniform 7-way prediction is ln 7") {
  const Matrix probs = Matrix::Constant(1, 7, 1.0 / 7.0);
  const int label = 3;
  CHECK(std::abs(cross_entropy(probs, std::span<const int>(&label, 1)) - std::log(7.0)) < 1e-12);
}

TEST_CASE("cross entropy of the two-sample example") {
  Matrix probs(2, 3);
  probs << 0.5, 0.25, 0.25, 0.25, 0.25, 0.5;
  const std::vector<int> labels = {0, 1};
  CHECK(cross_entropy(probs, labels) == doctest::Approx(1.039721).epsilon(1e-6));
  CHECK(cross_entropy(probs, labels) == doctest::Approx((std::log(2.0) + std::log(4.0)) / 2).epsilon(1e-14));
}

TEST_CASE("cross entropy clamps zero probabilities") {
  Matrix probs(1, 2);
  probs << 1.0, 0.0;
  const int label = 1;
  std::size_t clamped = 0;
  const double loss = cross_entropy(probs, std::span<const int>(&label, 1), &clamped);
  CHECK(std::isfinite(loss));
  CHECK(loss == doctest::Approx(-std::log(1e-12)));
  CHECK(clamped == 1);
  const int bad = 2;
  CHECK_THROWS_AS(cross_entropy(probs, std::span<const int>(&bad, 1)), ShapeError);
}

TEST_CASE("analytic gradients match central differences") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const auto tc = oracle::tiny_case(seed, seed % 2 ? 5 : 7);
    const LossAndGradients lg = backward(tc.params, tc.batch, tc.labels);
    CHECK(lg.loss == doctest::Approx(oracle::loss_direct(tc.params, tc.batch, tc.labels)).epsilon(1e-12));
    int kinks = 0;
    const double err = oracle::gradient_check(tc.params, lg.grads, tc.batch, tc.labels, 1e-6, 1e-9, &kinks);
    INFO("seed " << seed << " max relative error " << err << " kinks " << kinks);
    CHECK(err < 1e-4);
    CHECK(kinks <= 2);
  }
}

TEST_CASE("batch gradient is the mean of per-example gradients") {
  const auto tc = oracle::tiny_case(3, 5);
  const LossAndGradients all = backward(tc.params, tc.batch, tc.labels);
  NetworkParams sum = tc.params.zeros_like();
  for (int i = 0; i < tc.batch.batch; ++i) {
    Tensor4 one(1, 8, 8, 3);
    one.values = tc.batch.values.middleRows(static_cast<Eigen::Index>(i) * 64, 64);
    const int label = tc.labels[static_cast<std::size_t>(i)];
    const LossAndGradients lg = backward(tc.params, one, std::span<const int>(&label, 1));
    auto s = sum.tensors();
    const auto g = lg.grads.tensors();
    for (std::size_t t = 0; t < s.size(); ++t) *s[t] += *g[t];
  }
  const auto s = sum.tensors();
  const auto a = all.grads.tensors();
  for (std::size_t t = 0; t < s.size(); ++t) CHECK((*s[t] - 3.0 * *a[t]).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("init draws a truncated normal and zero biases, deterministically") {
  const NetworkConfig cfg;
  const NetworkParams a = init_params(cfg, 99);
  CHECK(a == init_params(cfg, 99));
  CHECK_FALSE(a == init_params(cfg, 100));

  std::vector<double> w;
  for (const auto& l : a.conv) {
    CHECK(l.bias.isZero());
    w.insert(w.end(), l.weight.data(), l.weight.data() + l.weight.size());
  }
  for (const auto& l : a.fc) {
    CHECK(l.bias.isZero());
    w.insert(w.end(), l.weight.data(), l.weight.data() + l.weight.size());
  }
  double mean = 0.0, sq = 0.0, maxabs = 0.0;
  for (double v : w) {
    mean += v;
    sq += v * v;
    maxabs = std::max(maxabs, std::abs(v));
  }
  mean /= static_cast<double>(w.size());
  const double sd = std::sqrt(sq / static_cast<double>(w.size()) - mean * mean);

  // Oracle moments from plain rejection sampling with an unrelated generator.
  std::minstd_rand rng(12345);
  std::normal_distribution<double> n(0.0, kInitStddev);
  double osq = 0.0;
  const int draws = 400000;
  for (int i = 0; i < draws;) {
    const double v = n(rng);
    if (std::abs(v) > 2 * kInitStddev) continue;
    osq += v * v;
    ++i;
  }
  const double osd = std::sqrt(osq / draws);
  const double se = osd / std::sqrt(static_cast<double>(w.size()));
  CHECK(maxabs <= 2 * kInitStddev);
  CHECK(std::abs(mean) < 5 * se);
  CHECK(sd == doctest::Approx(osd).epsilon(0.005));
  CHECK(osd == doctest::Approx(0.088).epsilon(0.01));
}

TEST_CASE("replace_head keeps the conv stack and reshapes the head") {
  const NetworkParams p = init_params(small_config(5), 1);
  const NetworkParams q = replace_head(p, 7, 2);
  CHECK(q.config.n_classes == 7);
  for (std::size_t l = 0; l < 3; ++l) CHECK(q.conv[l] == p.conv[l]);
  CHECK(q.fc[2].weight.cols() == 7);
  CHECK(q.fc[2].bias.cols() == 7);
  CHECK_FALSE(q.fc[0] == p.fc[0]);
}

TEST_CASE("parameter bookkeeping") {
  const NetworkParams p = init_params(small_config(5), 1);
  std::size_t n = 0;
  for (const Matrix* t : p.tensors()) n += static_cast<std::size_t>(t->size());
  CHECK(p.parameter_count() == n);
  CHECK(p.zeros_like().tensors()[0]->isZero());
  CHECK(p.all_finite());
  NetworkParams bad = p;
  bad.fc[1].weight(0, 0) = std::nan("");
  CHECK_FALSE(bad.all_finite());
  CHECK(NetworkParams::tensor_names()[0] == "conv1.weight");
}
