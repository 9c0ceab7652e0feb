#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace lidarseg::nn {

template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVectorT = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrix = MatrixT<double>;
using RowVector = RowVectorT<double>;

/// Dense NHWC activation tensor. Stored as an (N*H*W) x C row-major matrix,
/// so a 1x1 "pixel" view is a plain GEMM operand.
template <typename Scalar>
struct Tensor4T {
  int batch = 0;
  int rows = 0;
  int cols = 0;
  int channels = 0;
  MatrixT<Scalar> values;

  Tensor4T() = default;
  Tensor4T(int n, int h, int w, int c)
      : batch(n), rows(h), cols(w), channels(c), values(MatrixT<Scalar>::Zero(Eigen::Index(n) * h * w, c)) {}

  Eigen::Index pixel(int n, int r, int c) const { return (Eigen::Index(n) * rows + r) * cols + c; }

  Scalar& operator()(int n, int r, int c, int ch) { return values(pixel(n, r, c), ch); }
  Scalar operator()(int n, int r, int c, int ch) const { return values(pixel(n, r, c), ch); }

  Eigen::Index size() const { return values.size(); }

  bool same_shape(const Tensor4T& o) const {
    return batch == o.batch && rows == o.rows && cols == o.cols && channels == o.channels;
  }

  std::string shape_string() const {
    return "(" + std::to_string(batch) + "," + std::to_string(rows) + "," + std::to_string(cols) + "," +
           std::to_string(channels) + ")";
  }
};

using Tensor4 = Tensor4T<double>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lidarseg::nn
