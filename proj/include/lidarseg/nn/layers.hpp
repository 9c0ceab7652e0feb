#pragma once

#include <cstdint>

#include "lidarseg/nn/tensor.hpp"

namespace lidarseg::nn {

// Patch matrix for a k x k same-padded convolution: one row per output
// pixel, columns ordered (ky, kx, channel). Out-of-image taps stay zero.
template <typename Scalar>
MatrixT<Scalar> im2col(const Tensor4T<Scalar>& in, int k) {
  const int pad = k / 2;
  const int c = in.channels;
  MatrixT<Scalar> cols = MatrixT<Scalar>::Zero(Eigen::Index(in.batch) * in.rows * in.cols, Eigen::Index(k) * k * c);
  for (int n = 0; n < in.batch; ++n) {
    for (int r = 0; r < in.rows; ++r) {
      for (int q = 0; q < in.cols; ++q) {
        const Eigen::Index dst = in.pixel(n, r, q);
        for (int ky = 0; ky < k; ++ky) {
          const int sr = r + ky - pad;
          if (sr < 0 || sr >= in.rows) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int sc = q + kx - pad;
            if (sc < 0 || sc >= in.cols) continue;
            cols.row(dst).segment((Eigen::Index(ky) * k + kx) * c, c) = in.values.row(in.pixel(n, sr, sc));
          }
        }
      }
    }
  }
  return cols;
}

// Adjoint of im2col: scatters patch-matrix gradients back onto the input.
template <typename Scalar>
Tensor4T<Scalar> col2im(const MatrixT<Scalar>& cols, int n_batch, int rows, int ncols, int channels, int k) {
  const int pad = k / 2;
  Tensor4T<Scalar> out(n_batch, rows, ncols, channels);
  for (int n = 0; n < n_batch; ++n) {
    for (int r = 0; r < rows; ++r) {
      for (int q = 0; q < ncols; ++q) {
        const Eigen::Index src = out.pixel(n, r, q);
        for (int ky = 0; ky < k; ++ky) {
          const int sr = r + ky - pad;
          if (sr < 0 || sr >= rows) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int sc = q + kx - pad;
            if (sc < 0 || sc >= ncols) continue;
            out.values.row(out.pixel(n, sr, sc)) += cols.row(src).segment((Eigen::Index(ky) * k + kx) * channels, channels);
          }
        }
      }
    }
  }
  return out;
}

/// Same-padded stride-1 convolution. `weight` is (k*k*C_in) x C_out.
template <typename Scalar>
Tensor4T<Scalar> conv2d(const MatrixT<Scalar>& patches, const Tensor4T<Scalar>& in, const MatrixT<Scalar>& weight,
                        const MatrixT<Scalar>& bias) {
  Tensor4T<Scalar> out;
  out.batch = in.batch;
  out.rows = in.rows;
  out.cols = in.cols;
  out.channels = static_cast<int>(weight.cols());
  out.values.noalias() = patches * weight;
  out.values.rowwise() += bias.row(0);
  return out;
}

template <typename Derived>
void relu_inplace(Eigen::MatrixBase<Derived>& x) {
  x = x.cwiseMax(typename Derived::Scalar(0));
}

// Zeroes gradient entries whose forward activation was clipped.
template <typename Scalar>
void relu_backward_inplace(MatrixT<Scalar>& grad, const MatrixT<Scalar>& activation) {
  grad = (activation.array() > Scalar(0)).select(grad, Scalar(0));
}

struct PoolIndex {
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> argmax;
};

/// 2x2 stride-2 max pooling; records the winning input pixel per output.
template <typename Scalar>
Tensor4T<Scalar> maxpool2(const Tensor4T<Scalar>& in, PoolIndex& index) {
  Tensor4T<Scalar> out(in.batch, in.rows / 2, in.cols / 2, in.channels);
  index.argmax.resize(out.values.rows(), out.values.cols());
  for (int n = 0; n < in.batch; ++n) {
    for (int r = 0; r < out.rows; ++r) {
      for (int q = 0; q < out.cols; ++q) {
        const Eigen::Index dst = out.pixel(n, r, q);
        const Eigen::Index taps[4] = {in.pixel(n, 2 * r, 2 * q), in.pixel(n, 2 * r, 2 * q + 1),
                                      in.pixel(n, 2 * r + 1, 2 * q), in.pixel(n, 2 * r + 1, 2 * q + 1)};
        for (int ch = 0; ch < in.channels; ++ch) {
          Eigen::Index best = taps[0];
          for (int t = 1; t < 4; ++t) {
            if (in.values(taps[t], ch) > in.values(best, ch)) best = taps[t];
          }
          out.values(dst, ch) = in.values(best, ch);
          index.argmax(dst, ch) = best;
        }
      }
    }
  }
  return out;
}

template <typename Scalar>
MatrixT<Scalar> maxpool2_backward(const MatrixT<Scalar>& grad_out, const PoolIndex& index, Eigen::Index in_pixels) {
  MatrixT<Scalar> grad_in = MatrixT<Scalar>::Zero(in_pixels, grad_out.cols());
  for (Eigen::Index i = 0; i < grad_out.rows(); ++i) {
    for (Eigen::Index ch = 0; ch < grad_out.cols(); ++ch) {
      grad_in(index.argmax(i, ch), ch) += grad_out(i, ch);
    }
  }
  return grad_in;
}

/// Numerically stable row-wise softmax.
template <typename Derived>
MatrixT<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  MatrixT<Scalar> out = logits;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const Scalar m = out.row(i).maxCoeff();
    out.row(i) = (out.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

}  // namespace lidarseg::nn
