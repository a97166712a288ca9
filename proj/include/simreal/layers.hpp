#pragma once

// Layer primitives over channel-major feature maps: a map with C channels of
// size H x W is a C x (H*W) row-major matrix, pixels in row-major order.

#include <Eigen/Core>

#include "simreal/common.hpp"

namespace simreal::nn {

using IndexMap = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Valid-padding patch extraction: row c*k*k + ky*k + kx, column oy*Wo + ox.
template <typename Scalar>
void im2col(const RowMatrix<Scalar>& in, int height, int width, int k, RowMatrix<Scalar>& cols) {
  const int channels = static_cast<int>(in.rows());
  const int ho = height - k + 1;
  const int wo = width - k + 1;
  cols.resize(static_cast<Eigen::Index>(channels) * k * k, static_cast<Eigen::Index>(ho) * wo);
  for (int c = 0; c < channels; ++c) {
    const Scalar* src = in.row(c).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        Scalar* dst = cols.row((c * k + ky) * k + kx).data();
        for (int oy = 0; oy < ho; ++oy) {
          const Scalar* line = src + (oy + ky) * width + kx;
          for (int ox = 0; ox < wo; ++ox) dst[oy * wo + ox] = line[ox];
        }
      }
    }
  }
}

// Adjoint of im2col: scatters patch gradients back onto the input map.
template <typename Scalar>
void col2im_add(const RowMatrix<Scalar>& cols, int channels, int height, int width, int k, RowMatrix<Scalar>& din) {
  const int ho = height - k + 1;
  const int wo = width - k + 1;
  for (int c = 0; c < channels; ++c) {
    Scalar* dst = din.row(c).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Scalar* src = cols.row((c * k + ky) * k + kx).data();
        for (int oy = 0; oy < ho; ++oy) {
          Scalar* line = dst + (oy + ky) * width + kx;
          for (int ox = 0; ox < wo; ++ox) line[ox] += src[oy * wo + ox];
        }
      }
    }
  }
}

// 2x2 stride-2 max pooling (floor). `argmax` holds the winning input pixel
// index; ties go to the first position in row-major scan order.
template <typename Scalar>
void maxpool2(const RowMatrix<Scalar>& in, int height, int width, RowMatrix<Scalar>& out, IndexMap& argmax) {
  const int channels = static_cast<int>(in.rows());
  const int ho = height / 2;
  const int wo = width / 2;
  out.resize(channels, static_cast<Eigen::Index>(ho) * wo);
  argmax.resize(channels, static_cast<Eigen::Index>(ho) * wo);
  for (int c = 0; c < channels; ++c) {
    const Scalar* src = in.row(c).data();
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        int best = (2 * oy) * width + 2 * ox;
        const int candidates[3] = {best + 1, best + width, best + width + 1};
        for (int idx : candidates)
          if (src[idx] > src[best]) best = idx;
        out(c, oy * wo + ox) = src[best];
        argmax(c, oy * wo + ox) = best;
      }
    }
  }
}

template <typename Scalar>
void maxpool2_backward(const RowMatrix<Scalar>& dout, const IndexMap& argmax, RowMatrix<Scalar>& din) {
  for (Eigen::Index c = 0; c < dout.rows(); ++c)
    for (Eigen::Index j = 0; j < dout.cols(); ++j) din(c, argmax(c, j)) += dout(c, j);
}

template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& x) {
  return x.cwiseMax(typename Derived::Scalar(0));
}

// Zeroes gradient entries whose activation was clamped by ReLU.
template <typename GradDerived, typename ActDerived>
void relu_backward_inplace(Eigen::MatrixBase<GradDerived>& grad, const Eigen::MatrixBase<ActDerived>& activation) {
  using Scalar = typename GradDerived::Scalar;
  grad = (activation.array() > Scalar(0)).select(grad, Scalar(0));
}

}  // namespace simreal::nn
