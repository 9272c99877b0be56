#pragma once

#include "ftin/nn/params.hpp"

namespace ftin::nn {

// 1-D convolution with "same"-style zero padding (kernel-1)/2, computed as a
// single matrix product over an im2col buffer. Weight layout is
// out_channels x (in_channels * kernel), column ci * kernel + k.
template <class T>
struct ConvParams {
  using Scalar = T;
  Mat<T> weight;
  Vec<T> bias;
  int kernel = 1;
  int stride = 1;

  ConvParams() = default;
  ConvParams(Index in_ch, Index out_ch, int kernel_size, int stride_)
      : weight(Mat<T>::Zero(out_ch, in_ch * kernel_size)), bias(Vec<T>::Zero(out_ch)), kernel(kernel_size), stride(stride_) {}

  Index in_channels() const { return weight.cols() / kernel; }
  Index out_channels() const { return weight.rows(); }
  Index out_length(Index in_length) const {
    const Index pad = (kernel - 1) / 2;
    return (in_length + 2 * pad - kernel) / stride + 1;
  }

  void init(Rng& rng) {
    fan_in_uniform<T>(weight, weight.cols(), rng);
    bias.setZero();
  }

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "weight", self.weight);
    f(prefix + "bias", self.bias);
  }
};

template <class T>
struct ConvCache {
  Mat<T> cols;
  Index in_length = 0;
};

template <class T>
Mat<T> im2col(const Mat<T>& x, int kernel, int stride, Index out_len) {
  const Index cin = x.rows(), lin = x.cols();
  const Index pad = (kernel - 1) / 2;
  Mat<T> cols(cin * kernel, out_len);
  for (Index c = 0; c < cin; ++c) {
    for (int k = 0; k < kernel; ++k) {
      T* dst = cols.row(c * kernel + k).data();
      for (Index o = 0; o < out_len; ++o) {
        const Index src = o * stride + k - pad;
        dst[o] = (src >= 0 && src < lin) ? x(c, src) : T(0);
      }
    }
  }
  return cols;
}

template <class T>
Mat<T> conv1d_forward(const ConvParams<T>& p, const Mat<T>& x, ConvCache<T>* cache = nullptr) {
  require(x.rows() == p.in_channels(), "conv1d: expected " + std::to_string(p.in_channels()) + " input channels, got " +
                                           std::to_string(x.rows()));
  const Index out_len = p.out_length(x.cols());
  require(out_len >= 1, "conv1d: input too short");
  Mat<T> cols = im2col(x, p.kernel, p.stride, out_len);
  Mat<T> y = p.weight * cols;
  y.colwise() += p.bias;
  if (cache) {
    cache->cols = std::move(cols);
    cache->in_length = x.cols();
  }
  return y;
}

// Accumulates weight/bias gradients into g and returns dL/dx.
template <class T>
Mat<T> conv1d_backward(const ConvParams<T>& p, const ConvCache<T>& cache, const Mat<T>& dy, ConvParams<T>& g) {
  g.weight.noalias() += dy * cache.cols.transpose();
  g.bias += dy.rowwise().sum();
  const Mat<T> dcols = p.weight.transpose() * dy;
  const Index cin = p.in_channels(), lin = cache.in_length, out_len = dy.cols();
  const Index pad = (p.kernel - 1) / 2;
  Mat<T> dx = Mat<T>::Zero(cin, lin);
  for (Index c = 0; c < cin; ++c) {
    for (int k = 0; k < p.kernel; ++k) {
      const T* src = dcols.row(c * p.kernel + k).data();
      for (Index o = 0; o < out_len; ++o) {
        const Index i = o * p.stride + k - pad;
        if (i >= 0 && i < lin) dx(c, i) += src[o];
      }
    }
  }
  return dx;
}

// Per-sample normalization over all channels and positions, followed by a
// per-channel affine map. Independent of batch composition.
template <class T>
struct NormParams {
  using Scalar = T;
  Vec<T> gamma;
  Vec<T> beta;

  NormParams() = default;
  explicit NormParams(Index channels) : gamma(Vec<T>::Ones(channels)), beta(Vec<T>::Zero(channels)) {}

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "gamma", self.gamma);
    f(prefix + "beta", self.beta);
  }
};

inline constexpr double kNormEps = 1e-5;

template <class T>
struct NormCache {
  Mat<T> xhat;
  T inv_std = T(0);
};

template <class T>
Mat<T> norm_forward(const NormParams<T>& p, const Mat<T>& x, NormCache<T>* cache = nullptr) {
  const T mean = x.mean();
  const T var = (x.array() - mean).square().mean();
  const T inv_std = T(1) / std::sqrt(var + static_cast<T>(kNormEps));
  Mat<T> xhat = (x.array() - mean) * inv_std;
  Mat<T> y = (xhat.array().colwise() * p.gamma.array()).colwise() + p.beta.array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = inv_std;
  }
  return y;
}

template <class T>
Mat<T> norm_backward(const NormParams<T>& p, const NormCache<T>& cache, const Mat<T>& dy, NormParams<T>& g) {
  g.gamma += (dy.array() * cache.xhat.array()).rowwise().sum().matrix();
  g.beta += dy.rowwise().sum();
  const Mat<T> dxhat = dy.array().colwise() * p.gamma.array();
  const T mean_d = dxhat.mean();
  const T mean_dx = (dxhat.array() * cache.xhat.array()).mean();
  return ((dxhat.array() - mean_d) - cache.xhat.array() * mean_dx) * cache.inv_std;
}

}  // namespace ftin::nn
