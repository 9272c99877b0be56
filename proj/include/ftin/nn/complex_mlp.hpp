#pragma once

#include "ftin/nn/params.hpp"
#include "ftin/spectral.hpp"

#include <vector>

namespace ftin::nn {

// One complex layer W = W_r + jW_i, B = B_r + jB_i acting on row vectors,
// with the activation applied to the real and imaginary parts separately:
//   re' = act(re W_r - im W_i + B_r)
//   im' = act(re W_i + im W_r + B_i)
template <class T>
struct ComplexLayer {
  using Scalar = T;
  Mat<T> wr, wi;
  Vec<T> br, bi;

  ComplexLayer() = default;
  explicit ComplexLayer(Index d) : wr(Mat<T>::Zero(d, d)), wi(Mat<T>::Zero(d, d)), br(Vec<T>::Zero(d)), bi(Vec<T>::Zero(d)) {}

  Index dim() const { return wr.rows(); }

  void init(Rng& rng) {
    fan_in_uniform<T>(wr, dim(), rng);
    fan_in_uniform<T>(wi, dim(), rng);
    br.setZero();
    bi.setZero();
  }

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "wr", self.wr);
    f(prefix + "wi", self.wi);
    f(prefix + "br", self.br);
    f(prefix + "bi", self.bi);
  }
};

template <class T>
struct ComplexMlpParams {
  using Scalar = T;
  std::vector<ComplexLayer<T>> layers;

  ComplexMlpParams() = default;
  ComplexMlpParams(Index d, int n_layers) : layers(static_cast<std::size_t>(n_layers), ComplexLayer<T>(d)) {}

  void init(Rng& rng) {
    for (auto& l : layers) l.init(rng);
  }

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < self.layers.size(); ++i)
      ComplexLayer<T>::visit(self.layers[i], prefix + "l" + std::to_string(i) + ".", f);
  }
};

template <class T>
struct ComplexMlpCache {
  std::vector<Mat<T>> in_re, in_im;    // layer inputs
  std::vector<Mat<T>> pre_re, pre_im;  // pre-activations
};

template <class T>
HalfSpectrum<T> complex_mlp_forward(const ComplexMlpParams<T>& p, HalfSpectrum<T> y, Activation act,
                                    ComplexMlpCache<T>* cache = nullptr) {
  if (cache) *cache = {};
  for (std::size_t n = 0; n < p.layers.size(); ++n) {
    const auto& l = p.layers[n];
    require(y.re.cols() == l.dim() && y.im.cols() == l.dim(),
            "complex_mlp: layer " + std::to_string(n) + " expects width " + std::to_string(l.dim()));
    Mat<T> pre_re = y.re * l.wr - y.im * l.wi;
    pre_re.rowwise() += l.br.transpose();
    Mat<T> pre_im = y.re * l.wi + y.im * l.wr;
    pre_im.rowwise() += l.bi.transpose();
    if (!pre_re.allFinite() || !pre_im.allFinite()) {
      throw NumericError("complex_mlp: non-finite value in layer " + std::to_string(n));
    }
    if (cache) {
      cache->in_re.push_back(std::move(y.re));
      cache->in_im.push_back(std::move(y.im));
    }
    y.re = pre_re;
    y.im = pre_im;
    activate_inplace(y.re, act);
    activate_inplace(y.im, act);
    if (cache) {
      cache->pre_re.push_back(std::move(pre_re));
      cache->pre_im.push_back(std::move(pre_im));
    }
  }
  return y;
}

// Accumulates parameter gradients into g; returns gradients w.r.t. the input spectrum.
template <class T>
HalfSpectrum<T> complex_mlp_backward(const ComplexMlpParams<T>& p, const ComplexMlpCache<T>& cache, HalfSpectrum<T> dy,
                                     Activation act, ComplexMlpParams<T>& g) {
  for (std::size_t n = p.layers.size(); n-- > 0;) {
    const auto& l = p.layers[n];
    auto& gl = g.layers[n];
    Mat<T> gr = std::move(dy.re), gi = std::move(dy.im);
    activation_backward(gr, cache.pre_re[n], act);
    activation_backward(gi, cache.pre_im[n], act);
    const Mat<T>& xr = cache.in_re[n];
    const Mat<T>& xi = cache.in_im[n];
    gl.wr.noalias() += xr.transpose() * gr + xi.transpose() * gi;
    gl.wi.noalias() += xr.transpose() * gi - xi.transpose() * gr;
    gl.br += gr.colwise().sum().transpose();
    gl.bi += gi.colwise().sum().transpose();
    dy.re = gr * l.wr.transpose() + gi * l.wi.transpose();
    dy.im = gi * l.wr.transpose() - gr * l.wi.transpose();
  }
  return dy;
}

}  // namespace ftin::nn
