#pragma once

#include "ftin/nn/params.hpp"

#include <array>

namespace ftin::nn {

// Three affine layers with the activation between layers 1-2 and 2-3.
template <class T>
struct HeadParams {
  using Scalar = T;
  std::array<Mat<T>, 3> w;  // out x in
  std::array<Vec<T>, 3> b;

  HeadParams() = default;
  HeadParams(Index in, const std::array<int, 3>& widths) {
    Index prev = in;
    for (std::size_t k = 0; k < 3; ++k) {
      w[k] = Mat<T>::Zero(widths[k], prev);
      b[k] = Vec<T>::Zero(widths[k]);
      prev = widths[k];
    }
  }

  Index input() const { return w[0].cols(); }

  void init(Rng& rng) {
    for (std::size_t k = 0; k < 3; ++k) {
      fan_in_uniform<T>(w[k], w[k].cols(), rng);
      b[k].setZero();
    }
  }

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    for (std::size_t k = 0; k < 3; ++k) {
      f(prefix + "l" + std::to_string(k) + ".weight", self.w[k]);
      f(prefix + "l" + std::to_string(k) + ".bias", self.b[k]);
    }
  }
};

template <class T>
struct HeadCache {
  std::array<Vec<T>, 3> in;
  std::array<Vec<T>, 2> pre;
};

template <class T>
Vec<T> head_forward(const HeadParams<T>& p, const Vec<T>& u, Activation act, HeadCache<T>* cache = nullptr) {
  require(u.size() == p.input(), "head: expected input of size " + std::to_string(p.input()) + ", got " +
                                     std::to_string(u.size()));
  Vec<T> h = u;
  for (std::size_t k = 0; k < 3; ++k) {
    if (cache) cache->in[k] = h;
    Vec<T> pre = p.w[k] * h + p.b[k];
    if (k < 2) {
      h = pre;
      activate_inplace(h, act);
      if (cache) cache->pre[k] = std::move(pre);
    } else {
      h = std::move(pre);
    }
  }
  return h;
}

template <class T>
Vec<T> head_backward(const HeadParams<T>& p, const HeadCache<T>& cache, const Vec<T>& dout, Activation act, HeadParams<T>& g) {
  Vec<T> d = dout;
  for (std::size_t k = 3; k-- > 0;) {
    if (k < 2) activation_backward(d, cache.pre[k], act);
    g.w[k].noalias() += d * cache.in[k].transpose();
    g.b[k] += d;
    d = p.w[k].transpose() * d;
  }
  return d;
}

}  // namespace ftin::nn
