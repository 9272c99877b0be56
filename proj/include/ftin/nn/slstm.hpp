#pragma once

// Scalar LSTM with exponential input/forget gates, a normalizer state and a
// log-domain stabilizer. Per step, with gate pre-activations
// g~ = W x_t + R h_{t-1} + b for g in {z, i, f, o}:
//
//   m_t = max(f~ + m_{t-1}, i~)        (m_1 = i~ : there is no history to forget)
//   i'  = exp(i~ - m_t)
//   f'  = exp(f~ + m_{t-1} - m_t)
//   c_t = f' c_{t-1} + i' tanh(z~)
//   n_t = f' n_{t-1} + i'
//   h_t = sigmoid(o~) * c_t / n_t
//
// The stabilizer cancels in c_t / n_t, so gradients treat m as a constant.
// n_t >= 1 for every t, which keeps the ratio well defined.

#include "ftin/nn/params.hpp"

#include <vector>

namespace ftin::nn {

struct SlstmConfig {
  int hidden = 128;
  int layers = 1;
};

template <class T>
struct SlstmLayer {
  using Scalar = T;
  Mat<T> wx;  // 4H x in, gate blocks z, i, f, o
  Mat<T> r;   // 4H x H
  Vec<T> b;   // 4H

  SlstmLayer() = default;
  SlstmLayer(Index in, Index hidden) : wx(Mat<T>::Zero(4 * hidden, in)), r(Mat<T>::Zero(4 * hidden, hidden)), b(Vec<T>::Zero(4 * hidden)) {}

  Index hidden() const { return r.cols(); }
  Index input() const { return wx.cols(); }

  void init(Rng& rng) {
    fan_in_uniform<T>(wx, input(), rng);
    fan_in_uniform<T>(r, hidden(), rng);
    b.setZero();
  }

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "wx", self.wx);
    f(prefix + "r", self.r);
    f(prefix + "b", self.b);
  }
};

template <class T>
struct SlstmParams {
  using Scalar = T;
  std::vector<SlstmLayer<T>> layers;

  SlstmParams() = default;
  SlstmParams(Index in, const SlstmConfig& cfg) {
    require(cfg.hidden >= 1 && cfg.layers >= 1, "slstm: hidden size and layer count must be >= 1");
    for (int k = 0; k < cfg.layers; ++k) layers.emplace_back(k == 0 ? in : cfg.hidden, cfg.hidden);
  }

  void init(Rng& rng) {
    for (auto& l : layers) l.init(rng);
  }

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < self.layers.size(); ++i)
      SlstmLayer<T>::visit(self.layers[i], prefix + "l" + std::to_string(i) + ".", f);
  }
};

template <class T>
struct SlstmLayerCache {
  Mat<T> x;                          // in x T
  Mat<T> h;                          // H x T
  Mat<T> z, ip, fp, o, c, n;         // H x T
};

template <class T>
struct SlstmCache {
  std::vector<SlstmLayerCache<T>> layers;
};

template <class T>
struct SlstmOutput {
  Mat<T> x_temp;  // H x T, hidden state per step
  Vec<T> h_last;  // H
};

template <class T>
Mat<T> slstm_layer_forward(const SlstmLayer<T>& p, const Mat<T>& x, SlstmLayerCache<T>* cache) {
  require(x.rows() == p.input(), "slstm: expected " + std::to_string(p.input()) + " input features, got " +
                                     std::to_string(x.rows()));
  const Index hd = p.hidden(), steps = x.cols();
  require(steps >= 1, "slstm: empty sequence");
  Mat<T> pre = p.wx * x;
  pre.colwise() += p.b;

  Vec<T> h = Vec<T>::Zero(hd), c = Vec<T>::Zero(hd), n = Vec<T>::Zero(hd), m = Vec<T>::Zero(hd);
  Mat<T> hs(hd, steps);
  if (cache) {
    cache->x = x;
    for (Mat<T>* a : {&cache->z, &cache->ip, &cache->fp, &cache->o, &cache->c, &cache->n}) a->resize(hd, steps);
  }
  Vec<T> g(4 * hd);
  for (Index t = 0; t < steps; ++t) {
    g.noalias() = pre.col(t) + p.r * h;
    const auto gz = g.segment(0, hd).array();
    const auto gi = g.segment(hd, hd).array();
    const auto gf = g.segment(2 * hd, hd).array();
    const auto go = g.segment(3 * hd, hd).array();
    const Vec<T> m_new = t == 0 ? Vec<T>(gi.matrix()) : Vec<T>((gf + m.array()).max(gi).matrix());
    const Vec<T> ip = (gi - m_new.array()).exp().matrix();
    const Vec<T> fp = (gf + m.array() - m_new.array()).exp().matrix();
    const Vec<T> z = gz.tanh().matrix();
    const Vec<T> o = (T(1) / (T(1) + (-go).exp())).matrix();
    c = (fp.array() * c.array() + ip.array() * z.array()).matrix();
    n = (fp.array() * n.array() + ip.array()).matrix();
    h = (o.array() * c.array() / n.array()).matrix();
    m = m_new;
    if (!h.allFinite()) throw NumericError("slstm: non-finite hidden state at step " + std::to_string(t));
    hs.col(t) = h;
    if (cache) {
      cache->z.col(t) = z;
      cache->ip.col(t) = ip;
      cache->fp.col(t) = fp;
      cache->o.col(t) = o;
      cache->c.col(t) = c;
      cache->n.col(t) = n;
    }
  }
  if (cache) cache->h = hs;
  return hs;
}

// Backpropagation through time; dh is the gradient w.r.t. every hidden state.
template <class T>
Mat<T> slstm_layer_backward(const SlstmLayer<T>& p, const SlstmLayerCache<T>& cache, const Mat<T>& dh_seq, SlstmLayer<T>& g) {
  const Index hd = p.hidden(), steps = cache.h.cols();
  Mat<T> dpre(4 * hd, steps);
  Vec<T> dh_rec = Vec<T>::Zero(hd), dc_next = Vec<T>::Zero(hd), dn_next = Vec<T>::Zero(hd);
  Vec<T> fp_next = Vec<T>::Zero(hd);
  const Vec<T> zero = Vec<T>::Zero(hd);
  for (Index t = steps; t-- > 0;) {
    const auto z = cache.z.col(t).array();
    const auto ip = cache.ip.col(t).array();
    const auto fp = cache.fp.col(t).array();
    const auto o = cache.o.col(t).array();
    const auto c = cache.c.col(t).array();
    const auto n = cache.n.col(t).array();
    const Vec<T> c_prev = t > 0 ? Vec<T>(cache.c.col(t - 1)) : zero;
    const Vec<T> n_prev = t > 0 ? Vec<T>(cache.n.col(t - 1)) : zero;

    const Vec<T> dh = dh_seq.col(t) + dh_rec;
    const Vec<T> dc = (dh.array() * o / n + dc_next.array() * fp_next.array()).matrix();
    const Vec<T> dn = (-dh.array() * o * c / (n * n) + dn_next.array() * fp_next.array()).matrix();
    dpre.col(t).segment(0, hd) = (dc.array() * ip * (T(1) - z * z)).matrix();
    dpre.col(t).segment(hd, hd) = ((dc.array() * z + dn.array()) * ip).matrix();
    dpre.col(t).segment(2 * hd, hd) = ((dc.array() * c_prev.array() + dn.array() * n_prev.array()) * fp).matrix();
    dpre.col(t).segment(3 * hd, hd) = (dh.array() * (c / n) * o * (T(1) - o)).matrix();

    dh_rec.noalias() = p.r.transpose() * dpre.col(t);
    if (t > 0) g.r.noalias() += dpre.col(t) * cache.h.col(t - 1).transpose();
    dc_next = dc;
    dn_next = dn;
    fp_next = cache.fp.col(t);
  }
  g.wx.noalias() += dpre * cache.x.transpose();
  g.b += dpre.rowwise().sum();
  return p.wx.transpose() * dpre;
}

template <class T>
SlstmOutput<T> slstm_forward(const SlstmParams<T>& p, const Mat<T>& x, SlstmCache<T>* cache = nullptr) {
  if (cache) cache->layers.assign(p.layers.size(), {});
  Mat<T> h = x;
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    h = slstm_layer_forward(p.layers[k], h, cache ? &cache->layers[k] : nullptr);
  }
  Vec<T> last = h.col(h.cols() - 1);
  return {std::move(h), std::move(last)};
}

// d_seq: gradient w.r.t. the full hidden sequence (may be empty); d_last:
// gradient w.r.t. h_last (may be empty). Returns gradient w.r.t. the input.
template <class T>
Mat<T> slstm_backward(const SlstmParams<T>& p, const SlstmCache<T>& cache, const Mat<T>& d_seq, const Vec<T>& d_last,
                      SlstmParams<T>& g) {
  const auto& top = cache.layers.back();
  Mat<T> d = d_seq.size() ? d_seq : Mat<T>(Mat<T>::Zero(top.h.rows(), top.h.cols()));
  if (d_last.size()) d.col(d.cols() - 1) += d_last;
  for (std::size_t k = p.layers.size(); k-- > 0;) {
    d = slstm_layer_backward(p.layers[k], cache.layers[k], d, g.layers[k]);
  }
  return d;
}

}  // namespace ftin::nn
