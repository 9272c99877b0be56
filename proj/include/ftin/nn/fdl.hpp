#pragma once

// Frequency-domain learning stage:
//   1. token embedding  E[c, l, k] = x_res[c, l] * w1[k]
//   2. per time step: DFT along channels -> complex MLP -> inverse DFT
//   3. per channel:   DFT along time     -> complex MLP -> inverse DFT
//   4. flatten (time, embedding) per channel -> fully connected -> activation
//
// Tensors of shape C x L x d are stored as row-major C x (L*d) matrices, so a
// channel's L x d slab is contiguous and a channel-axis spectrum of shape
// F x (L*d) reinterprets directly as an (F*L) x d matrix.

#include "ftin/nn/complex_mlp.hpp"
#include "ftin/spectral.hpp"

namespace ftin::nn {

template <class T>
using RowMap = Eigen::Map<Mat<T>>;
template <class T>
using ConstRowMap = Eigen::Map<const Mat<T>>;

template <class T>
struct FdlParams {
  using Scalar = T;
  Mat<T> w1;  // 1 x d
  ComplexMlpParams<T> channel;
  ComplexMlpParams<T> temporal;
  Mat<T> fc_w;  // (L_res * d) x L_fre
  Vec<T> fc_b;  // L_fre

  FdlParams() = default;
  FdlParams(Index l_res, Index d, int n_layers, Index l_fre)
      : w1(Mat<T>::Constant(1, d, static_cast<T>(1.0 / std::sqrt(static_cast<double>(d))))),
        channel(d, n_layers),
        temporal(d, n_layers),
        fc_w(Mat<T>::Zero(l_res * d, l_fre)),
        fc_b(Vec<T>::Zero(l_fre)) {}

  Index dim() const { return w1.cols(); }

  void init(Rng& rng) {
    w1.setConstant(static_cast<T>(1.0 / std::sqrt(static_cast<double>(dim()))));
    channel.init(rng);
    temporal.init(rng);
    fan_in_uniform<T>(fc_w, fc_w.rows(), rng);
    fc_b.setZero();
  }

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    f(prefix + "embed.w1", self.w1);
    ComplexMlpParams<T>::visit(self.channel, prefix + "channel.", f);
    ComplexMlpParams<T>::visit(self.temporal, prefix + "temporal.", f);
    f(prefix + "fc.weight", self.fc_w);
    f(prefix + "fc.bias", self.fc_b);
  }
};

// DFT plans for the two transform axes.
template <class T>
struct FdlPlans {
  const DftPlan<T>& channel;   // length C_res
  const DftPlan<T>& temporal;  // length L_res
  FdlPlans(Index c_res, Index l_res) : channel(dft_plan<T>(c_res)), temporal(dft_plan<T>(l_res)) {}
};

// Row-major reinterpretation with a fresh buffer.
template <class T>
Mat<T> reshaped_copy(const Mat<T>& m, Index rows, Index cols) {
  return ConstRowMap<T>(m.data(), rows, cols);
}

// x_emb as a C x (L*d) matrix.
template <class T>
Mat<T> token_embed(const Mat<T>& x_res, const Mat<T>& w1) {
  require(w1.rows() == 1 && w1.cols() >= 1, "token_embed: w1 must be 1 x d");
  const Index c = x_res.rows(), l = x_res.cols(), d = w1.cols();
  Mat<T> out(c, l * d);
  for (Index i = 0; i < c; ++i)
    for (Index j = 0; j < l; ++j) out.row(i).segment(j * d, d) = x_res(i, j) * w1.row(0);
  return out;
}

template <class T>
Mat<T> token_embed_backward(const Mat<T>& x_res, const Mat<T>& w1, const Mat<T>& d_emb, Mat<T>& g_w1) {
  const Index c = x_res.rows(), l = x_res.cols(), d = w1.cols();
  Mat<T> dx(c, l);
  for (Index i = 0; i < c; ++i) {
    for (Index j = 0; j < l; ++j) {
      const auto seg = d_emb.row(i).segment(j * d, d);
      dx(i, j) = seg.dot(w1.row(0));
      g_w1.row(0) += x_res(i, j) * seg;
    }
  }
  return dx;
}

// Channel-axis pass on a C x (L*d) tensor: returns C x (L*d).
template <class T>
Mat<T> channel_pass(const DftPlan<T>& plan, const ComplexMlpParams<T>& mlp, Activation act, const Mat<T>& x, Index d,
                    ComplexMlpCache<T>* cache = nullptr) {
  const Index f = plan.bins();
  const Index ld = x.cols();
  HalfSpectrum<T> s = dft_half(plan, x);  // F x (L*d)
  s.re = reshaped_copy(s.re, f * ld / d, d);
  s.im = reshaped_copy(s.im, f * ld / d, d);
  HalfSpectrum<T> y = complex_mlp_forward(mlp, std::move(s), act, cache);
  y.re = reshaped_copy(y.re, f, ld);
  y.im = reshaped_copy(y.im, f, ld);
  y.n_full = plan.size();
  return idft_half(plan, y, ImagResidue::Discard);
}

template <class T>
Mat<T> channel_pass_backward(const DftPlan<T>& plan, const ComplexMlpParams<T>& mlp, Activation act,
                             const ComplexMlpCache<T>& cache, const Mat<T>& dz, Index d, ComplexMlpParams<T>& g) {
  const Index f = plan.bins();
  const Index ld = dz.cols();
  HalfSpectrum<T> dy = idft_half_backward(plan, dz);
  dy.re = reshaped_copy(dy.re, f * ld / d, d);
  dy.im = reshaped_copy(dy.im, f * ld / d, d);
  HalfSpectrum<T> ds = complex_mlp_backward(mlp, cache, std::move(dy), act, g);
  const Mat<T> d_re = reshaped_copy(ds.re, f, ld);
  const Mat<T> d_im = reshaped_copy(ds.im, f, ld);
  return dft_half_backward(plan, d_re, d_im);
}

// Temporal-axis pass on a C x (L*d) tensor: each channel's L x d slab is
// transformed along L. Returns C x (L*d).
template <class T>
Mat<T> temporal_pass(const DftPlan<T>& plan, const ComplexMlpParams<T>& mlp, Activation act, const Mat<T>& x, Index d,
                     ComplexMlpCache<T>* cache = nullptr) {
  const Index c = x.rows(), l = plan.size(), f = plan.bins();
  require(x.cols() == l * d, "temporal_pass: shape mismatch");
  HalfSpectrum<T> s{Mat<T>(c * f, d), Mat<T>(c * f, d), l};
  for (Index i = 0; i < c; ++i) {
    const ConstRowMap<T> slab(x.row(i).data(), l, d);
    s.re.middleRows(i * f, f).noalias() = plan.fwd_re() * slab;
    s.im.middleRows(i * f, f).noalias() = plan.fwd_im() * slab;
  }
  const HalfSpectrum<T> y = complex_mlp_forward(mlp, std::move(s), act, cache);
  Mat<T> out(c, l * d);
  for (Index i = 0; i < c; ++i) {
    RowMap<T> slab(out.row(i).data(), l, d);
    slab.noalias() = plan.inv_re() * y.re.middleRows(i * f, f);
    slab.noalias() += plan.inv_im() * y.im.middleRows(i * f, f);
  }
  return out;
}

template <class T>
Mat<T> temporal_pass_backward(const DftPlan<T>& plan, const ComplexMlpParams<T>& mlp, Activation act,
                              const ComplexMlpCache<T>& cache, const Mat<T>& dz, Index d, ComplexMlpParams<T>& g) {
  const Index c = dz.rows(), l = plan.size(), f = plan.bins();
  HalfSpectrum<T> dy{Mat<T>(c * f, d), Mat<T>(c * f, d), l};
  for (Index i = 0; i < c; ++i) {
    const ConstRowMap<T> slab(dz.row(i).data(), l, d);
    dy.re.middleRows(i * f, f).noalias() = plan.inv_re().transpose() * slab;
    dy.im.middleRows(i * f, f).noalias() = plan.inv_im().transpose() * slab;
  }
  const HalfSpectrum<T> ds = complex_mlp_backward(mlp, cache, std::move(dy), act, g);
  Mat<T> dx(c, l * d);
  for (Index i = 0; i < c; ++i) {
    RowMap<T> slab(dx.row(i).data(), l, d);
    slab.noalias() = plan.fwd_re().transpose() * ds.re.middleRows(i * f, f);
    slab.noalias() += plan.fwd_im().transpose() * ds.im.middleRows(i * f, f);
  }
  return dx;
}

template <class T>
struct FdlCache {
  Mat<T> x_res;
  ComplexMlpCache<T> channel, temporal;
  Mat<T> flat;    // C x (L*d) input of the fully connected layer
  Mat<T> fc_pre;  // C x L_fre
};

// Returns X_fre of shape C_res x L_fre.
template <class T>
Mat<T> fdl_forward(const FdlParams<T>& p, const FdlPlans<T>& plans, Activation act, const Mat<T>& x_res,
                   FdlCache<T>* cache = nullptr) {
  require(x_res.rows() == plans.channel.size() && x_res.cols() == plans.temporal.size(),
          "fdl: backbone features have unexpected shape");
  const Index d = p.dim();
  const Mat<T> emb = token_embed(x_res, p.w1);
  const Mat<T> z = channel_pass(plans.channel, p.channel, act, emb, d, cache ? &cache->channel : nullptr);
  Mat<T> flat = temporal_pass(plans.temporal, p.temporal, act, z, d, cache ? &cache->temporal : nullptr);
  Mat<T> pre = flat * p.fc_w;
  pre.rowwise() += p.fc_b.transpose();
  Mat<T> out = pre;
  activate_inplace(out, act);
  if (cache) {
    cache->x_res = x_res;
    cache->flat = std::move(flat);
    cache->fc_pre = std::move(pre);
  }
  return out;
}

template <class T>
Mat<T> fdl_backward(const FdlParams<T>& p, const FdlPlans<T>& plans, Activation act, const FdlCache<T>& cache,
                    const Mat<T>& dout, FdlParams<T>& g) {
  const Index d = p.dim();
  Mat<T> dpre = dout;
  activation_backward(dpre, cache.fc_pre, act);
  g.fc_w.noalias() += cache.flat.transpose() * dpre;
  g.fc_b += dpre.colwise().sum().transpose();
  const Mat<T> dflat = dpre * p.fc_w.transpose();
  const Mat<T> dz = temporal_pass_backward(plans.temporal, p.temporal, act, cache.temporal, dflat, d, g.temporal);
  const Mat<T> demb = channel_pass_backward(plans.channel, p.channel, act, cache.channel, dz, d, g.channel);
  return token_embed_backward(cache.x_res, p.w1, demb, g.w1);
}

}  // namespace ftin::nn
