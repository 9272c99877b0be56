#pragma once

// The full velocity regressor: residual backbone, optional frequency-domain
// stage, optional scalar-LSTM stage, and a three-layer head.
//
//   fdl off, tdl off : backbone -> mean over time -> head
//   fdl on,  tdl off : backbone -> FDL -> mean over time -> head
//   fdl off, tdl on  : backbone -> sLSTM -> h_last -> head
//   fdl on,  tdl on  : backbone -> FDL -> sLSTM -> h_last -> head

#include "ftin/nn/fdl.hpp"
#include "ftin/nn/head.hpp"
#include "ftin/nn/resnet1d.hpp"
#include "ftin/nn/slstm.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace ftin {

struct FtinConfig {
  Index window = 200;  // L
  Index channels = 6;  // C
  nn::BackboneConfig backbone;
  int embed_dim = 32;  // d
  int n_freq_layers = 2;
  bool fdl_enabled = true;
  bool tdl_enabled = true;
  nn::SlstmConfig slstm;
  std::array<int, 3> head{128, 64, 2};
  Activation activation = Activation::Relu;
  int l_fre = 64;

  Index c_res() const { return backbone.channels.back(); }
  Index l_res() const { return nn::backbone_out_length(backbone, window); }
  Index head_input() const {
    if (tdl_enabled) return slstm.hidden;
    return c_res();
  }
};

inline void validate(const FtinConfig& c) {
  if (c.channels != 6) throw ValidationError("model config: channels must be 6");
  if (c.window < 2) throw ValidationError("model config: window must be >= 2");
  if (c.backbone.channels.empty() || c.backbone.channels.size() != c.backbone.strides.size()) {
    throw ValidationError("model config: backbone channels and strides must be non-empty and equal length");
  }
  for (std::size_t i = 0; i < c.backbone.channels.size(); ++i) {
    if (c.backbone.channels[i] < 1 || c.backbone.strides[i] < 1) throw ValidationError("model config: backbone widths and strides must be >= 1");
  }
  if (c.backbone.kernel < 1 || c.backbone.kernel % 2 == 0) throw ValidationError("model config: backbone kernel must be odd");
  if (c.backbone.blocks_per_stage < 1) throw ValidationError("model config: blocks_per_stage must be >= 1");
  if (c.l_res() < 1) throw ValidationError("model config: window too short for backbone strides");
  if (c.embed_dim < 1) throw ValidationError("model config: embed_dim must be >= 1");
  if (c.n_freq_layers < 1) throw ValidationError("model config: n_freq_layers must be >= 1");
  if (c.head[2] != 2) throw ValidationError("model config: head output width must be 2");
  if (c.head[0] < 1 || c.head[1] < 1) throw ValidationError("model config: head widths must be >= 1");
  if (c.fdl_enabled) {
    if (c.c_res() < 2 || c.l_res() < 2) throw ValidationError("model config: FDL needs C_res >= 2 and L_res >= 2");
    if (c.l_fre < 1) throw ValidationError("model config: l_fre must be >= 1");
  }
  if (c.tdl_enabled && (c.slstm.hidden < 1 || c.slstm.layers < 1)) {
    throw ValidationError("model config: slstm hidden and layers must be >= 1");
  }
}

// All learnable weights. Tensor names follow `stage.block.tensor`, e.g.
// backbone.s1.b0.conv1.weight, fdl.channel.l0.wr, tdl.l0.r, head.l2.bias.
template <class T>
struct FtinParams {
  using Scalar = T;
  nn::BackboneParams<T> backbone;
  std::optional<nn::FdlParams<T>> fdl;
  std::optional<nn::SlstmParams<T>> tdl;
  nn::HeadParams<T> head;

  FtinParams() = default;
  explicit FtinParams(const FtinConfig& cfg)
      : backbone((validate(cfg), nn::BackboneParams<T>(cfg.backbone, cfg.channels))), head(cfg.head_input(), cfg.head) {
    if (cfg.fdl_enabled) fdl.emplace(cfg.l_res(), cfg.embed_dim, cfg.n_freq_layers, cfg.l_fre);
    // C_fre equals C_res, so the recurrence sees C_res features either way.
    if (cfg.tdl_enabled) tdl.emplace(cfg.c_res(), cfg.slstm);
  }

  void init(std::uint64_t seed) {
    Rng rng(seed, 0x1417);
    backbone.init(rng);
    if (fdl) fdl->init(rng);
    if (tdl) tdl->init(rng);
    head.init(rng);
  }

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    nn::BackboneParams<T>::visit(self.backbone, prefix + "backbone.", f);
    if (self.fdl) nn::FdlParams<T>::visit(*self.fdl, prefix + "fdl.", f);
    if (self.tdl) nn::SlstmParams<T>::visit(*self.tdl, prefix + "tdl.", f);
    nn::HeadParams<T>::visit(self.head, prefix + "head.", f);
  }
};

template <class T>
FtinParams<T> init_params(const FtinConfig& cfg, std::uint64_t seed) {
  FtinParams<T> p(cfg);
  p.init(seed);
  return p;
}

template <class T>
struct FtinCache {
  nn::BackboneCache<T> backbone;
  nn::FdlCache<T> fdl;
  nn::SlstmCache<T> tdl;
  nn::HeadCache<T> head;
  Index pooled_cols = 0;
};

template <class T>
Vec<T> mean_over_time(const Mat<T>& features) {
  return features.rowwise().mean();
}

template <class T>
Vec<T> ftin_forward(const FtinParams<T>& p, const FtinConfig& cfg, const Mat<T>& x, FtinCache<T>* cache = nullptr) {
  require(x.rows() == cfg.channels && x.cols() == cfg.window,
          "ftin_forward: expected input " + std::to_string(cfg.channels) + "x" + std::to_string(cfg.window) + ", got " +
              std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
  require(p.fdl.has_value() == cfg.fdl_enabled && p.tdl.has_value() == cfg.tdl_enabled,
          "ftin_forward: parameters do not match the configured stage toggles");
  Mat<T> feat = nn::resnet1d_forward(p.backbone, x, cache ? &cache->backbone : nullptr);
  if (cfg.fdl_enabled) {
    const nn::FdlPlans<T> plans(feat.rows(), feat.cols());
    feat = nn::fdl_forward(*p.fdl, plans, cfg.activation, feat, cache ? &cache->fdl : nullptr);
  }
  Vec<T> u;
  if (cfg.tdl_enabled) {
    u = nn::slstm_forward(*p.tdl, feat, cache ? &cache->tdl : nullptr).h_last;
  } else {
    u = mean_over_time(feat);
    if (cache) cache->pooled_cols = feat.cols();
  }
  return nn::head_forward(p.head, u, cfg.activation, cache ? &cache->head : nullptr);
}

// Accumulates dL/dparams into g given dL/dv. Returns dL/dx.
template <class T>
Mat<T> ftin_backward(const FtinParams<T>& p, const FtinConfig& cfg, const FtinCache<T>& cache, const Vec<T>& dv,
                     FtinParams<T>& g) {
  const Vec<T> du = nn::head_backward(p.head, cache.head, dv, cfg.activation, g.head);
  Mat<T> dfeat;
  if (cfg.tdl_enabled) {
    dfeat = nn::slstm_backward(*p.tdl, cache.tdl, Mat<T>(), du, *g.tdl);
  } else {
    dfeat = du.replicate(1, cache.pooled_cols) / static_cast<T>(cache.pooled_cols);
  }
  if (cfg.fdl_enabled) {
    const nn::FdlPlans<T> plans(cfg.c_res(), cfg.l_res());
    dfeat = nn::fdl_backward(*p.fdl, plans, cfg.activation, cache.fdl, dfeat, *g.fdl);
  }
  return nn::resnet1d_backward(p.backbone, cache.backbone, dfeat, g.backbone);
}

// Row b of the result is the forward pass of window b.
template <class T>
Mat<T> ftin_forward_batch(const FtinParams<T>& p, const FtinConfig& cfg, const std::vector<Mat<T>>& xs) {
  Mat<T> out(static_cast<Index>(xs.size()), 2);
  for (std::size_t b = 0; b < xs.size(); ++b) out.row(static_cast<Index>(b)) = ftin_forward(p, cfg, xs[b]).transpose();
  return out;
}

}  // namespace ftin
