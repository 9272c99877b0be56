#pragma once

#include "ftin/nn/conv1d.hpp"

#include <optional>
#include <vector>

namespace ftin::nn {

struct BackboneConfig {
  std::vector<int> channels{64, 128, 192, 256};
  std::vector<int> strides{1, 2, 2, 2};
  int kernel = 3;
  int blocks_per_stage = 2;
};

// Basic residual block:
//   out = relu(norm2(conv2(relu(norm1(conv1(x))))) + skip(x))
// where skip is the identity, or a strided 1x1 projection when the channel
// count or resolution changes.
template <class T>
struct BlockParams {
  using Scalar = T;
  ConvParams<T> conv1, conv2;
  NormParams<T> norm1, norm2;
  std::optional<ConvParams<T>> proj;

  BlockParams() = default;
  BlockParams(Index in_ch, Index out_ch, int kernel, int stride)
      : conv1(in_ch, out_ch, kernel, stride), conv2(out_ch, out_ch, kernel, 1), norm1(out_ch), norm2(out_ch) {
    if (in_ch != out_ch || stride != 1) proj.emplace(in_ch, out_ch, 1, stride);
  }

  void init(Rng& rng) {
    conv1.init(rng);
    conv2.init(rng);
    if (proj) proj->init(rng);
  }

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    ConvParams<T>::visit(self.conv1, prefix + "conv1.", f);
    NormParams<T>::visit(self.norm1, prefix + "norm1.", f);
    ConvParams<T>::visit(self.conv2, prefix + "conv2.", f);
    NormParams<T>::visit(self.norm2, prefix + "norm2.", f);
    if (self.proj) ConvParams<T>::visit(*self.proj, prefix + "proj.", f);
  }
};

template <class T>
struct BlockCache {
  ConvCache<T> c1, c2, cp;
  NormCache<T> n1, n2;
  Mat<T> pre1;  // norm1 output (before relu)
  Mat<T> sum;   // residual sum (before relu)
};

template <class T>
Mat<T> block_forward(const BlockParams<T>& p, const Mat<T>& x, BlockCache<T>* cache = nullptr) {
  Mat<T> pre1 = norm_forward(p.norm1, conv1d_forward(p.conv1, x, cache ? &cache->c1 : nullptr), cache ? &cache->n1 : nullptr);
  const Mat<T> h1 = pre1.array().max(T(0));
  Mat<T> sum = norm_forward(p.norm2, conv1d_forward(p.conv2, h1, cache ? &cache->c2 : nullptr), cache ? &cache->n2 : nullptr);
  if (p.proj) {
    sum += conv1d_forward(*p.proj, x, cache ? &cache->cp : nullptr);
  } else {
    sum += x;
  }
  Mat<T> out = sum.array().max(T(0));
  if (cache) {
    cache->pre1 = std::move(pre1);
    cache->sum = std::move(sum);
  }
  return out;
}

template <class T>
Mat<T> block_backward(const BlockParams<T>& p, const BlockCache<T>& cache, const Mat<T>& dout, BlockParams<T>& g) {
  Mat<T> dsum = dout;
  activation_backward(dsum, cache.sum, Activation::Relu);
  Mat<T> dh1 = conv1d_backward(p.conv2, cache.c2, norm_backward(p.norm2, cache.n2, dsum, g.norm2), g.conv2);
  activation_backward(dh1, cache.pre1, Activation::Relu);
  Mat<T> dx = conv1d_backward(p.conv1, cache.c1, norm_backward(p.norm1, cache.n1, dh1, g.norm1), g.conv1);
  if (p.proj) {
    dx += conv1d_backward(*p.proj, cache.cp, dsum, *g.proj);
  } else {
    dx += dsum;
  }
  return dx;
}

template <class T>
struct BackboneParams {
  using Scalar = T;
  std::vector<std::vector<BlockParams<T>>> stages;

  BackboneParams() = default;
  BackboneParams(const BackboneConfig& cfg, Index in_channels) {
    require(cfg.channels.size() == cfg.strides.size() && !cfg.channels.empty(),
            "backbone: channels and strides must be non-empty and of equal length");
    require(cfg.kernel >= 1 && cfg.kernel % 2 == 1, "backbone: kernel size must be odd");
    require(cfg.blocks_per_stage >= 1, "backbone: blocks_per_stage must be >= 1");
    Index in_ch = in_channels;
    for (std::size_t s = 0; s < cfg.channels.size(); ++s) {
      std::vector<BlockParams<T>> blocks;
      for (int b = 0; b < cfg.blocks_per_stage; ++b) {
        blocks.emplace_back(in_ch, cfg.channels[s], cfg.kernel, b == 0 ? cfg.strides[s] : 1);
        in_ch = cfg.channels[s];
      }
      stages.push_back(std::move(blocks));
    }
  }

  void init(Rng& rng) {
    for (auto& stage : stages)
      for (auto& b : stage) b.init(rng);
  }

  template <class Self, class F>
  static void visit(Self& self, const std::string& prefix, F&& f) {
    for (std::size_t s = 0; s < self.stages.size(); ++s)
      for (std::size_t b = 0; b < self.stages[s].size(); ++b)
        BlockParams<T>::visit(self.stages[s][b], prefix + "s" + std::to_string(s) + ".b" + std::to_string(b) + ".", f);
  }
};

template <class T>
struct BackboneCache {
  std::vector<BlockCache<T>> blocks;
};

// Output length after the backbone for an input of length `length`.
inline Index backbone_out_length(const BackboneConfig& cfg, Index length) {
  Index l = length;
  const Index pad = (cfg.kernel - 1) / 2;
  for (int s : cfg.strides) {
    l = (l + 2 * pad - cfg.kernel) / s + 1;
  }
  return l;
}

template <class T>
Mat<T> resnet1d_forward(const BackboneParams<T>& p, const Mat<T>& x, BackboneCache<T>* cache = nullptr) {
  if (cache) cache->blocks.clear();
  Mat<T> h = x;
  for (const auto& stage : p.stages) {
    for (const auto& block : stage) {
      BlockCache<T>* bc = nullptr;
      if (cache) bc = &cache->blocks.emplace_back();
      h = block_forward(block, h, bc);
    }
  }
  return h;
}

template <class T>
Mat<T> resnet1d_backward(const BackboneParams<T>& p, const BackboneCache<T>& cache, const Mat<T>& dout, BackboneParams<T>& g) {
  Mat<T> d = dout;
  std::size_t k = cache.blocks.size();
  for (std::size_t s = p.stages.size(); s-- > 0;) {
    for (std::size_t b = p.stages[s].size(); b-- > 0;) {
      d = block_backward(p.stages[s][b], cache.blocks[--k], d, g.stages[s][b]);
    }
  }
  return d;
}

}  // namespace ftin::nn
