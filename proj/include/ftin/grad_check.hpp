#pragma once

// Central finite-difference verification of the hand-written backward passes.
// Each block is checked in isolation: its input is produced by running the
// model prefix on a window, a fixed random target defines an MSE loss on the
// block output, and only that block's parameters are perturbed.

#include "ftin/model.hpp"
#include "ftin/training.hpp"

#include <functional>

namespace ftin {

enum class GradBlock { Backbone, TokenEmbed, ChannelMlp, TemporalMlp, Fdl, Slstm, Head, Full };

inline const char* to_string(GradBlock b) {
  switch (b) {
    case GradBlock::Backbone: return "backbone";
    case GradBlock::TokenEmbed: return "token_embed";
    case GradBlock::ChannelMlp: return "channel_mlp";
    case GradBlock::TemporalMlp: return "temporal_mlp";
    case GradBlock::Fdl: return "fdl";
    case GradBlock::Slstm: return "slstm";
    case GradBlock::Head: return "head";
    case GradBlock::Full: return "full";
  }
  return "?";
}

struct GradCheckOptions {
  double eps = 1e-6;
  int max_params = 32;
  std::uint64_t seed = 0;
  // Denominator floor, so parameters whose true gradient is ~0 are judged on
  // absolute rather than relative error.
  double floor = 1e-4;
};

struct GradCheckEntry {
  std::string tensor;
  Index index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::vector<GradCheckEntry> entries;
};

inline double relative_error(double a, double n, double floor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

namespace detail {

using P = FtinParams<double>;

struct BlockProblem {
  std::string prefix;  // parameters eligible for sampling
  std::function<double(const P&)> loss;
  std::function<void(const P&, P&)> grad;  // accumulates dloss/dparams
};

inline Mat<double> random_like(Index rows, Index cols, Rng& rng) {
  Mat<double> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// MSE against `target` and its gradient w.r.t. the prediction.
inline double mse_of(const Mat<double>& out, const Mat<double>& target) { return mse_loss<double>(out, target); }
inline Mat<double> mse_grad(const Mat<double>& out, const Mat<double>& target) {
  return 2.0 * (out - target) / static_cast<double>(out.size());
}

inline BlockProblem make_problem(GradBlock block, const P& params, const FtinConfig& cfg, const Mat<double>& x, Rng& rng) {
  const Activation act = cfg.activation;
  const bool needs_fdl = block == GradBlock::TokenEmbed || block == GradBlock::ChannelMlp ||
                         block == GradBlock::TemporalMlp || block == GradBlock::Fdl;
  if (needs_fdl && !cfg.fdl_enabled) throw PreconditionError(std::string("grad_check: block ") + to_string(block) + " requires fdl_enabled");
  if (block == GradBlock::Slstm && !cfg.tdl_enabled) throw PreconditionError("grad_check: block slstm requires tdl_enabled");

  const Mat<double> x_res = nn::resnet1d_forward(params.backbone, x);
  BlockProblem pb;

  switch (block) {
    case GradBlock::Backbone: {
      const Mat<double> tgt = random_like(x_res.rows(), x_res.cols(), rng);
      pb.prefix = "backbone.";
      pb.loss = [x, tgt](const P& p) { return mse_of(nn::resnet1d_forward(p.backbone, x), tgt); };
      pb.grad = [x, tgt](const P& p, P& g) {
        nn::BackboneCache<double> c;
        const Mat<double> out = nn::resnet1d_forward(p.backbone, x, &c);
        nn::resnet1d_backward(p.backbone, c, mse_grad(out, tgt), g.backbone);
      };
      break;
    }
    case GradBlock::TokenEmbed: {
      const Mat<double> tgt = random_like(x_res.rows(), x_res.cols() * params.fdl->dim(), rng);
      pb.prefix = "fdl.embed.";
      pb.loss = [x_res, tgt](const P& p) { return mse_of(nn::token_embed(x_res, p.fdl->w1), tgt); };
      pb.grad = [x_res, tgt](const P& p, P& g) {
        const Mat<double> out = nn::token_embed(x_res, p.fdl->w1);
        nn::token_embed_backward(x_res, p.fdl->w1, mse_grad(out, tgt), g.fdl->w1);
      };
      break;
    }
    case GradBlock::ChannelMlp:
    case GradBlock::TemporalMlp: {
      const Index d = params.fdl->dim();
      const nn::FdlPlans<double> plans(x_res.rows(), x_res.cols());
      Mat<double> in = nn::token_embed(x_res, params.fdl->w1);
      if (block == GradBlock::TemporalMlp) in = nn::channel_pass(plans.channel, params.fdl->channel, act, in, d);
      const Mat<double> tgt = random_like(in.rows(), in.cols(), rng);
      const bool temporal = block == GradBlock::TemporalMlp;
      pb.prefix = temporal ? "fdl.temporal." : "fdl.channel.";
      auto forward = [in, d, act, temporal, plans](const P& p, nn::ComplexMlpCache<double>* c) {
        return temporal ? nn::temporal_pass(plans.temporal, p.fdl->temporal, act, in, d, c)
                        : nn::channel_pass(plans.channel, p.fdl->channel, act, in, d, c);
      };
      pb.loss = [forward, tgt](const P& p) { return mse_of(forward(p, nullptr), tgt); };
      pb.grad = [forward, tgt, d, act, temporal, plans](const P& p, P& g) {
        nn::ComplexMlpCache<double> c;
        const Mat<double> dz = mse_grad(forward(p, &c), tgt);
        if (temporal) nn::temporal_pass_backward(plans.temporal, p.fdl->temporal, act, c, dz, d, g.fdl->temporal);
        else nn::channel_pass_backward(plans.channel, p.fdl->channel, act, c, dz, d, g.fdl->channel);
      };
      break;
    }
    case GradBlock::Fdl: {
      const nn::FdlPlans<double> plans(x_res.rows(), x_res.cols());
      const Mat<double> tgt = random_like(x_res.rows(), params.fdl->fc_b.size(), rng);
      pb.prefix = "fdl.";
      pb.loss = [x_res, tgt, act, plans](const P& p) { return mse_of(nn::fdl_forward(*p.fdl, plans, act, x_res), tgt); };
      pb.grad = [x_res, tgt, act, plans](const P& p, P& g) {
        nn::FdlCache<double> c;
        const Mat<double> out = nn::fdl_forward(*p.fdl, plans, act, x_res, &c);
        nn::fdl_backward(*p.fdl, plans, act, c, mse_grad(out, tgt), *g.fdl);
      };
      break;
    }
    case GradBlock::Slstm: {
      Mat<double> in = x_res;
      if (cfg.fdl_enabled) in = nn::fdl_forward(*params.fdl, nn::FdlPlans<double>(x_res.rows(), x_res.cols()), act, x_res);
      const Mat<double> tgt = random_like(params.tdl->layers.back().hidden(), in.cols(), rng);
      pb.prefix = "tdl.";
      pb.loss = [in, tgt](const P& p) { return mse_of(nn::slstm_forward(*p.tdl, in).x_temp, tgt); };
      pb.grad = [in, tgt](const P& p, P& g) {
        nn::SlstmCache<double> c;
        const Mat<double> out = nn::slstm_forward(*p.tdl, in, &c).x_temp;
        nn::slstm_backward(*p.tdl, c, mse_grad(out, tgt), Vec<double>(), *g.tdl);
      };
      break;
    }
    case GradBlock::Head: {
      FtinCache<double> fc;
      ftin_forward(params, cfg, x, &fc);
      const Vec<double> u = fc.head.in[0];
      const Vec<double> tgt = random_like(2, 1, rng);
      pb.prefix = "head.";
      pb.loss = [u, tgt, act](const P& p) { return mse_of(nn::head_forward(p.head, u, act), tgt); };
      pb.grad = [u, tgt, act](const P& p, P& g) {
        nn::HeadCache<double> c;
        const Vec<double> out = nn::head_forward(p.head, u, act, &c);
        nn::head_backward(p.head, c, Vec<double>(mse_grad(out, tgt)), act, g.head);
      };
      break;
    }
    case GradBlock::Full: {
      const Vec<double> tgt = random_like(2, 1, rng);
      pb.prefix = "";
      pb.loss = [x, tgt, cfg](const P& p) { return mse_of(ftin_forward(p, cfg, x), tgt); };
      pb.grad = [x, tgt, cfg](const P& p, P& g) {
        FtinCache<double> c;
        const Vec<double> out = ftin_forward(p, cfg, x, &c);
        ftin_backward(p, cfg, c, Vec<double>(mse_grad(out, tgt)), g);
      };
      break;
    }
  }
  return pb;
}

}  // namespace detail

// Adds N(0, scale^2) noise to every parameter. Zero-initialised biases put
// rectifier inputs exactly on the kink; a small jitter moves them off it.
template <class T>
void jitter_params(FtinParams<T>& p, double scale, std::uint64_t seed) {
  Rng rng(seed, 0x1177);
  for (auto& t : nn::tensor_views(p))
    for (Index i = 0; i < t.size(); ++i) t.data[i] += static_cast<T>(scale * rng.normal());
}

// Detailed report: one entry per sampled parameter.
inline GradCheckResult grad_check_report(GradBlock block, const FtinParams<double>& params, const FtinConfig& cfg,
                                         const Mat<double>& x, const GradCheckOptions& opt = {}) {
  Rng rng(opt.seed, 0x6C4E);
  const detail::BlockProblem pb = detail::make_problem(block, params, cfg, x, rng);

  FtinParams<double> analytic = nn::zeros_like(params);
  pb.grad(params, analytic);

  FtinParams<double> work = params;
  auto wv = nn::tensor_views(work);
  auto av = nn::tensor_views(analytic);
  std::vector<std::pair<std::size_t, Index>> pool;
  for (std::size_t k = 0; k < wv.size(); ++k) {
    if (wv[k].name.compare(0, pb.prefix.size(), pb.prefix) != 0) continue;
    for (Index i = 0; i < wv[k].size(); ++i) pool.emplace_back(k, i);
  }
  if (pool.empty()) throw PreconditionError(std::string("grad_check: block ") + to_string(block) + " has no parameters");
  rng.shuffle(pool);
  pool.resize(std::min(pool.size(), static_cast<std::size_t>(std::max(1, opt.max_params))));

  GradCheckResult res;
  for (const auto& [k, i] : pool) {
    double& w = wv[k].data[i];
    const double saved = w;
    w = saved + opt.eps;
    const double up = pb.loss(work);
    w = saved - opt.eps;
    const double down = pb.loss(work);
    w = saved;
    GradCheckEntry e;
    e.tensor = wv[k].name;
    e.index = i;
    e.analytic = av[k].data[i];
    e.numeric = (up - down) / (2.0 * opt.eps);
    e.rel_error = relative_error(e.analytic, e.numeric, opt.floor);
    res.max_rel_error = std::max(res.max_rel_error, e.rel_error);
    res.entries.push_back(std::move(e));
  }
  return res;
}

inline double grad_check(GradBlock block, const FtinParams<double>& params, const FtinConfig& cfg, const Mat<double>& x,
                         double eps = 1e-6) {
  GradCheckOptions opt;
  opt.eps = eps;
  return grad_check_report(block, params, cfg, x, opt).max_rel_error;
}

}  // namespace ftin
