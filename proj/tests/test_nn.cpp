#include "ftin/model.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <complex>
#include <set>

using namespace ftin;
using namespace ftin::nn;

namespace {

// Zero-padded strided correlation, one output at a time.
Mat<double> naive_conv(const ConvParams<double>& p, const Mat<double>& x) {
  const Index pad = (p.kernel - 1) / 2;
  const Index out_len = (x.cols() + 2 * pad - p.kernel) / p.stride + 1;
  Mat<double> y(p.out_channels(), out_len);
  for (Index o = 0; o < p.out_channels(); ++o)
    for (Index t = 0; t < out_len; ++t) {
      double acc = p.bias[o];
      for (Index c = 0; c < x.rows(); ++c)
        for (int k = 0; k < p.kernel; ++k) {
          const Index src = t * p.stride + k - pad;
          if (src >= 0 && src < x.cols()) acc += p.weight(o, c * p.kernel + k) * x(c, src);
        }
      y(o, t) = acc;
    }
  return y;
}

// Unstabilized recurrence in extended precision.
Mat<long double> naive_slstm(const SlstmLayer<double>& p, const Mat<double>& x) {
  const Index hd = p.hidden();
  using L = long double;
  std::vector<L> h(hd, 0), c(hd, 0), n(hd, 0);
  Mat<long double> out(hd, x.cols());
  for (Index t = 0; t < x.cols(); ++t) {
    std::vector<L> g(4 * hd);
    for (Index r = 0; r < 4 * hd; ++r) {
      L acc = p.b[r];
      for (Index j = 0; j < x.rows(); ++j) acc += L(p.wx(r, j)) * x(j, t);
      for (Index j = 0; j < hd; ++j) acc += L(p.r(r, j)) * h[j];
      g[r] = acc;
    }
    for (Index k = 0; k < hd; ++k) {
      const L ip = std::exp(g[hd + k]), fp = std::exp(g[2 * hd + k]);
      c[k] = fp * c[k] + ip * std::tanh(g[k]);
      n[k] = fp * n[k] + ip;
      const L o = 1 / (1 + std::exp(-g[3 * hd + k]));
      h[k] = o * c[k] / n[k];
      out(k, t) = h[k];
    }
  }
  return out;
}

SlstmLayer<double> random_slstm(Index in, Index hd, Rng& rng) {
  SlstmLayer<double> p(in, hd);
  p.init(rng);
  p.b = test::random_mat(4 * hd, 1, rng, 0.5);
  return p;
}

}  // namespace

TEST(Conv1d, MatchesNaiveLoops) {
  Rng rng(10);
  for (int kernel : {1, 3, 5})
    for (int stride : {1, 2, 3})
      for (Index len : {1, 7, 20}) {
        ConvParams<double> p(3, 4, kernel, stride);
        p.weight = test::random_mat(4, 3 * kernel, rng);
        p.bias = test::random_mat(4, 1, rng);
        const Mat<double> x = test::random_mat(3, len, rng);
        const Mat<double> y = conv1d_forward(p, x);
        const Mat<double> ref = naive_conv(p, x);
        ASSERT_EQ(y.cols(), ref.cols());
        EXPECT_LT((y - ref).cwiseAbs().maxCoeff(), 1e-12) << kernel << " " << stride << " " << len;
      }
}

TEST(Conv1d, BackwardIsTransposeOfForward) {
  Rng rng(11);
  ConvParams<double> p(3, 5, 3, 2);
  p.weight = test::random_mat(5, 9, rng);
  const Mat<double> x = test::random_mat(3, 11, rng);
  ConvCache<double> cache;
  const Mat<double> y = conv1d_forward(p, x, &cache);
  const Mat<double> dy = test::random_mat(y.rows(), y.cols(), rng);
  ConvParams<double> g(3, 5, 3, 2);
  const Mat<double> dx = conv1d_backward(p, cache, dy, g);
  // y is affine in x: <dy, y(x) - y(0)> == <dx, x>.
  const Mat<double> y0 = conv1d_forward(p, Mat<double>::Zero(3, 11).eval());
  EXPECT_NEAR(((y - y0).array() * dy.array()).sum(), (dx.array() * x.array()).sum(), 1e-10);
  EXPECT_LT((g.bias - dy.rowwise().sum()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Norm, PerSampleStatistics) {
  Rng rng(12);
  NormParams<double> p(4);
  p.gamma = test::random_mat(4, 1, rng);
  p.beta = test::random_mat(4, 1, rng);
  const Mat<double> x = test::random_mat(4, 9, rng, 3.0);
  const Mat<double> y = norm_forward(p, x);
  double mean = 0, var = 0;
  for (Index i = 0; i < x.size(); ++i) mean += x.data()[i];
  mean /= double(x.size());
  for (Index i = 0; i < x.size(); ++i) var += (x.data()[i] - mean) * (x.data()[i] - mean);
  var /= double(x.size());
  for (Index c = 0; c < 4; ++c)
    for (Index t = 0; t < 9; ++t)
      EXPECT_NEAR(y(c, t), p.gamma[c] * (x(c, t) - mean) / std::sqrt(var + kNormEps) + p.beta[c], 1e-12);
}

TEST(ComplexMlp, MatchesComplexAffineMaps) {
  Rng rng(13);
  using cd = std::complex<double>;
  for (int trial = 0; trial < 100; ++trial) {
    const Index d = 1 + static_cast<Index>(rng.below(64));
    const Index rows = 1 + static_cast<Index>(rng.below(8));
    const int layers = 1 + static_cast<int>(rng.below(3));
    ComplexMlpParams<double> p(d, layers);
    for (auto& l : p.layers) {
      l.wr = test::random_mat(d, d, rng, 0.3);
      l.wi = test::random_mat(d, d, rng, 0.3);
      l.br = test::random_mat(d, 1, rng);
      l.bi = test::random_mat(d, 1, rng);
    }
    HalfSpectrum<double> y{test::random_mat(rows, d, rng), test::random_mat(rows, d, rng), 0};
    std::vector<std::vector<cd>> ref(static_cast<std::size_t>(rows), std::vector<cd>(static_cast<std::size_t>(d)));
    for (Index r = 0; r < rows; ++r)
      for (Index j = 0; j < d; ++j) ref[r][j] = {y.re(r, j), y.im(r, j)};
    for (const auto& l : p.layers) {
      for (auto& row : ref) {
        std::vector<cd> next(static_cast<std::size_t>(d));
        for (Index j = 0; j < d; ++j) {
          cd acc{l.br[j], l.bi[j]};
          for (Index i = 0; i < d; ++i) acc += row[i] * cd{l.wr(i, j), l.wi(i, j)};
          next[j] = acc;
        }
        row = next;
      }
    }
    const auto out = complex_mlp_forward(p, y, Activation::Identity);
    double err = 0, mag = 1;
    for (Index r = 0; r < rows; ++r)
      for (Index j = 0; j < d; ++j) {
        err = std::max(err, std::abs(cd{out.re(r, j), out.im(r, j)} - ref[r][j]));
        mag = std::max(mag, std::abs(ref[r][j]));
      }
    EXPECT_LT(err / mag, 1e-12) << "trial " << trial;
  }
}

TEST(ComplexMlp, ReluActsOnRealAndImaginaryParts) {
  ComplexMlpParams<double> p(1, 1);
  p.layers[0].wr(0, 0) = 1.0;
  p.layers[0].wi(0, 0) = 0.0;
  HalfSpectrum<double> y{Mat<double>::Constant(1, 1, -2.0), Mat<double>::Constant(1, 1, 3.0), 0};
  const auto out = complex_mlp_forward(p, y, Activation::Relu);
  EXPECT_EQ(out.re(0, 0), 0.0);
  EXPECT_EQ(out.im(0, 0), 3.0);
}

TEST(ComplexMlp, NonFiniteNamesLayer) {
  ComplexMlpParams<double> p(2, 2);
  p.layers[1].br[0] = std::numeric_limits<double>::quiet_NaN();
  HalfSpectrum<double> y{Mat<double>::Ones(1, 2), Mat<double>::Ones(1, 2), 0};
  try {
    complex_mlp_forward(p, y, Activation::Identity);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos);
  }
}

TEST(Slstm, MatchesUnstabilizedRecurrence) {
  Rng rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = random_slstm(3, 4, rng);
    const Mat<double> x = test::random_mat(3, 50, rng);
    const Mat<double> h = slstm_layer_forward(p, x, static_cast<SlstmLayerCache<double>*>(nullptr));
    const Mat<long double> ref = naive_slstm(p, x);
    EXPECT_LT((h.cast<long double>() - ref).cwiseAbs().maxCoeff(), 1e-8L) << "trial " << trial;
  }
}

TEST(Slstm, LargeGatePreactivationsStayFinite) {
  Rng rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = random_slstm(3, 4, rng);
    p.b.segment(4, 8).array() += 50.0;  // input and forget gates
    const Mat<double> x = test::random_mat(3, 50, rng);
    const Mat<double> h = slstm_layer_forward(p, x, static_cast<SlstmLayerCache<double>*>(nullptr));
    ASSERT_TRUE(h.allFinite());
    // exp(50 * 50) overflows double but not long double.
    EXPECT_LT((h.cast<long double>() - naive_slstm(p, x)).cwiseAbs().maxCoeff(), 1e-8L);
  }
}

TEST(Slstm, HiddenStateIsBounded) {
  Rng rng(16);
  auto p = random_slstm(3, 6, rng);
  p.wx *= 20.0;
  p.r *= 20.0;
  const Mat<double> x = test::random_mat(3, 200, rng, 10.0);
  const Mat<double> h = slstm_layer_forward(p, x, static_cast<SlstmLayerCache<double>*>(nullptr));
  EXPECT_LE(h.cwiseAbs().maxCoeff(), 1.0);
}

TEST(Slstm, StackedLayersFeedHiddenStates) {
  Rng rng(17);
  SlstmParams<double> p(3, SlstmConfig{4, 2});
  p.init(rng);
  const Mat<double> x = test::random_mat(3, 12, rng);
  const auto out = slstm_forward(p, x);
  const Mat<double> h1 = slstm_layer_forward(p.layers[0], x, static_cast<SlstmLayerCache<double>*>(nullptr));
  const Mat<double> h2 = slstm_layer_forward(p.layers[1], h1, static_cast<SlstmLayerCache<double>*>(nullptr));
  EXPECT_EQ(out.x_temp, h2);
  EXPECT_EQ(out.h_last, h2.col(11));
}

TEST(Backbone, OutputLengthFollowsStrides) {
  FtinConfig cfg;
  EXPECT_EQ(cfg.l_res(), 25);
  EXPECT_EQ(cfg.c_res(), 256);
  const FtinConfig tiny = test::tiny_config();
  Rng rng(18);
  const auto p = init_params<double>(tiny, 1);
  const Mat<double> feat = resnet1d_forward(p.backbone, test::random_mat(6, 32, rng));
  EXPECT_EQ(feat.rows(), 6);
  EXPECT_EQ(feat.cols(), 16);
}

TEST(Fdl, OutputShapeAndPlans) {
  const FtinConfig cfg = test::tiny_config();
  Rng rng(19);
  const auto p = init_params<double>(cfg, 2);
  const FdlPlans<double> plans(cfg.c_res(), cfg.l_res());
  const Mat<double> out = fdl_forward(*p.fdl, plans, cfg.activation, test::random_mat(6, 16, rng));
  EXPECT_EQ(out.rows(), 6);
  EXPECT_EQ(out.cols(), 6);
  EXPECT_THROW(fdl_forward(*p.fdl, plans, cfg.activation, test::random_mat(6, 15, rng)), ContractError);
}

TEST(Model, StageTogglesSelectParameters) {
  for (bool fdl : {false, true})
    for (bool tdl : {false, true}) {
      const auto p = init_params<double>(test::tiny_config(fdl, tdl), 3);
      std::set<std::string> stages;
      for (const auto& v : tensor_views(p)) stages.insert(v.name.substr(0, v.name.find('.')));
      EXPECT_EQ(stages.count("fdl"), fdl ? 1u : 0u);
      EXPECT_EQ(stages.count("tdl"), tdl ? 1u : 0u);
      EXPECT_EQ(stages.count("backbone"), 1u);
      EXPECT_EQ(stages.count("head"), 1u);
    }
}

TEST(Model, BothStagesOffIsBackbonePoolHead) {
  const FtinConfig cfg = test::tiny_config(false, false);
  const auto p = init_params<double>(cfg, 4);
  Rng rng(20);
  for (int k = 0; k < 5; ++k) {
    const Mat<double> x = test::random_mat(6, 32, rng);
    const Vec<double> direct = head_forward(p.head, mean_over_time(resnet1d_forward(p.backbone, x)), cfg.activation);
    EXPECT_EQ(ftin_forward(p, cfg, x), direct);
  }
}

TEST(Model, BatchRowsEqualSingleWindows) {
  const FtinConfig cfg = test::tiny_config();
  const auto p = init_params<double>(cfg, 5);
  Rng rng(21);
  std::vector<Mat<double>> xs;
  for (int k = 0; k < 4; ++k) xs.push_back(test::random_mat(6, 32, rng));
  const Mat<double> batch = ftin_forward_batch(p, cfg, xs);
  for (int k = 0; k < 4; ++k) EXPECT_EQ(Vec<double>(batch.row(k).transpose()), ftin_forward(p, cfg, xs[k]));
  // A window's prediction does not depend on its neighbours.
  std::vector<Mat<double>> other{xs[2], test::random_mat(6, 32, rng)};
  EXPECT_EQ(ftin_forward_batch(p, cfg, other).row(0), batch.row(2));
}

TEST(Model, ForwardIsPure) {
  const FtinConfig cfg = test::tiny_config();
  const auto p = init_params<double>(cfg, 6);
  const auto before = p;
  Rng rng(22);
  const Mat<double> x = test::random_mat(6, 32, rng);
  const Vec<double> first = ftin_forward(p, cfg, x);
  for (int k = 0; k < 10; ++k) EXPECT_EQ(ftin_forward(p, cfg, x), first);
  const auto a = tensor_views(p), b = tensor_views(before);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (Index j = 0; j < a[i].size(); ++j) ASSERT_EQ(a[i].data[j], b[i].data[j]) << a[i].name;
}

TEST(Model, InitIsDeterministicInSeed) {
  const FtinConfig cfg = test::tiny_config();
  const auto a = init_params<double>(cfg, 9), b = init_params<double>(cfg, 9), c = init_params<double>(cfg, 10);
  EXPECT_EQ(a.head.w[0], b.head.w[0]);
  EXPECT_NE(a.head.w[0], c.head.w[0]);
}

TEST(Model, WrongInputShapeIsContractError) {
  const FtinConfig cfg = test::tiny_config();
  const auto p = init_params<double>(cfg, 7);
  EXPECT_THROW(ftin_forward(p, cfg, Mat<double>(Mat<double>::Zero(6, 31))), ContractError);
  EXPECT_THROW(ftin_forward(p, test::tiny_config(false, true), Mat<double>(Mat<double>::Zero(6, 32))), ContractError);
}

TEST(Model, ValidateRejectsBadConfigs) {
  FtinConfig c = test::tiny_config();
  c.backbone.kernel = 4;
  EXPECT_THROW(validate(c), ValidationError);
  c = test::tiny_config();
  c.head[2] = 3;
  EXPECT_THROW(validate(c), ValidationError);
  c = test::tiny_config();
  c.window = 2;
  c.backbone.strides = {2, 2};
  EXPECT_THROW(validate(c), ValidationError);
}

TEST(Model, RunsInSinglePrecision) {
  const FtinConfig cfg = test::tiny_config();
  const auto p = init_params<float>(cfg, 8);
  Rng rng(23);
  const Vec<float> v = ftin_forward(p, cfg, test::random_mat<float>(6, 32, rng));
  EXPECT_TRUE(v.allFinite());
}
