#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "ctxeng/nnet/checkpoint.hpp"
#include "ctxeng/nnet/gradcheck.hpp"
#include "ctxeng/nnet/linear_probe.hpp"
#include "ctxeng/nnet/metrics.hpp"
#include "ctxeng/nnet/network.hpp"
#include "ctxeng/nnet/train.hpp"

using namespace ctxeng;
using namespace ctxeng::nnet;

namespace {

NetworkSpec lstm_spec(std::vector<int> dims, int top = 4) {
  NetworkSpec s;
  s.kind = NetKind::recurrent;
  s.layer_dims = std::move(dims);
  s.top_dim = top;
  return s;
}

NetworkSpec dense_spec(std::vector<int> dims, int top = 4) {
  NetworkSpec s;
  s.kind = NetKind::dense;
  s.layer_dims = std::move(dims);
  s.top_dim = top;
  return s;
}

template <class S>
Batch<S> random_batch(int T, int B, int F, std::uint64_t seed) {
  Batch<S> b;
  b.resize(T, B, F);
  Rng rng = make_rng(seed, 77);
  for (Eigen::Index i = 0; i < b.x.size(); ++i) b.x.data()[i] = static_cast<S>(2.0 * uniform01(rng) - 1.0);
  b.mask.setOnes();
  for (int i = 0; i < B; ++i) b.y[i] = static_cast<S>(uniform01(rng));
  return b;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

// ---------- forward ----------

TEST(Forward, ScalarLstmMatchesHandComputation) {
  Network<double> net(lstm_spec({1}, 1), 1);
  const auto& L = net.layout().lstm[0];
  net.params().setZero();
  for (std::size_t k = 0; k < 4; ++k) {
    net.params()[static_cast<Eigen::Index>(L.wx + k)] = 0.5;
    net.params()[static_cast<Eigen::Index>(L.wh + k)] = 0.5;
  }
  Batch<double> b;
  b.resize(2, 1, 1);
  b.x.setOnes();
  b.mask.setOnes();
  ForwardCache<double> fc;
  net.forward(b, &fc);

  // Step 1 from zero state.
  double z = 0.5 * 1.0;
  double i = sigmoid(z), f = sigmoid(z), g = std::tanh(z), o = sigmoid(z);
  double c1 = f * 0.0 + i * g;
  double h1 = o * std::tanh(c1);
  EXPECT_NEAR(fc.lstm[0].h(1, 0), h1, 1e-12);
  EXPECT_NEAR(fc.lstm[0].c(1, 0), c1, 1e-12);
  // Step 2 feeds h1 back.
  z = 0.5 * 1.0 + 0.5 * h1;
  i = sigmoid(z), f = sigmoid(z), g = std::tanh(z), o = sigmoid(z);
  const double c2 = f * c1 + i * g;
  EXPECT_NEAR(fc.lstm[0].h(2, 0), o * std::tanh(c2), 1e-12);
}

TEST(Forward, ZeroParametersGiveOutputBias) {
  for (auto spec : {lstm_spec({6, 3}), dense_spec({5})}) {
    Network<double> net(spec, 4);
    net.params().setZero();
    const auto& out = net.layout().dense.back();
    net.params()[static_cast<Eigen::Index>(out.b)] = 0.7;
    const int T = spec.kind == NetKind::recurrent ? 3 : 1;
    const auto b = random_batch<double>(T, 5, 4, 3);
    const Vec<double> p = net.forward(b);
    for (Eigen::Index k = 0; k < p.size(); ++k) EXPECT_EQ(p[k], 0.7);
  }
}

TEST(Forward, FullyMaskedSequenceEqualsEmptyHistory) {
  Network<double> net(lstm_spec({5, 4}), 3);
  net.init(11);
  auto b = random_batch<double>(6, 2, 3, 5);
  b.mask.setZero();
  const Vec<double> masked = net.forward(b);
  // Empty history: the head sees a zero state.
  Batch<double> empty;
  empty.resize(1, 2, 3);
  empty.mask.setZero();
  const Vec<double> ref = net.forward(empty);
  for (int k = 0; k < 2; ++k) EXPECT_NEAR(masked[k], ref[k], 1e-15);
}

TEST(Forward, PaddedStepsDoNotChangePredictions) {
  Network<double> net(lstm_spec({5, 4}), 3);
  net.init(12);
  const auto base = random_batch<double>(3, 2, 3, 6);
  const Vec<double> ref = net.forward(base);
  // Four garbage steps, padded in front and at the end.
  for (bool front : {true, false}) {
    Batch<double> b = random_batch<double>(7, 2, 3, 99);
    for (int t = 0; t < 7; ++t) {
      const bool live = front ? t >= 4 : t < 3;
      const int src = front ? t - 4 : t;
      for (int s = 0; s < 2; ++s) {
        b.mask(t, s) = live ? 1.0 : 0.0;
        if (live) b.x.row(t * 2 + s) = base.x.row(src * 2 + s);
      }
    }
    const Vec<double> p = net.forward(b);
    for (int k = 0; k < 2; ++k) EXPECT_NEAR(p[k], ref[k], 1e-12) << "front=" << front;
  }
}

TEST(Forward, ShapeMismatchNamesExpectedAndActual) {
  Network<float> net(lstm_spec({4}), 5);
  net.init(1);
  const auto b = random_batch<float>(2, 3, 6, 1);
  try {
    net.forward(b);
    FAIL();
  } catch (const InvalidArgument& e) {
    const std::string w = e.what();
    EXPECT_NE(w.find("5"), std::string::npos);
    EXPECT_NE(w.find("6"), std::string::npos);
  }
}

TEST(Forward, EvaluationIsDeterministicWithDropoutConfigured) {
  auto spec = lstm_spec({8});
  spec.dropout = 0.4;
  spec.recurrent_dropout = 0.4;
  Network<float> net(spec, 3);
  net.init(2);
  const auto b = random_batch<float>(4, 8, 3, 2);
  const Vec<float> a = net.forward(b);
  const Vec<float> c = net.forward(b);
  EXPECT_EQ(a, c);
}

// ---------- backward ----------

TEST(Backward, DeadPathHasZeroGradient) {
  for (auto spec : {lstm_spec({4, 3}), dense_spec({4})}) {
    Network<double> net(spec, 3);
    net.init(4);
    const int T = spec.kind == NetKind::recurrent ? 4 : 1;
    auto b = random_batch<double>(T, 5, 3, 4);
    b.x.col(1).setZero();  // feature 1 never carries signal
    ForwardCache<double> fc;
    Vec<double> dpred, grad;
    const Vec<double> p = net.forward(b, &fc);
    mse_loss<double>(p, b.y, &dpred);
    net.backward(b, fc, nullptr, dpred, grad);
    const std::size_t off = spec.kind == NetKind::recurrent ? net.layout().lstm[0].wx : net.layout().dense[0].w;
    const std::size_t width = spec.kind == NetKind::recurrent ? 4 * 4 : 4;
    double live = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      EXPECT_EQ(grad[static_cast<Eigen::Index>(off + width + j)], 0.0);
      live += std::abs(grad[static_cast<Eigen::Index>(off + j)]);
    }
    EXPECT_GT(live, 0.0);
  }
}

TEST(Backward, MaskedStepsContributeNothing) {
  Network<double> net(lstm_spec({4}), 3);
  net.init(5);
  auto b = random_batch<double>(5, 2, 3, 5);
  b.mask.row(0).setZero();
  b.mask.row(1).setZero();
  ForwardCache<double> fc;
  Vec<double> dpred, g1, g2;
  Vec<double> p = net.forward(b, &fc);
  mse_loss<double>(p, b.y, &dpred);
  net.backward(b, fc, nullptr, dpred, g1);
  // Changing inputs under the mask must not move any gradient.
  b.x.topRows(4).setConstant(3.0);
  p = net.forward(b, &fc);
  mse_loss<double>(p, b.y, &dpred);
  net.backward(b, fc, nullptr, dpred, g2);
  EXPECT_EQ(g1, g2);
}

TEST(Backward, GradientIsLinearInLossScale) {
  Network<double> net(lstm_spec({5, 3}), 4);
  net.init(6);
  const auto b = random_batch<double>(4, 3, 4, 6);
  ForwardCache<double> fc;
  Vec<double> dpred, g1, g2;
  const Vec<double> p = net.forward(b, &fc);
  mse_loss<double>(p, b.y, &dpred);
  net.backward(b, fc, nullptr, dpred, g1);
  net.backward(b, fc, nullptr, Vec<double>(2.0 * dpred), g2);
  for (Eigen::Index i = 0; i < g1.size(); ++i) EXPECT_NEAR(g2[i], 2.0 * g1[i], 1e-15 * (1 + std::abs(g1[i])));
}

TEST(GradCheck, DenseOnlyPasses) {
  auto rep = gradient_check(dense_spec({8, 6}, 5));
  EXPECT_GE(rep.probes, 100u);
  EXPECT_TRUE(rep.passed) << rep.max_rel_error;
}

TEST(GradCheck, DenseWithDropoutPasses) {
  auto spec = dense_spec({8, 6}, 5);
  spec.dropout = 0.3;
  auto rep = gradient_check(spec);
  EXPECT_TRUE(rep.passed) << rep.max_rel_error;
}

TEST(GradCheck, RecurrentTwoLayersPasses) {
  GradCheckOptions o;
  o.steps = 5;
  auto rep = gradient_check(lstm_spec({8, 6}, 5), o);
  EXPECT_GE(rep.probes, 100u);
  EXPECT_TRUE(rep.passed) << rep.max_rel_error;
}

TEST(GradCheck, RecurrentWithBothDropoutsPasses) {
  auto spec = lstm_spec({6, 5}, 4);
  spec.dropout = 0.3;
  spec.recurrent_dropout = 0.3;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    GradCheckOptions o;
    o.seed = seed;
    auto rep = gradient_check(spec, o);
    EXPECT_TRUE(rep.passed) << "seed " << seed << ": " << rep.max_rel_error;
  }
}

TEST(GradCheck, CorruptedForgetGateFails) {
  GradCheckOptions o;
  o.forget_gate_grad_scale = 1.5;
  auto rep = gradient_check(lstm_spec({8, 6}, 5), o);
  EXPECT_FALSE(rep.passed);
  EXPECT_GT(rep.max_rel_error, 1e-2);
}

// ---------- metrics ----------

TEST(Metrics, HandComputedTriple) {
  const std::vector<double> y{0, 1, 2}, yh{0, 1, 1};
  const auto m = compute_metrics(y, yh);
  EXPECT_DOUBLE_EQ(m.r2, 0.5);
  EXPECT_DOUBLE_EQ(m.rmse, std::sqrt(1.0 / 3.0));
  EXPECT_EQ(m.n, 3u);
}

TEST(Metrics, PerfectAndMeanPredictors) {
  const std::vector<double> y{1.5, -2.0, 0.25, 4.0};
  const auto perfect = compute_metrics(y, y);
  EXPECT_EQ(perfect.r2, 1.0);
  EXPECT_EQ(perfect.rmse, 0.0);
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / 4.0;
  const std::vector<double> naive(4, mean);
  EXPECT_NEAR(compute_metrics(y, naive).r2, 0.0, 1e-15);
}

TEST(Metrics, ZeroVarianceIsAnError) {
  const std::vector<double> y{2, 2, 2}, yh{1, 2, 3};
  EXPECT_THROW(compute_metrics(y, yh), UndefinedMetricError);
}

// ---------- training ----------

namespace {

MemorySource<float> linear_task(int n, std::uint64_t seed, int T = 1) {
  const std::vector<double> w{0.8, -0.5, 0.3, 0.6};
  MemorySource<float> src(T, 4);
  Rng rng = make_rng(seed, 5);
  for (int i = 0; i < n; ++i) {
    Mat<float> x(T, 4);
    for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = static_cast<float>(2.0 * uniform01(rng) - 1.0);
    double y = 0.0;
    for (int k = 0; k < 4; ++k) y += w[static_cast<std::size_t>(k)] * x(T - 1, k);
    src.add(x, {}, y);
  }
  return src;
}

}  // namespace

TEST(Train, PatienceStopsAtEightWithBestThree) {
  auto spec = dense_spec({4});
  spec.max_epochs = 50;
  spec.patience = 5;
  const auto tr = linear_task(64, 1), va = linear_task(32, 2);
  TrainOptions opt;
  opt.validation_override = [](int epoch, double) {
    const double v[] = {5.0, 4.0, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0, 6.5, 7.0};
    return v[std::min(epoch - 1, 10)];
  };
  const auto m = train(spec, tr, va, opt);
  EXPECT_EQ(m.stopped_epoch, 8);
  EXPECT_EQ(m.best_epoch, 3);
  ASSERT_EQ(m.trace.size(), 8u);

  // The kept state is the epoch-3 state.
  auto spec3 = spec;
  spec3.max_epochs = 3;
  const auto m3 = train(spec3, tr, va);
  EXPECT_EQ(m.parameters, m3.parameters);
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  auto spec = lstm_spec({4});
  spec.learning_rate = 0.0;
  spec.max_epochs = 10;
  spec.seed = 3;
  const auto tr = linear_task(50, 1, 3), va = linear_task(20, 2, 3);
  const auto m = train(spec, tr, va);
  Network<float> init(spec, 4);
  init.init(spec.seed);
  EXPECT_EQ(m.parameters, std::vector<float>(init.params().data(), init.params().data() + init.params().size()));
  for (const auto& r : m.trace) EXPECT_EQ(r.validation_rmse, m.trace.front().validation_rmse);
  EXPECT_EQ(m.best_epoch, 1);
  EXPECT_EQ(m.stopped_epoch, 6);
}

TEST(Train, PlantedLinearTaskIsLearned) {
  auto spec = dense_spec({16}, 16);
  spec.learning_rate = 0.01;
  spec.batch_size = 32;
  spec.max_epochs = 50;
  spec.patience = 50;
  const auto tr = linear_task(2000, 1), va = linear_task(500, 2);
  const auto m = train(spec, tr, va);
  EXPECT_LT(evaluate(m, va).rmse, 0.01);
}

TEST(Train, RecurrentPlantedTaskIsLearned) {
  auto spec = lstm_spec({16}, 16);
  spec.learning_rate = 0.01;
  spec.batch_size = 32;
  spec.max_epochs = 50;
  spec.patience = 50;
  const auto tr = linear_task(2000, 1, 3), va = linear_task(500, 2, 3);
  const auto m = train(spec, tr, va);
  EXPECT_LT(evaluate(m, va).rmse, 0.05);
}

TEST(Train, SameSeedSameParameters) {
  auto spec = lstm_spec({6});
  spec.dropout = 0.2;
  spec.recurrent_dropout = 0.2;
  spec.max_epochs = 4;
  spec.batch_size = 16;
  spec.seed = 9;
  const auto tr = linear_task(100, 1, 3), va = linear_task(40, 2, 3);
  const auto a = train(spec, tr, va), b = train(spec, tr, va);
  EXPECT_EQ(a.parameters, b.parameters);
  spec.seed = 10;
  EXPECT_NE(train(spec, tr, va).parameters, a.parameters);
}

TEST(Train, NonFiniteLossReportsEpochAndBatch) {
  MemorySource<float> tr(1, 2), va(1, 2);
  Mat<float> x(1, 2);
  x << 1, 2;
  tr.add(x, {}, std::nan(""));
  va.add(x, {}, 1.0);
  va.add(x * 2, {}, 2.0);
  try {
    train(dense_spec({3}), tr, va);
    FAIL();
  } catch (const DivergenceError& e) {
    const std::string w = e.what();
    EXPECT_NE(w.find("epoch 1"), std::string::npos);
    EXPECT_NE(w.find("batch 0"), std::string::npos);
  }
}

TEST(Train, EmptySplitRejected) {
  MemorySource<float> tr(1, 2), va(1, 2);
  EXPECT_THROW(train(dense_spec({3}), tr, va), InvalidArgument);
}

// ---------- checkpoint ----------

TEST(Checkpoint, RoundTripAndGateOrder) {
  auto spec = lstm_spec({3, 2}, 2);
  spec.seed = 4;
  TrainedModel m;
  m.spec = spec;
  m.input_dim = 2;
  Network<float> net(spec, 2);
  net.init(4);
  m.parameters.assign(net.params().data(), net.params().data() + net.params().size());
  m.best_epoch = 7;
  m.schema_fingerprint = "abc";
  const std::string bytes = serialize_checkpoint(m);
  const auto back = deserialize_checkpoint(bytes);
  EXPECT_EQ(back.parameters, m.parameters);
  EXPECT_EQ(back.spec, m.spec);
  EXPECT_EQ(back.best_epoch, 7);
  EXPECT_EQ(back.schema_fingerprint, "abc");

  // Layer 0: gate i block is in*H + H*H + H = 6 + 9 + 3 = 18 floats, so the
  // forget gate's first input weight is float 18 = internal Wx(0, H).
  std::uint64_t hl = 0;
  for (int i = 0; i < 8; ++i) hl |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
  float f0;
  std::memcpy(&f0, bytes.data() + 16 + hl + 4 * 18, 4);
  EXPECT_EQ(f0, m.parameters[net.layout().lstm[0].wx + 3]);
  // Forget bias of layer 0 sits after its 6 + 9 weights.
  std::memcpy(&f0, bytes.data() + 16 + hl + 4 * (18 + 15), 4);
  EXPECT_EQ(f0, 1.0f);

  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 1)), IoError);
  EXPECT_THROW(deserialize_checkpoint("garbage"), IoError);
}

// ---------- linear probe ----------

TEST(LinearProbe, RecoversPlantedCoefficients) {
  Eigen::MatrixXd X(50, 3);
  Rng rng = make_rng(1, 1);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = uniform01(rng);
  Eigen::VectorXd y = X * Eigen::Vector3d(1.0, -2.0, 0.5);
  y.array() += 3.0;
  const auto p = fit_linear_probe(X, y);
  EXPECT_NEAR(p.intercept, 3.0, 1e-10);
  EXPECT_NEAR(p.coef[1], -2.0, 1e-10);
}

TEST(LinearProbe, R2IsAffineInvariant) {
  Eigen::MatrixXd X(200, 4);
  Eigen::VectorXd y(200);
  Rng rng = make_rng(2, 2);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = uniform01(rng);
  for (Eigen::Index i = 0; i < 200; ++i) y[i] = X(i, 0) - 0.5 * X(i, 2) + uniform01(rng);
  auto r2_of = [&](const Eigen::VectorXd& t) {
    const auto p = fit_linear_probe(X, t);
    const Eigen::VectorXd yh = p.predict(X);
    return compute_metrics(std::span<const double>(t.data(), 200), std::span<const double>(yh.data(), 200)).r2;
  };
  const double base = r2_of(y);
  for (auto [a, b] : std::vector<std::pair<double, double>>{{3.0, -7.0}, {-0.25, 100.0}, {1e3, 1.0}}) {
    const Eigen::VectorXd t = (a * y).array() + b;
    EXPECT_NEAR(r2_of(t), base, 1e-9) << "a=" << a << " b=" << b;
  }
}
