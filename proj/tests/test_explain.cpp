#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "ctxeng/bench/suite.hpp"
#include "ctxeng/explain/summary.hpp"
#include "ctxeng/synthgen/generator.hpp"

using namespace ctxeng;
using namespace ctxeng::explain;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

ModelFn rowwise(std::function<double(const VectorXd&)> g) {
  return [g](const MatrixXd& X) {
    VectorXd out(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) out[i] = g(X.row(i).transpose());
    return out;
  };
}

// Random smooth model: sum of tanh units plus pairwise products.
// Columns `tie_a` and `tie_b` enter symmetrically; `dummy` is ignored.
struct RandomModel {
  int d;
  MatrixXd W;
  VectorXd a, c;
  MatrixXd P;
  int tie_a, tie_b, dummy;

  RandomModel(int d_, Rng& rng) : d(d_) {
    std::normal_distribution<double> n;
    const int units = 4;
    W.resize(units, d);
    a.resize(units);
    c.resize(units);
    for (int k = 0; k < units; ++k) {
      for (int j = 0; j < d; ++j) W(k, j) = n(rng);
      a[k] = n(rng);
      c[k] = n(rng);
    }
    P = MatrixXd::Zero(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = i + 1; j < d; ++j) P(i, j) = 0.5 * n(rng);
    dummy = d - 1;
    tie_a = 0;
    tie_b = 1;
    W.col(dummy).setZero();
    P.col(dummy).setZero();
    P.row(dummy).setZero();
    W.col(tie_b) = W.col(tie_a);
    // Interactions of tied columns with others are shared; their mutual term is symmetric already.
    for (int j = 2; j < d; ++j) {
      P(tie_b, j) = P(tie_a, j);
    }
  }

  double operator()(const VectorXd& z) const {
    return a.dot((W * z + c).array().tanh().matrix()) + z.dot(P * z);
  }
};

MatrixXd random_matrix(int rows, int cols, Rng& rng) {
  std::normal_distribution<double> n;
  MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

}  // namespace

TEST(ExactShap, LinearModelWithZeroBackground) {
  const auto f = rowwise([](const VectorXd& x) { return 2 * x[0] + 0 * x[1]; });
  const auto r = exact_shap(f, VectorXd{{3, 5}}, MatrixXd::Zero(1, 2), Groups::singletons(2));
  EXPECT_NEAR(r.phi[0], 6.0, 1e-12);
  EXPECT_NEAR(r.phi[1], 0.0, 1e-12);
  EXPECT_NEAR(r.base_value, 0.0, 1e-12);
}

TEST(ExactShap, PureInteractionSplitsEvenly) {
  const auto f = rowwise([](const VectorXd& x) { return x[0] * x[1]; });
  const auto r = exact_shap(f, VectorXd{{1, 1}}, MatrixXd::Zero(1, 2), Groups::singletons(2));
  EXPECT_NEAR(r.phi[0], 0.5, 1e-12);
  EXPECT_NEAR(r.phi[1], 0.5, 1e-12);
}

TEST(ExactShap, ThreeFeatureHandEnumeration) {
  // f = x1 + x2*x3, zero background, x = (1,2,3): v({2,3}) = 6 shared between 2 and 3.
  const auto f = rowwise([](const VectorXd& x) { return x[0] + x[1] * x[2]; });
  const auto r = exact_shap(f, VectorXd{{1, 2, 3}}, MatrixXd::Zero(2, 3), Groups::singletons(3));
  EXPECT_NEAR(r.phi[0], 1.0, 1e-12);
  EXPECT_NEAR(r.phi[1], 3.0, 1e-12);
  EXPECT_NEAR(r.phi[2], 3.0, 1e-12);
}

TEST(ExactShap, AxiomsOnRandomModels) {
  for (int m = 0; m < 20; ++m) {
    Rng rng = make_rng(100, 1, static_cast<std::uint64_t>(m));
    const int d = 3 + m % 8;
    const RandomModel model(d, rng);
    const auto f = rowwise([&](const VectorXd& z) { return model(z); });
    MatrixXd bg = random_matrix(6, d, rng);
    VectorXd x = random_matrix(1, d, rng).row(0).transpose();
    bg.col(model.tie_b) = bg.col(model.tie_a);
    x[model.tie_b] = x[model.tie_a];
    const auto r = exact_shap(f, x, bg, Groups::singletons(static_cast<std::size_t>(d)));
    EXPECT_NEAR(r.phi.sum() + r.base_value, model(x), 1e-9) << "efficiency, model " << m;
    EXPECT_NEAR(r.phi[model.tie_a], r.phi[model.tie_b], 1e-9) << "symmetry, model " << m;
    EXPECT_NEAR(r.phi[model.dummy], 0.0, 1e-9) << "dummy, model " << m;
  }
}

TEST(ExactShap, ConstantModelHasZeroAttribution) {
  const auto f = [](const MatrixXd& X) { return VectorXd::Constant(X.rows(), 4.2); };
  Rng rng = make_rng(3, 3);
  const MatrixXd bg = random_matrix(5, 4, rng);
  const VectorXd x = random_matrix(1, 4, rng).row(0).transpose();
  const auto e = exact_shap(f, x, bg, Groups::singletons(4));
  EXPECT_LT(e.phi.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(e.base_value, 4.2, 1e-12);
  const auto s = sampled_shap(f, x, bg, Groups::singletons(4), {50, 1});
  EXPECT_LT(s.phi.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ExactShap, GroupMatchesAtomicFeatureModel) {
  // Columns 1..3 are a one-hot family. The atomic oracle replaces the family
  // with a single categorical code.
  const auto onehot_model = [](const VectorXd& z) {
    return 1.5 * z[0] + z[0] * (2 * z[1] - z[2] + 0.5 * z[3]) + std::sin(z[4]) * z[3];
  };
  const auto atomic_model = [&](const VectorXd& u) {
    VectorXd z = VectorXd::Zero(5);
    z[0] = u[0];
    z[1 + static_cast<int>(u[1])] = 1.0;
    z[4] = u[2];
    return onehot_model(z);
  };
  const auto encode = [](double a, int code, double e) {
    VectorXd z = VectorXd::Zero(5);
    z[0] = a;
    z[1 + code] = 1.0;
    z[4] = e;
    return z;
  };
  MatrixXd bg(3, 5), bg_atomic(3, 3);
  const int codes[] = {0, 2, 1};
  for (int i = 0; i < 3; ++i) {
    bg.row(i) = encode(0.3 * i - 0.2, codes[i], 0.7 * i).transpose();
    bg_atomic.row(i) << 0.3 * i - 0.2, codes[i], 0.7 * i;
  }
  Groups g;
  g.names = {"a", "family", "e"};
  g.members = {{0}, {1, 2, 3}, {4}};
  const auto grouped = exact_shap(rowwise(onehot_model), encode(1.1, 1, -0.4), bg, g);
  const auto atomic = exact_shap(rowwise(atomic_model), VectorXd{{1.1, 1, -0.4}}, bg_atomic, Groups::singletons(3));
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(grouped.phi[k], atomic.phi[k], 1e-12) << k;
}

TEST(ExactShap, TooManyGroupsPointsToSampledMode) {
  const auto f = [](const MatrixXd& X) { return VectorXd(X.rowwise().sum()); };
  try {
    exact_shap(f, VectorXd::Zero(16), MatrixXd::Zero(1, 16), Groups::singletons(16));
    FAIL() << "expected a size error";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("sampled"), std::string::npos);
  }
  EXPECT_THROW(exact_shap(f, VectorXd::Zero(2), MatrixXd::Zero(0, 2), Groups::singletons(2)), InvalidArgument);
}

TEST(SampledShap, AgreesWithExactWithinThreeStandardErrors) {
  int within = 0, total = 0;
  for (int m = 0; m < 10; ++m) {
    Rng rng = make_rng(200, 1, static_cast<std::uint64_t>(m));
    const int d = 2 + m % 9;
    const RandomModel model(d, rng);
    const auto f = rowwise([&](const VectorXd& z) { return model(z); });
    const MatrixXd bg = random_matrix(8, d, rng);
    const VectorXd x = random_matrix(1, d, rng).row(0).transpose();
    const auto g = Groups::singletons(static_cast<std::size_t>(d));
    const auto e = exact_shap(f, x, bg, g);
    const auto s = sampled_shap(f, x, bg, g, {2000, static_cast<std::uint64_t>(m)});
    for (int k = 0; k < d; ++k) {
      ++total;
      within += std::abs(s.phi[k] - e.phi[k]) <= 3 * s.se[k] + 1e-12;
    }
    // 2000 pairs cycle the 8 background rows evenly.
    EXPECT_NEAR(s.phi.sum() + s.base_value, s.fx, 1e-9);
  }
  // Roughly 0.3% of honest comparisons fall outside 3 SE.
  EXPECT_GE(within, total - 1);
}

TEST(SampledShap, DeterministicInSeedAndThreadCount) {
  Rng rng = make_rng(7, 7);
  const RandomModel model(6, rng);
  const auto f = rowwise([&](const VectorXd& z) { return model(z); });
  ShapConfig cfg;
  cfg.background = random_matrix(10, 6, rng);
  cfg.n_permutations = 40;
  cfg.seed = 11;
  const MatrixXd samples = random_matrix(7, 6, rng);
  const auto a = explain_samples(f, samples, cfg);
  cfg.jobs = 3;
  const auto b = explain_samples(f, samples, cfg);
  EXPECT_EQ(a.phi, b.phi);
  EXPECT_EQ(a.se, b.se);
  cfg.seed = 12;
  EXPECT_NE(a.phi, explain_samples(f, samples, cfg).phi);
}

TEST(SampledShap, MonteCarloSpreadShrinksWithMorePermutations) {
  // Spread over 30 seeds at n and 2n, pooled over features and samples.
  Rng rng = make_rng(9, 9);
  const int d = 6;
  const RandomModel model(d, rng);
  const auto f = rowwise([&](const VectorXd& z) { return model(z); });
  const MatrixXd bg = random_matrix(20, d, rng);
  const MatrixXd xs = random_matrix(4, d, rng);
  const auto g = Groups::singletons(d);
  auto pooled_sd = [&](int n) {
    double acc = 0.0;
    int cells = 0;
    for (Eigen::Index i = 0; i < xs.rows(); ++i) {
      MatrixXd est(30, d);
      for (int s = 0; s < 30; ++s)
        est.row(s) = sampled_shap(f, xs.row(i).transpose(), bg, g, {n, static_cast<std::uint64_t>(1000 * n + s)})
                         .phi.transpose();
      const Eigen::RowVectorXd mean = est.colwise().mean();
      const MatrixXd c = est.rowwise() - mean;
      acc += c.array().square().sum() / 29.0;
      cells += d;
    }
    return std::sqrt(acc / cells);
  };
  const double ratio = pooled_sd(100) / pooled_sd(200);
  EXPECT_GE(ratio, 1.3);
  EXPECT_LE(ratio, 1.6);
}

TEST(Importance, RankingExamples) {
  ShapResult r;
  r.group_names = {"f1", "f2"};
  r.phi = MatrixXd{{0.2, -0.5}};
  auto rows = importance_summary(r);
  EXPECT_EQ(rows[0].group, "f2");
  EXPECT_DOUBLE_EQ(rows[0].mean_abs, 0.5);
  EXPECT_EQ(rows[1].group, "f1");
  EXPECT_DOUBLE_EQ(rows[1].mean_abs, 0.2);

  r.group_names = {"zeta", "alpha", "mid"};
  r.phi = MatrixXd::Zero(3, 3);
  rows = importance_summary(r);
  EXPECT_EQ(rows[0].group, "alpha");
  EXPECT_EQ(rows[1].group, "mid");
  EXPECT_EQ(rows[2].group, "zeta");
}

TEST(Correlations, HandComputedAndEdgeCases) {
  EXPECT_NEAR(*pearson(VectorXd{{1, 2, 3}}, VectorXd{{2, 1, 3}}), 0.5, 1e-12);
  EXPECT_FALSE(pearson(VectorXd{{1, 1, 1}}, VectorXd{{2, 1, 3}}));

  // phi = 3*value - 1 exactly for column 0; column 1 is binary and the target
  // is independent of it by construction.
  const int n = 400;
  MatrixXd X(n, 2);
  VectorXd y(n);
  ShapResult r;
  r.group_names = {"v", "flag"};
  r.phi.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = std::sin(0.37 * i);
    X(i, 1) = i % 2;
    y[i] = std::cos(0.11 * (i / 2));  // same sequence in both flag groups
    r.phi(i, 0) = 3 * X(i, 0) - 1;
    r.phi(i, 1) = 0.0;
  }
  const auto rows = value_shap_correlations(r, X, y, Groups::singletons(2), {"v", "flag"});
  EXPECT_NEAR(*rows[0].r_value_shap, 1.0, 1e-12);
  EXPECT_EQ(rows[0].kind, CorrKind::pearson);
  EXPECT_EQ(rows[1].kind, CorrKind::point_biserial);
  EXPECT_FALSE(rows[1].r_value_shap);  // constant attribution
  EXPECT_LT(std::abs(*rows[1].r_value_target), 3.0 / std::sqrt(double(n)));
  EXPECT_NE(correlations_csv(rows).find("flag,NA,"), std::string::npos);
  EXPECT_THROW(value_shap_correlations(r, X.topRows(2), y.head(2), Groups::singletons(2), {"v", "flag"}),
               InvalidArgument);
}

TEST(Groups, OneHotFamiliesAreAtomic) {
  const std::vector<std::string> names{"chat_send", "weather_label_clear", "temp", "weather_label_rain",
                                       "loc_home_prob", "loc_work_prob", "missing", "connectivity_fraction"};
  const auto g = family_groups(names);
  ASSERT_EQ(g.size(), 6u);
  EXPECT_EQ(g.names[1], "weather_label");
  EXPECT_EQ(g.members[1], (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(g.names[3], "location_category");
  EXPECT_EQ(g.members[3], (std::vector<std::size_t>{4, 5}));
  EXPECT_NO_THROW(g.validate(names.size()));
}

TEST(Stratified, ProportionalAllocation) {
  std::vector<int> strata;
  for (int i = 0; i < 1000; ++i) strata.push_back(i < 700 ? 0 : 1);
  const auto idx = stratified_sample(strata, 100, 5);
  ASSERT_EQ(idx.size(), 100u);
  EXPECT_EQ(std::count_if(idx.begin(), idx.end(), [](std::size_t i) { return i < 700; }), 70);
  EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
  EXPECT_EQ(std::adjacent_find(idx.begin(), idx.end()), idx.end());
  EXPECT_EQ(idx, stratified_sample(strata, 100, 5));
}

TEST(Planted, ConnectivityRanksInTopThreeForDenseAllFeatureModel) {
  synthgen::SynthConfig sc;
  sc.n_users = 300;
  sc.span_days = 14;
  sc.n_zips = 30;
  const auto cohort = synthgen::generate_cohort(sc.n_users, sc.seed, sc);
  const auto tables = synthgen::generate_context_tables(sc.n_zips, sc.span_days * 24, sc.seed, sc);
  const auto log = synthgen::simulate(cohort, tables, sc.span_days, sc.seed, sc);
  const auto bundle = pipeline::prepare(log, tables, {});

  bench::BenchConfig cfg;
  cfg.focal = {3000, 600, 400};
  cfg.seq_len = 1;
  const auto data = bench::BenchData::build(bundle, cfg);
  const auto plan = bench::model_plan(9, cfg);
  const auto in = bench::input_spec(plan, bundle.schema);
  const bench::InputView tr(data.train, in), va(data.validation, in), te(data.test, in);
  nnet::NetworkSpec spec = tuner::Config{{64}, 32, 0.0, 0.0, 0.001}.apply(cfg.base);
  spec.kind = NetKind::dense;
  spec.max_epochs = 30;
  spec.batch_size = 128;
  spec.seed = 4;
  const auto model = nnet::train(spec, tr, va);

  const auto cols = input_columns(in, bundle.schema);
  const auto groups = family_groups(cols.names);
  std::vector<std::size_t> all(tr.size());
  std::iota(all.begin(), all.end(), 0);
  const auto [Xtr, ytr] = dense_rows(tr, all);
  const auto conn = std::find(cols.names.begin(), cols.names.end(), "connectivity_fraction") - cols.names.begin();
  std::vector<int> strata(static_cast<std::size_t>(Xtr.rows()));
  for (Eigen::Index i = 0; i < Xtr.rows(); ++i) strata[static_cast<std::size_t>(i)] = Xtr(i, conn) > Xtr.col(conn).mean();
  const auto bg_idx = stratified_sample(strata, 100, 1);
  ShapConfig sh;
  sh.background.resize(static_cast<Eigen::Index>(bg_idx.size()), Xtr.cols());
  for (std::size_t i = 0; i < bg_idx.size(); ++i) sh.background.row(static_cast<Eigen::Index>(i)) = Xtr.row(static_cast<Eigen::Index>(bg_idx[i]));
  sh.groups = groups;
  sh.n_permutations = 20;
  sh.seed = 3;
  std::vector<std::size_t> test_idx(100);
  std::iota(test_idx.begin(), test_idx.end(), 0);
  const auto [Xte, yte] = dense_rows(te, test_idx);
  const auto res = explain_samples(model_function(model), Xte, sh);
  const auto ranking = importance_summary(res);
  std::size_t rank = ranking.size();
  for (std::size_t i = 0; i < ranking.size(); ++i)
    if (ranking[i].group == "connectivity_fraction") rank = i;
  EXPECT_LT(rank, 3u) << "top group " << ranking[0].group;
  const auto svg = importance_svg(ranking);
  EXPECT_NE(svg.find("connectivity_fraction"), std::string::npos);
}
