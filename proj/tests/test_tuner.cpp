#include <cmath>
#include <filesystem>
#include <set>

#include <gtest/gtest.h>

#include "ctxeng/tuner/benchmark_surface.hpp"
#include "ctxeng/tuner/search.hpp"

using namespace ctxeng;
using namespace ctxeng::tuner;

namespace {

SearchSpace lr_only() {
  SearchSpace s;
  s.depths = {1};
  s.layer_dims = {32};
  s.top_dims = {32};
  s.dropouts = {0.0};
  s.recurrent_dropouts = {0.0};
  s.learning_rates = {0.01, 0.001, 0.0001};
  return s;
}

bool tapered(const Config& c) {
  for (std::size_t i = 1; i < c.layer_dims.size(); ++i)
    if (c.layer_dims[i] > c.layer_dims[i - 1]) return false;
  return true;
}

}  // namespace

TEST(Space, FullGridSizeMatchesBruteForce) {
  // Count non-increasing width sequences by brute force over all 4^k tuples.
  const int widths[] = {32, 64, 128, 256};
  std::size_t seqs = 0;
  for (int k = 1; k <= 4; ++k) {
    std::size_t total = 1;
    for (int i = 0; i < k; ++i) total *= 4;
    for (std::size_t code = 0; code < total; ++code) {
      std::size_t c = code;
      int prev = 1 << 30;
      bool ok = true;
      for (int i = 0; i < k; ++i) {
        const int w = widths[c % 4];
        c /= 4;
        ok = ok && w <= prev;
        prev = w;
      }
      seqs += ok;
    }
  }
  EXPECT_EQ(seqs, 69u);
  const auto grid = SearchSpace::full(NetKind::recurrent).enumerate();
  EXPECT_EQ(grid.size(), seqs * 3 * 7 * 7 * 3);
  EXPECT_EQ(SearchSpace::full(NetKind::dense).enumerate().size(), seqs * 3 * 7 * 3);
  std::set<std::string> keys;
  for (const auto& c : grid) {
    EXPECT_TRUE(tapered(c));
    keys.insert(c.key());
  }
  EXPECT_EQ(keys.size(), grid.size());
}

TEST(Space, MembershipAndSpecs) {
  const auto s = SearchSpace::full(NetKind::recurrent);
  EXPECT_TRUE(s.contains({{128, 64}, 32, 0.1, 0.2, 0.001}));
  EXPECT_FALSE(s.contains({{64, 128}, 32, 0.1, 0.2, 0.001}));  // widening
  EXPECT_FALSE(s.contains({{64}, 48, 0.1, 0.2, 0.001}));
  EXPECT_FALSE(s.contains({{64, 64, 64, 64, 64}, 32, 0.1, 0.2, 0.001}));
  for (const auto& c : SearchSpace::desk(NetKind::recurrent).enumerate())
    EXPECT_NO_THROW(c.apply(nnet::NetworkSpec{}).validate());
  EXPECT_EQ(benchmark_space().enumerate().size(), 288u);
}

TEST(Propose, EmptyHistoryGivesValidConfig) {
  const auto s = SearchSpace::full(NetKind::recurrent);
  const auto c = propose_next({}, s, 5);
  ASSERT_TRUE(c);
  EXPECT_TRUE(s.contains(*c));
}

TEST(Propose, LastUntriedConfigurationIsProposed) {
  const auto s = lr_only();
  std::vector<Trial> h(2);
  h[0].config = {{32}, 32, 0.0, 0.0, 0.01};
  h[0].objective = 1.0;
  h[1].config = {{32}, 32, 0.0, 0.0, 0.0001};
  h[1].objective = 2.0;
  h[1].index = 1;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto c = propose_next(h, s, seed);
    ASSERT_TRUE(c);
    EXPECT_EQ(c->learning_rate, 0.001);
  }
  h.push_back({2, *propose_next(h, s, 0), 1.5});
  EXPECT_FALSE(propose_next(h, s, 0));
}

TEST(Propose, DeterministicInHistoryAndSeed) {
  const auto s = benchmark_space();
  std::vector<Trial> h;
  for (int i = 0; i < 6; ++i) {
    const auto c = *propose_next(h, s, 17);
    h.push_back({static_cast<std::size_t>(i), c, benchmark_objective(c)});
  }
  EXPECT_EQ(propose_next(h, s, 17)->key(), propose_next(h, s, 17)->key());
}

TEST(Propose, PendingConfigurationsAreMaskedOut) {
  const auto s = lr_only();
  const std::vector<Config> pending{{{32}, 32, 0.0, 0.0, 0.01}, {{32}, 32, 0.0, 0.0, 0.001}};
  const auto c = propose_next({}, s, 1, {}, pending);
  ASSERT_TRUE(c);
  EXPECT_EQ(c->learning_rate, 0.0001);
}

TEST(Search, SmallSpaceIsExhaustedExactly) {
  auto s = lr_only();
  s.learning_rates = {0.1, 0.01, 0.001, 0.0001, 0.00001};
  ASSERT_EQ(s.enumerate().size(), 5u);
  SearchOptions o;
  o.n_iter = 100;
  o.record_time = false;
  const auto r = run_search(s, [](const Config& c, std::uint64_t) { return std::abs(std::log10(c.learning_rate) + 3); }, o);
  EXPECT_EQ(r.history.size(), 5u);
  std::set<std::string> keys;
  for (const auto& t : r.history) keys.insert(t.config.key());
  EXPECT_EQ(keys.size(), 5u);
  EXPECT_EQ(r.best_trial().config.learning_rate, 0.001);
}

TEST(Search, LearningRateSanityTask) {
  const auto s = SearchSpace::desk(NetKind::recurrent);
  SearchOptions o;
  o.n_iter = 20;
  o.seed = 3;
  o.record_time = false;
  const auto r = run_search(
      s, [](const Config& c, std::uint64_t) { return (c.learning_rate - 0.001) * (c.learning_rate - 0.001); }, o);
  EXPECT_EQ(r.best_trial().config.learning_rate, 0.001);
}

TEST(Search, FullBudgetFindsGlobalOptimum) {
  const auto s = benchmark_space();
  SearchOptions o;
  o.n_iter = 288;
  o.record_time = false;
  const auto r = run_search(s, [](const Config& c, std::uint64_t) { return benchmark_objective(c); }, o);
  EXPECT_EQ(r.history.size(), 288u);
  EXPECT_EQ(r.best_trial().objective, benchmark_sorted_values().front());
  std::set<std::string> keys;
  for (const auto& t : r.history) {
    EXPECT_TRUE(s.contains(t.config));
    keys.insert(t.config.key());
  }
  EXPECT_EQ(keys.size(), 288u);
}

TEST(Search, TiesGoToEarlierTrial) {
  const auto s = lr_only();
  SearchOptions o;
  o.n_iter = 3;
  o.record_time = false;
  const auto r = run_search(s, [](const Config&, std::uint64_t) { return 1.0; }, o);
  EXPECT_EQ(*r.best, 0u);
}

TEST(Search, DivergentTrialsAreMarkedFailedAndSearchContinues) {
  const auto s = benchmark_space();
  SearchOptions o;
  o.n_iter = 30;
  o.seed = 2;
  o.record_time = false;
  const auto r = run_search(
      s,
      [](const Config& c, std::uint64_t) {
        if (c.learning_rate == 0.01) throw DivergenceError("nan loss");
        return benchmark_objective(c);
      },
      o);
  EXPECT_EQ(r.history.size(), 30u);
  int failed = 0;
  for (const auto& t : r.history)
    if (t.status == TrialStatus::failed) {
      ++failed;
      EXPECT_TRUE(std::isinf(t.objective));
    }
  EXPECT_GT(failed, 0);
  EXPECT_NE(r.best_trial().config.learning_rate, 0.01);
}

TEST(Search, BenchmarkSurfaceTopFivePercent) {
  const auto sorted = benchmark_sorted_values();
  const double cutoff = sorted[static_cast<std::size_t>(0.05 * 288) - 1];  // 14th best
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SearchOptions o;
    o.n_iter = 60;
    o.seed = seed;
    o.record_time = false;
    const auto r = run_search(benchmark_space(), [](const Config& c, std::uint64_t) { return benchmark_objective(c); }, o);
    ok += r.best_trial().objective <= cutoff;
  }
  EXPECT_GE(ok, 18);
}

TEST(Search, ResumeFromHistoryMatchesUninterruptedRun) {
  const auto dir = std::filesystem::temp_directory_path() / "ctxeng_tuner_resume";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "trials.jsonl").string();
  std::filesystem::remove(path);
  auto f = [](const Config& c, std::uint64_t) { return benchmark_objective(c); };
  SearchOptions o;
  o.seed = 8;
  o.record_time = false;
  o.n_iter = 25;
  const auto full = run_search(benchmark_space(), f, o);
  o.history_path = path;
  o.n_iter = 10;
  run_search(benchmark_space(), f, o);
  o.n_iter = 25;
  const auto resumed = run_search(benchmark_space(), f, o);
  ASSERT_EQ(resumed.history.size(), 25u);
  for (std::size_t i = 0; i < 25; ++i) EXPECT_EQ(resumed.history[i].config, full.history[i].config) << i;
  EXPECT_EQ(read_history(path, benchmark_space()).size(), 25u);
}

TEST(Surrogate, ForestFitsASeparableFunction) {
  std::vector<std::vector<double>> X;
  std::vector<double> y;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int r = 0; r < 5; ++r) {
        X.push_back({double(a), double(b)});
        y.push_back(3.0 * a + b);
      }
  RandomForest f;
  Rng rng = make_rng(1, 2);
  f.fit(X, y, {50, 8, 1, 1.0}, rng);
  EXPECT_NEAR(f.predict({1, 1}).first, 4.0, 0.3);
  EXPECT_NEAR(f.predict({0, 0}).first, 0.0, 0.3);
}

TEST(Surrogate, ExpectedImprovement) {
  EXPECT_DOUBLE_EQ(expected_improvement(1.0, 0.0, 2.0), 1.0);
  EXPECT_DOUBLE_EQ(expected_improvement(3.0, 0.0, 2.0), 0.0);
  // mu == best: EI = sigma * phi(0).
  EXPECT_NEAR(expected_improvement(2.0, 0.5, 2.0), 0.5 / std::sqrt(2.0 * M_PI), 1e-15);
}
