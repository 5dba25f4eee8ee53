#include <set>

#include <gtest/gtest.h>

#include "ctxeng/bench/report.hpp"
#include "ctxeng/bench/suite.hpp"
#include "ctxeng/synthgen/generator.hpp"

using namespace ctxeng;
using namespace ctxeng::bench;
using pipeline::Bracket;

namespace {

const pipeline::FeatureMatrixBundle& small_bundle() {
  static const pipeline::FeatureMatrixBundle b = [] {
    synthgen::SynthConfig sc;
    sc.n_users = 300;
    sc.span_days = 14;
    sc.n_zips = 30;
    const auto cohort = synthgen::generate_cohort(sc.n_users, sc.seed, sc);
    const auto tables = synthgen::generate_context_tables(sc.n_zips, sc.span_days * 24, sc.seed, sc);
    const auto log = synthgen::simulate(cohort, tables, sc.span_days, sc.seed, sc);
    return pipeline::prepare(log, tables, {});
  }();
  return b;
}

BenchConfig tiny_config() {
  BenchConfig c;
  c.repetitions = 2;
  c.hpo_trials = 3;
  c.seq_len = 5;
  c.focal = {600, 200, 400};
  c.hpo_train_focal = 300;
  c.hpo_max_epochs = 3;
  c.base.max_epochs = 6;
  c.base.batch_size = 64;
  c.record_time = false;
  return c;
}

std::vector<std::size_t> bracket_cols(const pipeline::FeatureSchema& s, std::initializer_list<Bracket> bs) {
  std::vector<std::size_t> v;
  for (std::size_t c = 0; c < s.size(); ++c)
    for (Bracket b : bs)
      if (s.columns[c].bracket == b) v.push_back(c);
  return v;
}

}  // namespace

TEST(Brackets, PartitionTheManifest) {
  const auto& s = small_bundle().schema;
  std::set<std::size_t> seen;
  std::size_t total = 0;
  for (Bracket b : pipeline::kAllBrackets) {
    const auto idx = s.indices(b);
    total += idx.size();
    seen.insert(idx.begin(), idx.end());
  }
  EXPECT_EQ(total, s.size());
  EXPECT_EQ(seen.size(), s.size());
  EXPECT_EQ(s.indices(Bracket::behavioral).size(), 127u);
}

TEST(Plans, InputShapesPerModel) {
  const auto& s = small_bundle().schema;
  const auto cfg = BenchConfig{};
  const std::size_t beh = 127, ctx = s.size() - 127;
  for (int id = 1; id <= 7; ++id) {
    const auto p = model_plan(id, cfg);
    const auto in = input_spec(p, s);
    EXPECT_EQ(p.arch, NetKind::recurrent);
    std::size_t n_ctx = 0;
    for (Bracket b : p.context) n_ctx += s.count(b);
    EXPECT_EQ(in.columns.size(), beh + n_ctx) << id;
    EXPECT_EQ(in.momentary.size(), n_ctx) << id;
    EXPECT_EQ(in.steps(), 25 + (n_ctx > 0 ? 1 : 0)) << id;
  }
  EXPECT_EQ(input_spec(model_plan(7, cfg), s).columns.size(), s.size());
  const auto m8 = input_spec(model_plan(8, cfg), s), m9 = input_spec(model_plan(9, cfg), s);
  EXPECT_EQ(m8.input_dim(), 127);
  EXPECT_EQ(m8.steps(), 1);
  EXPECT_EQ(m9.input_dim(), static_cast<int>(beh + ctx));
  EXPECT_EQ(m9.input_dim(), 182);

  auto off = cfg;
  off.momentary_context = false;
  EXPECT_TRUE(input_spec(model_plan(6, off), s).momentary.empty());
}

TEST(Plans, UnknownNamesRejected) {
  EXPECT_THROW(model_plan(10, {}), InvalidArgument);
  EXPECT_THROW(custom_plan(11, NetKind::recurrent, {"behavioral", "gps"}, {}), InvalidArgument);
  const auto p = custom_plan(11, NetKind::recurrent, {"behavioral", "weather"}, {});
  EXPECT_TRUE(p.includes(Bracket::weather));
  EXPECT_FALSE(p.includes(Bracket::census));
}

TEST(Inputs, RecurrentBatchMatchesSequenceSamples) {
  const auto& b = small_bundle();
  pipeline::SequenceOptions so;
  so.max_len = 6;
  so.include_momentary_context = true;
  so.max_focal = 50;
  const pipeline::SequenceSet set(&b, pipeline::Split::train, so);
  auto p = model_plan(7, BenchConfig{});
  p.history_len = 6;
  const InputView view(set, input_spec(p, b.schema));
  std::vector<std::size_t> idx(set.size());
  std::iota(idx.begin(), idx.end(), 0);
  nnet::Batch<float> batch;
  view.fill(idx, batch);
  const int B = static_cast<int>(idx.size());
  const std::size_t d = b.cols();
  ASSERT_EQ(batch.features, static_cast<int>(d));  // Model 7 uses every column, in order
  for (int s = 0; s < B; ++s) {
    const auto smp = set.sample(static_cast<std::size_t>(s));
    for (int t = 0; t < 6; ++t) {
      EXPECT_EQ(batch.mask(t, s), smp.mask[static_cast<std::size_t>(t)]);
      for (std::size_t c = 0; c < d; ++c)
        ASSERT_EQ(batch.x(t * B + s, static_cast<Eigen::Index>(c)), smp.history[static_cast<std::size_t>(t) * d + c]);
    }
    EXPECT_EQ(batch.mask(6, s), 1.0f);
    for (std::size_t c = 0; c < d; ++c) ASSERT_EQ(batch.x(6 * B + s, static_cast<Eigen::Index>(c)), (*smp.momentary)[c]);
    EXPECT_FLOAT_EQ(batch.y[s], static_cast<float>(smp.target));
  }
}

TEST(Inputs, DenseRowsAndZeroing) {
  const auto& b = small_bundle();
  pipeline::SequenceOptions so;
  so.max_focal = 20;
  const pipeline::SequenceSet set(&b, pipeline::Split::test, so);
  InputSpec in = input_spec(model_plan(9, BenchConfig{}), b.schema);
  const auto beh = bracket_cols(b.schema, {Bracket::behavioral});
  const auto ctx = bracket_cols(b.schema, {Bracket::census, Bracket::weather, Bracket::temporal, Bracket::location,
                                           Bracket::connectivity});
  nnet::Batch<float> batch;
  std::vector<std::size_t> idx{0, 5, 19};
  InputView(set, in).fill(idx, batch);
  for (int s = 0; s < 3; ++s) {
    const std::size_t r = set.focal_row(idx[static_cast<std::size_t>(s)]);
    for (std::size_t k = 0; k < beh.size(); ++k) ASSERT_EQ(batch.x(s, static_cast<Eigen::Index>(k)), b.row(r - 1)[beh[k]]);
    for (std::size_t k = 0; k < ctx.size(); ++k)
      ASSERT_EQ(batch.x(s, static_cast<Eigen::Index>(beh.size() + k)), b.row(r)[ctx[k]]);
  }
  in.zeroed = {0, 130};
  InputView(set, in).fill(idx, batch);
  for (int s = 0; s < 3; ++s) {
    EXPECT_EQ(batch.x(s, 0), 0.0f);
    EXPECT_EQ(batch.x(s, 130), 0.0f);
  }
}

TEST(Aggregate, MeanAndSampleSd) {
  const auto a = aggregate({1.0, 2.0, 4.0});
  EXPECT_DOUBLE_EQ(a.mean, 7.0 / 3.0);
  const double m = 7.0 / 3.0;
  EXPECT_NEAR(*a.sd, std::sqrt(((1 - m) * (1 - m) + (2 - m) * (2 - m) + (4 - m) * (4 - m)) / 2.0), 1e-15);
  EXPECT_FALSE(aggregate({0.3}).sd.has_value());
}

TEST(Suite, SingleRepetitionLeavesSdEmptyAndReportHasSi5Shape) {
  auto cfg = tiny_config();
  cfg.repetitions = 1;
  cfg.hpo_trials = 0;
  const auto data = BenchData::build(small_bundle(), cfg);
  const auto rep = run_model_suite(plans_for({8, 1}, cfg), data, cfg);
  ASSERT_EQ(rep.models.size(), 2u);
  EXPECT_EQ(rep.models[0].plan.model_id, 1);  // ordered by id
  const std::string csv = report_csv(rep);
  std::istringstream in(csv);
  std::string header, row1, row8;
  std::getline(in, header);
  std::getline(in, row1);
  std::getline(in, row8);
  EXPECT_EQ(header, kReportHeader);
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), 11);
  EXPECT_NE(row1.find("1,LSTM,Baseline (no context),X,,,,,,"), std::string::npos) << row1;
  EXPECT_NE(row1.find(",,0.345 (0.0006)"), std::string::npos) << row1;  // empty sd, then anchor
  EXPECT_NE(row8.find("8,Dense,Baseline,X,"), std::string::npos) << row8;
  EXPECT_NE(row8.find("0.256 (0.005)"), std::string::npos);
}

TEST(Suite, SameSeedsGiveIdenticalReports) {
  const auto cfg = tiny_config();
  const auto data = BenchData::build(small_bundle(), cfg);
  const auto a = run_model_suite(plans_for({1, 9}, cfg), data, cfg);
  const auto b = run_model_suite(plans_for({1, 9}, cfg), data, cfg);
  EXPECT_EQ(report_csv(a), report_csv(b));
  EXPECT_EQ(runs_csv(a), runs_csv(b));
  EXPECT_EQ(report_json(a, false).dump(), report_json(b, false).dump());
  ASSERT_EQ(a.models[0].hpo_history.size(), 3u);
  ASSERT_EQ(a.models[0].reps.size(), 2u);

  auto par = cfg;
  par.jobs = 2;
  const auto c = run_model_suite(plans_for({1, 9}, par), data, par);
  EXPECT_EQ(runs_csv(a), runs_csv(c));
}

TEST(Suite, ContextModelBeatsBaselineOnPlantedData) {
  auto cfg = tiny_config();
  cfg.hpo_trials = 0;
  cfg.base.layer_dims = {16};
  cfg.base.top_dim = 16;
  cfg.base.learning_rate = 0.01;
  cfg.base.max_epochs = 30;
  cfg.focal = {2000, 500, 1500};
  const auto data = BenchData::build(small_bundle(), cfg);
  const auto rep = run_model_suite(plans_for({1, 7, 8, 9}, cfg), data, cfg);
  EXPECT_GT(rep.models[1].r2().mean, rep.models[0].r2().mean + 0.05);
  EXPECT_GT(rep.models[3].r2().mean, rep.models[2].r2().mean + 0.05);
}

TEST(Sweep, SingleLengthHasFractionOne) {
  auto cfg = tiny_config();
  const auto data = BenchData::build(small_bundle(), cfg);
  const auto c = sweep_sequence_length({1}, "behavioral", data, cfg, default_config(cfg));
  ASSERT_EQ(c.points.size(), 1u);
  EXPECT_EQ(c.points[0].fraction_of_max, 1.0);
  EXPECT_THROW(sweep_sequence_length({}, "behavioral", data, cfg, default_config(cfg)), InvalidArgument);
  EXPECT_THROW(sweep_sequence_length({0}, "behavioral", data, cfg, default_config(cfg)), InvalidArgument);
  const std::string csv = sweep_csv({c});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kSweepHeader);
}

TEST(Sweep, ChannelInputs) {
  const auto& s = small_bundle().schema;
  const auto beh = sweep_input("behavioral", 7, s);
  EXPECT_EQ(beh.columns.size(), 127u);
  EXPECT_TRUE(beh.momentary.empty());
  EXPECT_EQ(beh.steps(), 7);
  const auto ctx = sweep_input("context", 7, s);
  EXPECT_EQ(ctx.columns.size(), s.size() - 127);
  EXPECT_EQ(ctx.momentary.size(), ctx.columns.size());
  EXPECT_EQ(ctx.steps(), 8);
  EXPECT_THROW(sweep_input("gps", 1, s), InvalidArgument);
}

TEST(Zeroing, DeadContextInputsScoreLikeModel8) {
  auto cfg = tiny_config();
  cfg.hpo_trials = 0;
  cfg.repetitions = 3;
  cfg.base.max_epochs = 20;
  cfg.focal = {1500, 400, 1000};
  const auto data = BenchData::build(small_bundle(), cfg);
  const auto rep = run_cross_sectional(data, cfg);
  const auto z = zeroing_diagnostic(rep.models[0], rep.models[1], data, cfg);
  EXPECT_EQ(z.model8.mean, rep.models[0].r2().mean);
  EXPECT_LT(std::abs(z.zeroed.mean - z.model8.mean), 0.02);
  EXPECT_GT(rep.models[1].r2().mean, z.zeroed.mean + 0.05);
}

TEST(Config, ValidationAndPaperScale) {
  BenchConfig c;
  EXPECT_NO_THROW(c.validate());
  c.sweep_lengths = {0};
  EXPECT_THROW(c.validate(), InvalidArgument);
  const auto p = BenchConfig::paper_scale();
  EXPECT_EQ(p.repetitions, 10);
  EXPECT_EQ(p.hpo_trials, 100);
  EXPECT_EQ(p.seq_len, 100);
  EXPECT_EQ(p.base.batch_size, 2048);
  EXPECT_EQ(p.space, "full");
}
