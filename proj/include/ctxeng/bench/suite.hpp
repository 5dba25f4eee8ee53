#pragma once

// Model suite, sequence-length sweep and cross-sectional models.

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ctxeng/bench/inputs.hpp"
#include "ctxeng/bench/plans.hpp"
#include "ctxeng/nnet/train.hpp"
#include "ctxeng/tuner/search.hpp"

namespace ctxeng::bench {

struct BenchData {
  const pipeline::FeatureMatrixBundle* bundle = nullptr;
  pipeline::SequenceSet train, validation, test, hpo_train;

  static BenchData build(const pipeline::FeatureMatrixBundle& b, const BenchConfig& cfg) {
    pipeline::SequenceOptions opt;
    opt.seed = cfg.seed;
    BenchData d;
    d.bundle = &b;
    opt.max_focal = cfg.focal.train;
    d.train = pipeline::SequenceSet(&b, pipeline::Split::train, opt);
    opt.max_focal = cfg.focal.validation;
    d.validation = pipeline::SequenceSet(&b, pipeline::Split::validation, opt);
    opt.max_focal = cfg.focal.test;
    d.test = pipeline::SequenceSet(&b, pipeline::Split::test, opt);
    // Same shuffle, shorter prefix: a subset of the training focal hours.
    opt.max_focal = cfg.hpo_train_focal > 0 && (cfg.focal.train == 0 || cfg.hpo_train_focal < cfg.focal.train)
                        ? cfg.hpo_train_focal
                        : cfg.focal.train;
    d.hpo_train = pipeline::SequenceSet(&b, pipeline::Split::train, opt);
    if (d.train.size() == 0 || d.validation.size() == 0 || d.test.size() == 0)
      throw InvalidArgument("bench: every split needs at least one focal hour");
    return d;
  }
};

struct RepetitionResult {
  int repetition = 0;
  std::uint64_t seed = 0;
  nnet::Metrics test;
  int best_epoch = 0;
  int stopped_epoch = 0;
  double wall_time_s = 0.0;
};

struct Aggregate {
  double mean = 0.0;
  std::optional<double> sd;  // sample sd; empty for a single repetition
};

inline Aggregate aggregate(const std::vector<double>& v) {
  Aggregate a;
  if (v.empty()) return a;
  for (double x : v) a.mean += x;
  a.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - a.mean) * (x - a.mean);
    a.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return a;
}

struct ModelResult {
  ExperimentPlan plan;
  tuner::Config hyperparameters;
  std::vector<tuner::Trial> hpo_history;
  std::vector<RepetitionResult> reps;

  Aggregate r2() const {
    std::vector<double> v;
    for (const auto& r : reps) v.push_back(r.test.r2);
    return aggregate(v);
  }
  Aggregate rmse() const {
    std::vector<double> v;
    for (const auto& r : reps) v.push_back(r.test.rmse);
    return aggregate(v);
  }
};

using Logger = std::function<void(const std::string&)>;

inline tuner::SearchSpace search_space(NetKind kind, const BenchConfig& cfg) {
  return cfg.space == "full" ? tuner::SearchSpace::full(kind) : tuner::SearchSpace::desk(kind);
}

inline tuner::Config default_config(const BenchConfig& cfg) { return tuner::Config::from_spec(cfg.base); }

/// Hyperparameter search on an input layout, scored by the best validation RMSE.
inline std::pair<tuner::Config, std::vector<tuner::Trial>> tune_input(const InputSpec& in, const std::string& label,
                                                                      std::uint64_t stream, int trials,
                                                                      const BenchData& data, const BenchConfig& cfg,
                                                                      const std::string& history_path = "",
                                                                      const Logger& log = {}) {
  if (trials == 0) return {default_config(cfg), {}};
  const InputView tr(data.hpo_train, in), va(data.validation, in);
  const std::string fp = data.bundle->schema.fingerprint();
  tuner::SearchOptions so;
  so.n_init = cfg.hpo_init;
  so.n_iter = trials;
  so.seed = substream_seed(cfg.seed, stream);
  so.history_path = history_path;
  so.record_time = cfg.record_time;
  if (log)
    so.on_trial = [&](const tuner::Trial& t) {
      log(label + " trial " + std::to_string(t.index + 1) + "/" + std::to_string(trials) + " " + t.config.key() +
          " rmse=" + (std::isfinite(t.objective) ? std::to_string(t.objective) : std::string("failed")));
    };
  const auto res = tuner::run_search(
      search_space(in.arch, cfg),
      [&](const tuner::Config& c, std::uint64_t seed) {
        nnet::NetworkSpec spec = c.apply(cfg.base);
        spec.kind = in.arch;
        spec.seed = seed;
        spec.max_epochs = std::min(cfg.hpo_max_epochs, cfg.base.max_epochs);
        nnet::TrainOptions to;
        to.schema_fingerprint = fp;
        const auto m = nnet::train(spec, tr, va, to);
        double best = std::numeric_limits<double>::infinity();
        for (const auto& e : m.trace) best = std::min(best, e.validation_rmse);
        return best;
      },
      so);
  return {res.best_trial().config, res.history};
}

inline std::pair<tuner::Config, std::vector<tuner::Trial>> tune_plan(const ExperimentPlan& plan, const BenchData& data,
                                                                     const BenchConfig& cfg,
                                                                     const std::string& history_path = "",
                                                                     const Logger& log = {}) {
  return tune_input(input_spec(plan, data.bundle->schema), "model " + std::to_string(plan.model_id),
                    0x4f0 + static_cast<std::uint64_t>(plan.model_id), plan.hpo_trials, data, cfg, history_path, log);
}

inline std::uint64_t repetition_seed(const BenchConfig& cfg, std::uint64_t stream, int rep) {
  return substream_seed(cfg.seed, stream, static_cast<std::uint64_t>(rep));
}

/// Train on the training split, select on validation, score on test.
inline RepetitionResult fit_and_score(const nnet::NetworkSpec& spec, const InputSpec& in, const BenchData& data,
                                      int rep) {
  const auto t0 = std::chrono::steady_clock::now();
  const InputView tr(data.train, in), va(data.validation, in), te(data.test, in);
  nnet::TrainOptions to;
  to.schema_fingerprint = data.bundle->schema.fingerprint();
  const auto m = nnet::train(spec, tr, va, to);
  RepetitionResult r;
  r.repetition = rep;
  r.seed = spec.seed;
  r.test = nnet::evaluate(m, te);
  r.best_epoch = m.best_epoch;
  r.stopped_epoch = m.stopped_epoch;
  r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline std::vector<RepetitionResult> run_repetitions(const nnet::NetworkSpec& base_spec, const InputSpec& in,
                                                     const BenchData& data, const BenchConfig& cfg,
                                                     std::uint64_t stream, int reps) {
  std::vector<RepetitionResult> out(static_cast<std::size_t>(reps));
  parallel_for(cfg.jobs, out.size(), [&](std::size_t i) {
    nnet::NetworkSpec spec = base_spec;
    spec.seed = repetition_seed(cfg, stream, static_cast<int>(i));
    out[i] = fit_and_score(spec, in, data, static_cast<int>(i));
    if (!cfg.record_time) out[i].wall_time_s = 0.0;
  });
  return out;
}

/// Fresh search (unless hyperparameters are given), then repeated fits.
inline ModelResult run_model(const ExperimentPlan& plan, const BenchData& data, const BenchConfig& cfg,
                             const std::optional<tuner::Config>& fixed = std::nullopt,
                             const std::string& history_path = "", const Logger& log = {}) {
  ModelResult res;
  res.plan = plan;
  if (fixed) {
    res.hyperparameters = *fixed;
  } else {
    auto [best, hist] = tune_plan(plan, data, cfg, history_path, log);
    res.hyperparameters = best;
    res.hpo_history = std::move(hist);
  }
  nnet::NetworkSpec spec = res.hyperparameters.apply(cfg.base);
  spec.kind = plan.arch;
  res.reps = run_repetitions(spec, input_spec(plan, data.bundle->schema), data, cfg,
                             0xbe9c00 + static_cast<std::uint64_t>(plan.model_id), plan.repetitions);
  if (log) {
    const auto a = res.r2();
    log("model " + std::to_string(plan.model_id) + " " + res.hyperparameters.key() + " r2 mean " +
        std::to_string(a.mean) + (a.sd ? " sd " + std::to_string(*a.sd) : ""));
  }
  return res;
}

struct RunReport {
  BenchConfig config;
  std::string schema_fingerprint;
  std::vector<ModelResult> models;  // ordered by model id
};

inline RunReport run_model_suite(const std::vector<ExperimentPlan>& plans, const BenchData& data,
                                 const BenchConfig& cfg, const std::string& history_dir = "",
                                 const Logger& log = {}) {
  cfg.validate();
  RunReport rep;
  rep.config = cfg;
  rep.schema_fingerprint = data.bundle->schema.fingerprint();
  for (const auto& p : plans) {
    const std::string hp =
        history_dir.empty() ? "" : history_dir + "/hpo_model" + std::to_string(p.model_id) + ".jsonl";
    rep.models.push_back(run_model(p, data, cfg, std::nullopt, hp, log));
  }
  std::sort(rep.models.begin(), rep.models.end(),
            [](const ModelResult& a, const ModelResult& b) { return a.plan.model_id < b.plan.model_id; });
  return rep;
}

inline std::vector<ExperimentPlan> plans_for(const std::vector<int>& ids, const BenchConfig& cfg) {
  std::vector<ExperimentPlan> out;
  for (int id : ids) out.push_back(model_plan(id, cfg));
  return out;
}

/// Models 8 and 9.
inline RunReport run_cross_sectional(const BenchData& data, const BenchConfig& cfg, const std::string& history_dir = "",
                                     const Logger& log = {}) {
  return run_model_suite(plans_for({8, 9}, cfg), data, cfg, history_dir, log);
}

// ---------------------------------------------------------------------------
// Sequence-length sweep

struct SweepPoint {
  int length = 0;
  std::vector<double> r2;
  Aggregate agg;
  double fraction_of_max = 0.0;
};

struct SweepCurve {
  std::string channel;
  tuner::Config hyperparameters;
  std::vector<SweepPoint> points;
};

/// Input for a sweep channel: behavioral history ending at t-1, or context
/// history plus the t0 context step.
inline InputSpec sweep_input(const std::string& channel, int length, const pipeline::FeatureSchema& schema) {
  InputSpec s;
  s.history_len = length;
  for (std::size_t c = 0; c < schema.size(); ++c) {
    const bool beh = schema.columns[c].bracket == Bracket::behavioral;
    if (channel == "behavioral" ? beh : !beh) s.columns.push_back(c);
  }
  if (channel == "context") s.momentary = s.columns;
  else if (channel != "behavioral") throw InvalidArgument("sweep: unknown channel '" + channel + "'");
  return s;
}

inline SweepCurve sweep_sequence_length(const std::vector<int>& lengths, const std::string& channel,
                                        const BenchData& data, const BenchConfig& cfg,
                                        const tuner::Config& hyperparameters, const Logger& log = {}) {
  if (lengths.empty()) throw InvalidArgument("sweep: lengths must be non-empty");
  for (int l : lengths)
    if (l < 1) throw InvalidArgument("sweep: lengths must be >= 1");
  SweepCurve curve;
  curve.channel = channel;
  curve.hyperparameters = hyperparameters;
  nnet::NetworkSpec spec = hyperparameters.apply(cfg.base);
  spec.kind = NetKind::recurrent;
  const std::uint64_t stream = channel == "behavioral" ? 0x5eeb01 : 0x5eeb02;
  for (int len : lengths) {
    SweepPoint p;
    p.length = len;
    // Seeds depend on the repetition only, so lengths share initializations.
    for (const auto& r : run_repetitions(spec, sweep_input(channel, len, data.bundle->schema), data, cfg, stream,
                                         cfg.repetitions))
      p.r2.push_back(r.test.r2);
    p.agg = aggregate(p.r2);
    if (log) log("sweep " + channel + " length " + std::to_string(len) + " r2 mean " + std::to_string(p.agg.mean));
    curve.points.push_back(std::move(p));
  }
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& p : curve.points) best = std::max(best, p.agg.mean);
  for (auto& p : curve.points) p.fraction_of_max = p.agg.mean / best;
  return curve;
}

// ---------------------------------------------------------------------------
// Zeroing diagnostic: Model 9's layout with every context input forced to
// zero in training and evaluation should score like Model 8.

struct ZeroingDiagnostic {
  Aggregate model8;
  Aggregate zeroed;
  double tolerance = 0.0;  // 3 x the larger repetition sd
  bool within = false;
};

inline ZeroingDiagnostic zeroing_diagnostic(const ModelResult& m8, const ModelResult& m9, const BenchData& data,
                                            const BenchConfig& cfg) {
  InputSpec in = input_spec(m9.plan, data.bundle->schema);
  const std::size_t nb = in.columns.size();
  for (std::size_t k = 0; k < in.momentary.size(); ++k) in.zeroed.push_back(nb + k);
  nnet::NetworkSpec spec = m8.hyperparameters.apply(cfg.base);
  spec.kind = NetKind::dense;
  std::vector<double> r2;
  // Model 8's seeds, so the only difference is the dead inputs.
  for (const auto& r : run_repetitions(spec, in, data, cfg, 0xbe9c08, m8.plan.repetitions)) r2.push_back(r.test.r2);
  ZeroingDiagnostic z;
  z.model8 = m8.r2();
  z.zeroed = aggregate(r2);
  z.tolerance = 3.0 * std::max(z.model8.sd.value_or(0.0), z.zeroed.sd.value_or(0.0));
  z.within = std::abs(z.model8.mean - z.zeroed.mean) <= z.tolerance;
  return z;
}

}  // namespace ctxeng::bench
