#pragma once

// Subcommands. Every command writes into its own run directory: outputs,
// the resolved config and a manifest. Work happens in "<dir>.partial",
// which is renamed on success and kept on failure.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctxeng/bench/report.hpp"
#include "ctxeng/bench/suite.hpp"
#include "ctxeng/cli/config.hpp"
#include "ctxeng/explain/summary.hpp"
#include "ctxeng/nnet/checkpoint.hpp"
#include "ctxeng/pipeline/dataset.hpp"
#include "ctxeng/plot/svg.hpp"
#include "ctxeng/synthgen/generator.hpp"
#include "ctxeng/synthgen/io.hpp"

namespace ctxeng::cli {

namespace fs = std::filesystem;
using nnet::NetKind;

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr const char* kEventsFile = "events.tsv";
inline constexpr const char* kWeatherFile = "weather.csv";
inline constexpr const char* kCensusFile = "census.csv";
inline constexpr const char* kBundleFile = "bundle.bin";

struct RunOptions {
  std::string run_dir;  // empty = timestamped under output.dir
  bool deterministic = false;
  bool quiet = false;
  int jobs = 1;
};

inline std::string file_hash(const std::string& path) { return hex64(fnv1a64(synthgen::io_detail::read_file(path))); }

/// Output directory, log and manifest of one command invocation.
class Run {
 public:
  Run(std::string command, const RunConfig& cfg, const RunOptions& opt)
      : command_(std::move(command)), cfg_(cfg), opt_(opt), t0_(std::chrono::steady_clock::now()) {
    final_dir_ = opt.run_dir.empty() ? timestamped_dir() : opt.run_dir;
    if (fs::exists(final_dir_) && !fs::is_empty(final_dir_))
      throw InvalidArgument("run directory " + final_dir_ + " exists and is not empty");
    dir_ = final_dir_ + ".partial";
    std::error_code ec;
    fs::remove_all(dir_, ec);
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create run directory " + dir_ + ": " + ec.message());
    if (!opt_.deterministic) started_at_ = tuner::utc_timestamp();
    write("config.resolved", to_text(cfg_), false);
  }

  const std::string& dir() const { return dir_; }
  const std::string& final_dir() const { return final_dir_; }
  std::string path(const std::string& name) const { return dir_ + "/" + name; }

  void log(const std::string& msg) {
    log_ += msg + "\n";
    if (!opt_.quiet) std::cerr << "[" << command_ << "] " << msg << "\n";
  }
  bench::Logger logger() {
    return [this](const std::string& m) { log(m); };
  }
  /// Result lines go to stdout and the log.
  void say(const std::string& msg) {
    log_ += msg + "\n";
    std::cout << msg << "\n";
  }

  void input(const std::string& path) {
    if (!fs::exists(path)) throw IoError("input file not found: " + path);
    inputs_.push_back({{"name", fs::path(path).filename().string()}, {"fnv1a64", file_hash(path)}});
  }

  void write(const std::string& name, std::string_view content, bool output = true) {
    synthgen::io_detail::write_file(path(name), content);
    if (output) outputs_.push_back(name);
  }
  void output(const std::string& name) { outputs_.push_back(name); }

  template <class Fn>
  auto stage(const std::string& name, Fn&& fn) {
    const auto t = std::chrono::steady_clock::now();
    struct Done {
      Run* r;
      std::string n;
      std::chrono::steady_clock::time_point t;
      ~Done() { r->stages_.push_back({n, std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count()}); }
    } done{this, name, t};
    return fn();
  }

  /// Writes the manifest and moves the directory into place.
  void finish() {
    write("run.log", log_, false);
    nlohmann::json m;
    m["tool"] = "ctxeng";
    m["tool_version"] = kToolVersion;
    m["command"] = command_;
    m["schema_version"] = 1;
    m["config_hash"] = config_hash(cfg_);
    m["inputs"] = inputs_;
    nlohmann::json outs = nlohmann::json::array();
    std::sort(outputs_.begin(), outputs_.end());
    outputs_.erase(std::unique(outputs_.begin(), outputs_.end()), outputs_.end());
    for (const auto& o : outputs_) outs.push_back({{"name", o}, {"fnv1a64", file_hash(path(o))}});
    m["outputs"] = outs;
    m["deterministic"] = opt_.deterministic;
    if (!opt_.deterministic) {
      m["started_at"] = started_at_;
      m["jobs"] = opt_.jobs;
      nlohmann::json st = nlohmann::json::array();
      for (const auto& [n, s] : stages_) st.push_back({{"stage", n}, {"wall_time_s", s}});
      st.push_back({{"stage", "total"},
                    {"wall_time_s", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count()}});
      m["wall_times"] = st;
    }
    synthgen::io_detail::write_file(path("manifest.json"), m.dump(2) + "\n");
    std::error_code ec;
    fs::rename(dir_, final_dir_, ec);
    if (ec) throw IoError("cannot move " + dir_ + " to " + final_dir_ + ": " + ec.message());
    dir_ = final_dir_;
  }

  /// Keeps the partial directory with the error message.
  void fail(const std::string& what) noexcept {
    try {
      log("failed: " + what);
      synthgen::io_detail::write_file(path("run.log"), log_);
    } catch (...) {
    }
  }

 private:
  std::string timestamped_dir() const {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
    std::string base = cfg_.output_dir + "/" + buf + "-" + command_;
    std::string d = base;
    for (int i = 2; fs::exists(d) || fs::exists(d + ".partial"); ++i) d = base + "-" + std::to_string(i);
    return d;
  }

  std::string command_;
  RunConfig cfg_;
  RunOptions opt_;
  std::chrono::steady_clock::time_point t0_;
  std::string final_dir_, dir_, started_at_, log_;
  nlohmann::json inputs_ = nlohmann::json::array();
  std::vector<std::string> outputs_;
  std::vector<std::pair<std::string, double>> stages_;
};

// ---------------------------------------------------------------------------

inline void cmd_datagen(Run& run, const RunConfig& cfg) {
  const auto& sc = cfg.synth;
  const auto tables = run.stage("context_tables", [&] {
    return synthgen::generate_context_tables(sc.n_zips, sc.span_days * 24, sc.seed, sc);
  });
  const auto log = run.stage("simulate", [&] {
    const auto cohort = synthgen::generate_cohort(sc.n_users, sc.seed, sc);
    return synthgen::simulate(cohort, tables, sc.span_days, sc.seed, sc);
  });
  run.stage("write", [&] {
    synthgen::write_event_log(log, run.path(kEventsFile));
    synthgen::write_context_tables(tables, run.path(kWeatherFile), run.path(kCensusFile));
    return 0;
  });
  for (const char* f : {kEventsFile, kWeatherFile, kCensusFile}) run.output(f);
  std::size_t weather_rows = 0;
  for (const auto& z : tables.weather)
    for (const auto& h : z) weather_rows += h.has_value();
  run.say("users " + std::to_string(log.user_ids.size()));
  run.say("events " + std::to_string(log.records.size()));
  run.say("weather rows " + std::to_string(weather_rows));
  run.say("census rows " + std::to_string(tables.census.size()));
}

/// Bracket counts the schema must have.
inline void check_manifest(const pipeline::FeatureSchema& s, bool extended) {
  const auto m = s.manifest();
  const std::map<std::string, std::size_t> want{{"behavioral", extended ? 129u : 127u},
                                                {"census", 19},
                                                {"weather", 19},
                                                {"temporal", 5},
                                                {"location", 11},
                                                {"connectivity", 1},
                                                {"total", extended ? 184u : 182u}};
  for (const auto& [k, v] : want)
    if (m.at(k) != v)
      throw InvariantError("schema check failed: " + k + " has " + std::to_string(m.at(k)) + " columns, expected " +
                           std::to_string(v));
}

inline void cmd_prepare(Run& run, const RunConfig& cfg, const std::string& data_dir) {
  const std::string ev = data_dir + "/" + kEventsFile, we = data_dir + "/" + kWeatherFile,
                    ce = data_dir + "/" + kCensusFile;
  for (const auto& p : {ev, we, ce}) run.input(p);
  const auto bundle = run.stage("prepare", [&] {
    const auto log = synthgen::read_event_log(ev);
    const auto tables = synthgen::read_context_tables(we, ce);
    return pipeline::prepare(log, tables, cfg.prepare);
  });
  check_manifest(bundle.schema, cfg.prepare.options.extended_schema);
  run.stage("write", [&] {
    pipeline::write_bundle(bundle, run.path(kBundleFile));
    return 0;
  });
  run.output(kBundleFile);
  const auto m = bundle.schema.manifest();
  nlohmann::json j = {{"manifest", m},
                      {"rows", bundle.rows()},
                      {"schema_fingerprint", bundle.schema.fingerprint()},
                      {"note", pipeline::kContextCountNote}};
  run.write("schema.json", j.dump(2) + "\n");
  for (const auto& [k, v] : m) run.say("columns " + k + " " + std::to_string(v));
  run.say("rows " + std::to_string(bundle.rows()));
  run.say("note: " + std::string(pipeline::kContextCountNote));
}

struct LoadedBundle {
  pipeline::FeatureMatrixBundle bundle;
  bench::BenchData data;
};

inline std::unique_ptr<LoadedBundle> load_bundle(Run& run, const std::string& path, const bench::BenchConfig& bc) {
  run.input(path);
  auto lb = std::make_unique<LoadedBundle>();
  lb->bundle = pipeline::read_bundle(path);
  lb->data = bench::BenchData::build(lb->bundle, bc);
  run.log("bundle " + std::to_string(lb->bundle.rows()) + " rows, focal train/validation/test " +
          std::to_string(lb->data.train.size()) + "/" + std::to_string(lb->data.validation.size()) + "/" +
          std::to_string(lb->data.test.size()));
  return lb;
}

inline void write_report(Run& run, const bench::RunReport& r, bool deterministic) {
  run.write("report.csv", bench::report_csv(r));
  run.write("runs.csv", bench::runs_csv(r));
  run.write("report.json", bench::report_json(r, !deterministic).dump(2) + "\n");
  for (const auto& m : r.models) {
    const auto a = m.r2();
    run.say("model " + std::to_string(m.plan.model_id) + " r2 " + bench::fmt_num(a.mean) +
            (a.sd ? " sd " + bench::fmt_num(*a.sd) : ""));
  }
}

inline void record_histories(Run& run, const bench::RunReport& r) {
  for (const auto& m : r.models) {
    const std::string n = "hpo_model" + std::to_string(m.plan.model_id) + ".jsonl";
    if (fs::exists(run.path(n))) run.output(n);
  }
}

inline void cmd_ablate(Run& run, const RunConfig& cfg, const std::string& bundle_path) {
  const auto lb = load_bundle(run, bundle_path, cfg.bench);
  const auto report = run.stage("ablate", [&] {
    return bench::run_model_suite(bench::plans_for(cfg.models, cfg.bench), lb->data, cfg.bench, run.dir(),
                                  run.logger());
  });
  record_histories(run, report);
  write_report(run, report, !cfg.bench.record_time);
}

inline void cmd_cross(Run& run, const RunConfig& cfg, const std::string& bundle_path) {
  const auto lb = load_bundle(run, bundle_path, cfg.bench);
  const auto report =
      run.stage("cross", [&] { return bench::run_cross_sectional(lb->data, cfg.bench, run.dir(), run.logger()); });
  record_histories(run, report);
  write_report(run, report, !cfg.bench.record_time);
  const auto z = run.stage("zeroing", [&] { return bench::zeroing_diagnostic(report.models[0], report.models[1], lb->data, cfg.bench); });
  run.write("zeroing.json", bench::zeroing_json(z).dump(2) + "\n");
  run.say(std::string("zeroing diagnostic ") + (z.within ? "within" : "outside") + " tolerance: model 8 " +
          bench::fmt_num(z.model8.mean) + ", zeroed model 9 " + bench::fmt_num(z.zeroed.mean));
}

inline void cmd_sweep(Run& run, const RunConfig& cfg, const std::string& bundle_path) {
  const auto lb = load_bundle(run, bundle_path, cfg.bench);
  std::vector<bench::SweepCurve> curves;
  for (const auto& ch : cfg.bench.sweep_channels) {
    const std::string hist = "hpo_sweep_" + ch + ".jsonl";
    const auto in = bench::sweep_input(ch, cfg.bench.seq_len, lb->bundle.schema);
    const auto [hp, trials] = run.stage("tune_" + ch, [&] {
      return bench::tune_input(in, "sweep " + ch, ch == "behavioral" ? 0x5eed01 : 0x5eed02, cfg.bench.hpo_trials,
                               lb->data, cfg.bench, run.path(hist), run.logger());
    });
    if (fs::exists(run.path(hist))) run.output(hist);
    curves.push_back(run.stage("sweep_" + ch, [&] {
      return bench::sweep_sequence_length(cfg.bench.sweep_lengths, ch, lb->data, cfg.bench, hp, run.logger());
    }));
  }
  run.write("sweep.csv", bench::sweep_csv(curves));
  run.write("sweep.json", bench::sweep_json(curves).dump(2) + "\n");
  for (const auto& c : curves)
    for (const auto& p : c.points)
      run.say("sweep " + c.channel + " length " + std::to_string(p.length) + " r2 " + bench::fmt_num(p.agg.mean));
}

inline nnet::NetworkSpec train_spec(const RunConfig& cfg, const bench::ExperimentPlan& plan) {
  nnet::NetworkSpec spec = cfg.bench.base;
  spec.kind = plan.arch;
  spec.seed = cfg.train_seed;
  if (spec.kind == NetKind::dense) spec.recurrent_dropout = 0.0;
  spec.validate();
  return spec;
}

inline nnet::TrainedModel train_model(Run& run, const RunConfig& cfg, const LoadedBundle& lb,
                                      const bench::ExperimentPlan& plan) {
  const auto in = bench::input_spec(plan, lb.bundle.schema);
  const bench::InputView tr(lb.data.train, in), va(lb.data.validation, in);
  nnet::TrainOptions to;
  to.schema_fingerprint = lb.bundle.schema.fingerprint();
  to.on_epoch = [&](const nnet::EpochRecord& e) {
    run.log("epoch " + std::to_string(e.epoch) + " train_loss " + bench::fmt_num(e.train_loss) + " val_rmse " +
            bench::fmt_num(e.validation_rmse));
  };
  return run.stage("train", [&] { return nnet::train(train_spec(cfg, plan), tr, va, to); });
}

inline void cmd_train(Run& run, const RunConfig& cfg, const std::string& bundle_path) {
  const auto lb = load_bundle(run, bundle_path, cfg.bench);
  const auto plan = bench::model_plan(cfg.train_model, cfg.bench);
  const auto model = train_model(run, cfg, *lb, plan);
  nnet::write_checkpoint(run.path("model.ckpt"), model);
  run.output("model.ckpt");
  const auto in = bench::input_spec(plan, lb->bundle.schema);
  const auto test = nnet::evaluate(model, bench::InputView(lb->data.test, in));
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& e : model.trace)
    trace.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"validation_rmse", e.validation_rmse}});
  nlohmann::json j = {{"model", plan},
                      {"spec", model.spec},
                      {"input_dim", model.input_dim},
                      {"best_epoch", model.best_epoch},
                      {"stopped_epoch", model.stopped_epoch},
                      {"test", {{"r2", test.r2}, {"rmse", test.rmse}, {"n", test.n}}},
                      {"trace", trace}};
  run.write("metrics.json", j.dump(2) + "\n");
  run.say("model " + std::to_string(plan.model_id) + " test r2 " + bench::fmt_num(test.r2) + " rmse " +
          bench::fmt_num(test.rmse) + " best epoch " + std::to_string(model.best_epoch));
}

inline void cmd_tune(Run& run, const RunConfig& cfg, const std::string& bundle_path) {
  const auto lb = load_bundle(run, bundle_path, cfg.bench);
  const auto plan = bench::model_plan(cfg.train_model, cfg.bench);
  const std::string hist = "hpo_model" + std::to_string(plan.model_id) + ".jsonl";
  if (plan.hpo_trials < 1) throw InvalidArgument("tune: tuner.trials must be >= 1");
  const auto [best, trials] =
      run.stage("tune", [&] { return bench::tune_plan(plan, lb->data, cfg.bench, run.path(hist), run.logger()); });
  run.output(hist);
  nlohmann::json j = {{"model", plan}, {"best", best}, {"trials", trials.size()}};
  for (const auto& t : trials)
    if (t.config == best) {
      j["best_validation_rmse"] = t.objective;
      break;
    }
  run.write("best.json", j.dump(2) + "\n");
  run.say("model " + std::to_string(plan.model_id) + " best " + best.key());
}

inline void cmd_explain(Run& run, const RunConfig& cfg, const std::string& bundle_path,
                        const std::string& checkpoint) {
  const auto lb = load_bundle(run, bundle_path, cfg.bench);
  const auto plan = bench::model_plan(cfg.explain.model, cfg.bench);
  const auto in = bench::input_spec(plan, lb->bundle.schema);
  const auto cols = explain::input_columns(in, lb->bundle.schema);
  const auto groups = explain::family_groups(cols.names);
  if (cfg.explain.mode == "exact" && groups.size() > explain::kMaxExactGroups)
    throw InvalidArgument("explain: exact mode supports at most " + std::to_string(explain::kMaxExactGroups) +
                          " feature groups, model " + std::to_string(plan.model_id) + " has " +
                          std::to_string(groups.size()) + "; set explain.mode=sampled");
  nnet::TrainedModel model;
  if (!checkpoint.empty()) {
    run.input(checkpoint);
    model = nnet::read_checkpoint(checkpoint);
    if (model.input_dim != in.input_dim() || model.spec.kind != NetKind::dense)
      throw InvalidArgument("explain: checkpoint does not match model " + std::to_string(plan.model_id) + " inputs");
    if (model.schema_fingerprint != lb->bundle.schema.fingerprint())
      throw InvalidArgument("explain: checkpoint was trained on a different feature schema");
  } else {
    RunConfig tc = cfg;
    tc.train_model = plan.model_id;
    model = train_model(run, tc, *lb, plan);
    nnet::write_checkpoint(run.path("model.ckpt"), model);
    run.output("model.ckpt");
  }
  const bench::InputView tr(lb->data.train, in), te(lb->data.test, in);
  std::vector<std::size_t> all(tr.size());
  std::iota(all.begin(), all.end(), 0);
  const auto [Xtr, ytr] = explain::dense_rows(tr, all);
  const auto conn = static_cast<Eigen::Index>(
      std::find(cols.names.begin(), cols.names.end(), "connectivity_fraction") - cols.names.begin());
  std::vector<int> strata(static_cast<std::size_t>(Xtr.rows()), 0);
  if (conn < Xtr.cols()) {
    const double mean = Xtr.col(conn).mean();
    for (Eigen::Index i = 0; i < Xtr.rows(); ++i) strata[static_cast<std::size_t>(i)] = Xtr(i, conn) > mean;
  }
  const auto bg = explain::stratified_sample(strata, static_cast<std::size_t>(cfg.explain.background), cfg.explain.seed);
  explain::ShapConfig sc;
  sc.background.resize(static_cast<Eigen::Index>(bg.size()), Xtr.cols());
  for (std::size_t i = 0; i < bg.size(); ++i)
    sc.background.row(static_cast<Eigen::Index>(i)) = Xtr.row(static_cast<Eigen::Index>(bg[i]));
  sc.groups = groups;
  sc.n_permutations = cfg.explain.permutations;
  sc.mode = cfg.explain.mode == "exact" ? explain::ShapMode::exact : explain::ShapMode::sampled;
  sc.seed = cfg.explain.seed;
  sc.jobs = cfg.bench.jobs;
  std::vector<std::size_t> idx(std::min(te.size(), static_cast<std::size_t>(cfg.explain.samples)));
  std::iota(idx.begin(), idx.end(), 0);
  const auto [X, y] = explain::dense_rows(te, idx);
  run.log("explaining " + std::to_string(idx.size()) + " samples over " + std::to_string(groups.size()) +
          " feature groups with " + std::to_string(bg.size()) + " background rows");
  const auto res = run.stage("shap", [&] { return explain::explain_samples(explain::model_function(model), X, sc); });
  const auto imp = explain::importance_summary(res);
  const auto corr = explain::value_shap_correlations(res, X, y, groups, cols.names);
  run.write("shap_values.csv", explain::shap_values_csv(res));
  run.write("importance.csv", explain::importance_csv(imp));
  run.write("correlations.csv", explain::correlations_csv(corr));
  run.write("importance.svg", explain::importance_svg(imp, 20, "Model " + std::to_string(plan.model_id) + ": mean |SHAP value|"));
  for (std::size_t i = 0; i < std::min<std::size_t>(10, imp.size()); ++i)
    run.say("rank " + std::to_string(i + 1) + " " + imp[i].group + " " + explain::fmt(imp[i].mean_abs));
}

// ---------------------------------------------------------------------------
// plot

/// RFC 4180 style record splitting for one line.
inline std::vector<std::string> split_csv_line(std::string_view line, const std::string& where) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw InvalidArgument(where + ": unterminated quote");
  out.push_back(cur);
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line;  // source line of each row

  std::size_t col(const std::string& name, const std::string& file) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw InvalidArgument(file + ":1: missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }
};

inline CsvTable read_csv(const std::string& path) {
  const std::string text = synthgen::io_detail::read_file(path);
  CsvTable t;
  synthgen::io_detail::for_each_line(text, [&](std::string_view l, std::size_t no) {
    const std::string where = path + ":" + std::to_string(no);
    auto f = split_csv_line(l, where);
    if (t.header.empty()) {
      t.header = std::move(f);
      return;
    }
    if (f.size() != t.header.size())
      throw InvalidArgument(where + ": expected " + std::to_string(t.header.size()) + " fields, found " +
                            std::to_string(f.size()));
    t.rows.push_back(std::move(f));
    t.line.push_back(no);
  });
  if (t.header.empty()) throw InvalidArgument(path + ": empty file");
  return t;
}

inline double csv_number(const CsvTable& t, std::size_t r, std::size_t c, const std::string& file) {
  const std::string& s = t.rows[r][c];
  const std::string where = file + ":" + std::to_string(t.line[r]);
  if (s.empty()) throw InvalidArgument(where + ": empty value in column '" + t.header[c] + "'");
  return detail::parse_number<double>(where, s);
}

inline std::string r2_chart(const std::vector<std::string>& reports) {
  std::vector<plot::Bar> bars;
  for (const auto& file : reports) {
    const auto t = read_csv(file);
    const auto cm = t.col("model", file), cs = t.col("specification", file), ca = t.col("architecture", file),
               cr = t.col("r2_mean", file), csd = t.col("r2_std", file), cp = t.col("paper_anchor", file);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      plot::Bar b;
      b.label = "Model " + t.rows[r][cm] + " (" + t.rows[r][ca] + "): " + t.rows[r][cs];
      b.value = csv_number(t, r, cr, file);
      if (!t.rows[r][csd].empty()) b.error = csv_number(t, r, csd, file);
      if (!t.rows[r][cp].empty()) b.note = "paper " + t.rows[r][cp];
      bars.push_back(b);
    }
  }
  if (bars.empty()) throw InvalidArgument("plot: report has no model rows");
  return plot::horizontal_bars("Predictive performance (test R^2, mean and sd over repetitions)", "R^2", bars, 330);
}

inline std::string sweep_chart(const std::string& file) {
  const auto t = read_csv(file);
  const auto cc = t.col("channel", file), cl = t.col("length", file), cm = t.col("mean_r2", file),
             cs = t.col("std", file);
  std::vector<plot::Series> series;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string& ch = t.rows[r][cc];
    auto it = std::find_if(series.begin(), series.end(), [&](const plot::Series& s) { return s.name == ch; });
    if (it == series.end()) {
      series.push_back({ch, {}, {}, {}});
      it = series.end() - 1;
    }
    it->x.push_back(csv_number(t, r, cl, file));
    it->y.push_back(csv_number(t, r, cm, file));
    it->err.push_back(t.rows[r][cs].empty() ? 0.0 : csv_number(t, r, cs, file));
  }
  if (series.empty()) throw InvalidArgument("plot: sweep file " + file + " has no rows");
  return plot::line_chart("Performance by sequence length", "sequence length", "test R^2", series, true);
}

inline std::string importance_chart(const std::string& file) {
  const auto t = read_csv(file);
  const auto cg = t.col("group", file), cm = t.col("mean_abs_shap", file);
  std::vector<explain::ImportanceRow> rows;
  for (std::size_t r = 0; r < t.rows.size(); ++r) rows.push_back({t.rows[r][cg], csv_number(t, r, cm, file)});
  if (rows.empty()) throw InvalidArgument("plot: importance file " + file + " has no rows");
  return explain::importance_svg(rows);
}

inline void cmd_plot(Run& run, const std::vector<std::string>& reports, const std::string& sweep,
                     const std::string& importance) {
  if (reports.empty() && sweep.empty() && importance.empty())
    throw InvalidArgument("plot: give at least one of --report, --sweep, --importance");
  for (const auto& f : reports) run.input(f);
  if (!sweep.empty()) run.input(sweep);
  if (!importance.empty()) run.input(importance);
  // Render everything before writing so a bad input leaves no figure.
  std::vector<std::pair<std::string, std::string>> figs;
  if (!reports.empty()) figs.emplace_back("r2.svg", r2_chart(reports));
  if (!sweep.empty()) figs.emplace_back("sweep.svg", sweep_chart(sweep));
  if (!importance.empty()) figs.emplace_back("importance.svg", importance_chart(importance));
  for (const auto& [name, svg] : figs) {
    run.write(name, svg);
    run.say("wrote " + name);
  }
}

}  // namespace ctxeng::cli
