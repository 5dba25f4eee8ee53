#pragma once

// Report files: report.csv (one row per model), runs.csv (one row per
// repetition), report.json (full provenance) and sweep.csv.

#include <cstdio>
#include <string>

#include "json.hpp"

#include "ctxeng/bench/suite.hpp"

namespace ctxeng::bench {

inline std::string fmt_num(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline constexpr const char* kReportHeader =
    "model,architecture,specification,behavior,census,weather,time,location,connectivity,r2_mean,r2_std,paper_anchor";

inline std::string report_csv(const RunReport& r) {
  std::string out = std::string(kReportHeader) + "\n";
  for (const auto& m : r.models) {
    const auto& p = m.plan;
    const auto a = m.r2();
    out += std::to_string(p.model_id) + "," + architecture_label(p.arch) + "," + csv_field(p.specification);
    for (Bracket b : pipeline::kAllBrackets) out += p.includes(b) ? ",X" : ",";
    out += "," + fmt_num(a.mean) + "," + (a.sd ? fmt_num(*a.sd) : "");
    if (p.model_id >= 1 && p.model_id <= 9) {
      const auto pa = paper_anchor(p.model_id);
      out += "," + csv_field(fmt_num(pa.r2, 3) + " (" + nlohmann::json(pa.sd).dump() + ")");
    } else {
      out += ",";
    }
    out += "\n";
  }
  return out;
}

inline std::string runs_csv(const RunReport& r) {
  std::string out = "model,repetition,seed,r2,rmse,best_epoch,stopped_epoch,hyperparameters\n";
  for (const auto& m : r.models)
    for (const auto& x : m.reps)
      out += std::to_string(m.plan.model_id) + "," + std::to_string(x.repetition) + "," + std::to_string(x.seed) +
             "," + fmt_num(x.test.r2) + "," + fmt_num(x.test.rmse) + "," + std::to_string(x.best_epoch) + "," +
             std::to_string(x.stopped_epoch) + "," + csv_field(m.hyperparameters.key()) + "\n";
  return out;
}

inline nlohmann::json config_json(const BenchConfig& c) {
  return {{"seed", c.seed},
          {"repetitions", c.repetitions},
          {"hpo_trials", c.hpo_trials},
          {"hpo_init", c.hpo_init},
          {"seq_len", c.seq_len},
          {"momentary_context", c.momentary_context},
          {"focal", {{"train", c.focal.train}, {"validation", c.focal.validation}, {"test", c.focal.test}}},
          {"hpo_train_focal", c.hpo_train_focal},
          {"hpo_max_epochs", c.hpo_max_epochs},
          {"space", c.space},
          {"base_network", c.base},
          {"sweep_lengths", c.sweep_lengths},
          {"sweep_channels", c.sweep_channels}};
}

inline nlohmann::json aggregate_json(const Aggregate& a) {
  return {{"mean", a.mean}, {"sd", a.sd ? nlohmann::json(*a.sd) : nlohmann::json(nullptr)}};
}

inline nlohmann::json report_json(const RunReport& r, bool include_times) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : r.models) {
    nlohmann::json reps = nlohmann::json::array();
    for (const auto& x : m.reps) {
      nlohmann::json j = {{"repetition", x.repetition}, {"seed", x.seed},         {"r2", x.test.r2},
                          {"rmse", x.test.rmse},        {"n", x.test.n},         {"best_epoch", x.best_epoch},
                          {"stopped_epoch", x.stopped_epoch}};
      if (include_times) j["wall_time_s"] = x.wall_time_s;
      reps.push_back(j);
    }
    nlohmann::json trials = nlohmann::json::array();
    for (const auto& t : m.hpo_history) {
      nlohmann::json j = t;
      if (!include_times) {
        j.erase("started_at");
        j.erase("finished_at");
        j.erase("wall_time_s");
      }
      trials.push_back(j);
    }
    const auto pa = paper_anchor(m.plan.model_id);
    models.push_back({{"plan", m.plan},
                      {"hyperparameters", m.hyperparameters},
                      {"repetitions", reps},
                      {"r2", aggregate_json(m.r2())},
                      {"rmse", aggregate_json(m.rmse())},
                      {"paper_anchor", {{"r2", pa.r2}, {"sd", pa.sd}}},
                      {"hpo_trials", trials}});
  }
  return {{"format", "ctxeng-report"},
          {"version", 1},
          {"schema_fingerprint", r.schema_fingerprint},
          {"optimizer", {{"name", "adam"}, {"beta1", r.config.base.adam.beta1}, {"beta2", r.config.base.adam.beta2},
                         {"epsilon", r.config.base.adam.epsilon}}},
          {"config", config_json(r.config)},
          {"models", models}};
}

inline constexpr const char* kSweepHeader = "channel,length,mean_r2,std,fraction_of_max,repetitions";

inline std::string sweep_csv(const std::vector<SweepCurve>& curves) {
  std::string out = std::string(kSweepHeader) + "\n";
  for (const auto& c : curves)
    for (const auto& p : c.points)
      out += c.channel + "," + std::to_string(p.length) + "," + fmt_num(p.agg.mean) + "," +
             (p.agg.sd ? fmt_num(*p.agg.sd) : "") + "," + fmt_num(p.fraction_of_max) + "," +
             std::to_string(p.r2.size()) + "\n";
  return out;
}

inline nlohmann::json sweep_json(const std::vector<SweepCurve>& curves) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& c : curves) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : c.points)
      pts.push_back({{"length", p.length}, {"r2", p.r2}, {"mean", p.agg.mean},
                     {"sd", p.agg.sd ? nlohmann::json(*p.agg.sd) : nlohmann::json(nullptr)},
                     {"fraction_of_max", p.fraction_of_max}});
    out.push_back({{"channel", c.channel}, {"hyperparameters", c.hyperparameters}, {"points", pts}});
  }
  return out;
}

inline nlohmann::json zeroing_json(const ZeroingDiagnostic& z) {
  return {{"model8_r2", aggregate_json(z.model8)},
          {"zeroed_model9_r2", aggregate_json(z.zeroed)},
          {"tolerance", z.tolerance},
          {"within_tolerance", z.within}};
}

}  // namespace ctxeng::bench
