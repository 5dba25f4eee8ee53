#pragma once

// The nine model specifications and the run configuration.

#include <string>
#include <vector>

#include "json.hpp"

#include "ctxeng/bench/inputs.hpp"
#include "ctxeng/nnet/spec.hpp"
#include "ctxeng/pipeline/dataset.hpp"

namespace ctxeng::bench {

inline constexpr std::array<Bracket, 5> kContextBrackets = {Bracket::census, Bracket::weather, Bracket::temporal,
                                                            Bracket::location, Bracket::connectivity};

struct ExperimentPlan {
  int model_id = 1;
  NetKind arch = NetKind::recurrent;
  std::string specification;
  std::vector<Bracket> context;  // context brackets in the input
  int history_len = 25;
  bool momentary = true;  // recurrent: add the t0 context step
  int repetitions = 5;
  int hpo_trials = 15;

  bool includes(Bracket b) const {
    return b == Bracket::behavioral || std::find(context.begin(), context.end(), b) != context.end();
  }
};

struct PaperAnchor {
  double r2;
  double sd;
};

/// Reported R^2 (sd) per model, reference only.
inline PaperAnchor paper_anchor(int model_id) {
  static constexpr PaperAnchor a[] = {{0.345, 0.0006}, {0.342, 0.003},  {0.354, 0.0022},
                                      {0.357, 0.0073}, {0.380, 0.0018}, {0.504, 0.0017},
                                      {0.522, 0.0038}, {0.256, 0.005},  {0.442, 0.0012}};
  if (model_id < 1 || model_id > 9) throw InvalidArgument("unknown model id " + std::to_string(model_id));
  return a[model_id - 1];
}

struct BenchConfig {
  std::uint64_t seed = 42;
  int repetitions = 5;
  int hpo_trials = 15;
  int hpo_init = 3;
  int seq_len = 25;
  bool momentary_context = true;
  pipeline::FocalCounts focal{4000, 1000, 3000};
  std::size_t hpo_train_focal = 2000;
  int hpo_max_epochs = 20;
  std::string space = "desk";  // desk | full
  nnet::NetworkSpec base = [] {
    nnet::NetworkSpec s;
    s.batch_size = 256;
    s.max_epochs = 50;
    s.patience = 5;
    return s;
  }();
  std::vector<int> sweep_lengths{1, 5, 10, 25, 50};
  std::vector<std::string> sweep_channels{"behavioral", "context"};
  int jobs = 1;
  bool record_time = true;

  void validate() const {
    if (repetitions < 1) throw InvalidArgument("bench: repetitions must be >= 1");
    if (hpo_trials < 0 || hpo_init < 0) throw InvalidArgument("bench: HPO budget must be >= 0");
    if (seq_len < 1) throw InvalidArgument("bench: sequence length must be >= 1");
    if (space != "desk" && space != "full") throw InvalidArgument("bench: space must be 'desk' or 'full'");
    if (sweep_lengths.empty()) throw InvalidArgument("bench: sweep lengths must be non-empty");
    for (int l : sweep_lengths)
      if (l < 1 || l > 100) throw InvalidArgument("bench: sweep lengths must lie in 1..100");
    for (const auto& c : sweep_channels)
      if (c != "behavioral" && c != "context") throw InvalidArgument("bench: unknown sweep channel '" + c + "'");
    if (jobs < 1) throw InvalidArgument("bench: jobs must be >= 1");
    base.validate();
  }

  /// Settings of the original study: 10 repetitions, 100 trials, full grid,
  /// length 100, batch 2048, every focal hour.
  static BenchConfig paper_scale() {
    BenchConfig c;
    c.repetitions = 10;
    c.hpo_trials = 100;
    c.seq_len = 100;
    c.focal = {0, 0, 0};
    c.hpo_train_focal = 0;
    c.hpo_max_epochs = 50;
    c.space = "full";
    c.base.batch_size = 2048;
    c.sweep_lengths = {1, 5, 10, 25, 50, 100};
    return c;
  }
};

inline std::string architecture_label(NetKind k) { return k == NetKind::recurrent ? "LSTM" : "Dense"; }

inline ExperimentPlan model_plan(int id, const BenchConfig& cfg) {
  ExperimentPlan p;
  p.model_id = id;
  p.history_len = cfg.seq_len;
  p.momentary = cfg.momentary_context;
  p.repetitions = cfg.repetitions;
  p.hpo_trials = cfg.hpo_trials;
  const std::vector<Bracket> all(kContextBrackets.begin(), kContextBrackets.end());
  switch (id) {
    case 1: p.specification = "Baseline (no context)"; break;
    case 2: p.specification = "Baseline + Census"; p.context = {Bracket::census}; break;
    case 3: p.specification = "Baseline + Weather"; p.context = {Bracket::weather}; break;
    case 4: p.specification = "Baseline + Time"; p.context = {Bracket::temporal}; break;
    case 5: p.specification = "Baseline + Locations"; p.context = {Bracket::location}; break;
    case 6: p.specification = "Baseline + Connectivity"; p.context = {Bracket::connectivity}; break;
    case 7: p.specification = "All features"; p.context = all; break;
    case 8:
      p.arch = NetKind::dense;
      p.specification = "Baseline";
      p.history_len = 1;
      break;
    case 9:
      p.arch = NetKind::dense;
      p.specification = "All Features";
      p.history_len = 1;
      p.context = all;
      break;
    default: throw InvalidArgument("unknown model id " + std::to_string(id));
  }
  return p;
}

/// Plan from a list of bracket names, e.g. {"behavioral", "weather"}.
inline ExperimentPlan custom_plan(int id, NetKind arch, const std::vector<std::string>& brackets,
                                  const BenchConfig& cfg) {
  ExperimentPlan p = model_plan(arch == NetKind::recurrent ? 1 : 8, cfg);
  p.model_id = id;
  p.specification.clear();
  for (const auto& name : brackets) {
    const auto b = pipeline::parse_bracket(name);
    if (!b) throw InvalidArgument("plan: unknown bracket '" + name + "'");
    if (*b != Bracket::behavioral) p.context.push_back(*b);
    p.specification += (p.specification.empty() ? "" : " + ") + name;
  }
  return p;
}

inline InputSpec input_spec(const ExperimentPlan& p, const pipeline::FeatureSchema& schema) {
  InputSpec s;
  s.arch = p.arch;
  s.history_len = p.history_len;
  std::vector<std::size_t> ctx;
  for (std::size_t c = 0; c < schema.size(); ++c) {
    const Bracket b = schema.columns[c].bracket;
    if (!p.includes(b)) continue;
    if (b == Bracket::behavioral) s.columns.push_back(c);
    else ctx.push_back(c);
  }
  if (p.arch == NetKind::dense) {
    s.momentary = ctx;
  } else {
    s.columns.insert(s.columns.end(), ctx.begin(), ctx.end());
    std::sort(s.columns.begin(), s.columns.end());
    if (p.momentary) s.momentary = ctx;
  }
  return s;
}

inline void to_json(nlohmann::json& j, const ExperimentPlan& p) {
  std::vector<std::string> ctx;
  for (auto b : p.context) ctx.emplace_back(pipeline::bracket_name(b));
  j = {{"model_id", p.model_id},
       {"architecture", architecture_label(p.arch)},
       {"specification", p.specification},
       {"context_brackets", ctx},
       {"history_len", p.history_len},
       {"momentary_context", p.arch == NetKind::recurrent && p.momentary && !p.context.empty()},
       {"repetitions", p.repetitions},
       {"hpo_trials", p.hpo_trials}};
}

}  // namespace ctxeng::bench
