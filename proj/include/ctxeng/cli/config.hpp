#pragma once

// Flat "section.key = value" run configuration bound onto the module configs.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctxeng/bench/plans.hpp"
#include "ctxeng/pipeline/dataset.hpp"
#include "ctxeng/synthgen/generator.hpp"

namespace ctxeng::cli {

struct ExplainConfig {
  std::string mode = "sampled";  // sampled | exact
  int permutations = 500;
  int background = 100;
  int samples = 500;
  int model = 9;
  std::uint64_t seed = 42;
};

struct RunConfig {
  synthgen::SynthConfig synth;
  pipeline::PrepareConfig prepare;
  bench::BenchConfig bench;
  std::vector<int> models{1, 2, 3, 4, 5, 6, 7};
  bool paper_scale = false;
  ExplainConfig explain;
  int train_model = 1;
  std::uint64_t train_seed = 42;
  std::string output_dir = "runs";
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string fmt_double(double v) { return nlohmann::json(v).dump(); }

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw InvalidArgument("config: " + key + ": cannot parse '" + v + "' as a number");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw InvalidArgument("config: " + key + ": expected true or false, got '" + v + "'");
}

inline std::vector<std::string> parse_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(v);
  while (std::getline(ss, cur, ',')) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    if constexpr (std::is_same_v<T, std::string>) s += v[i];
    else if constexpr (std::is_floating_point_v<T>) s += fmt_double(v[i]);
    else s += std::to_string(v[i]);
  }
  return s;
}

}  // namespace detail

struct Key {
  std::string name;
  std::string help;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

namespace detail {

template <class T>
Key num_key(std::string name, std::string help, std::function<T&(RunConfig&)> ref) {
  return {name, std::move(help),
          [ref](const RunConfig& c) {
            const T v = ref(const_cast<RunConfig&>(c));
            if constexpr (std::is_floating_point_v<T>) return fmt_double(v);
            else return std::to_string(v);
          },
          [ref, name](RunConfig& c, const std::string& v) { ref(c) = parse_number<T>(name, v); }};
}

inline Key bool_key(std::string name, std::string help, std::function<bool&(RunConfig&)> ref) {
  return {name, std::move(help),
          [ref](const RunConfig& c) { return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [ref, name](RunConfig& c, const std::string& v) { ref(c) = parse_bool(name, v); }};
}

template <class T>
Key list_key(std::string name, std::string help, std::function<std::vector<T>&(RunConfig&)> ref) {
  return {name, std::move(help), [ref](const RunConfig& c) { return join(ref(const_cast<RunConfig&>(c))); },
          [ref, name](RunConfig& c, const std::string& v) {
            std::vector<T> out;
            for (const auto& item : parse_list(v)) {
              if constexpr (std::is_same_v<T, std::string>) out.push_back(item);
              else out.push_back(parse_number<T>(name, item));
            }
            ref(c) = std::move(out);
          }};
}

inline Key str_key(std::string name, std::string help, std::function<std::string&(RunConfig&)> ref) {
  return {name, std::move(help), [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)); },
          [ref](RunConfig& c, const std::string& v) { ref(c) = v; }};
}

}  // namespace detail

/// Every accepted key, in output order.
inline const std::vector<Key>& keys() {
  using namespace detail;
  using R = RunConfig;
  static const std::vector<Key> k = [] {
    std::vector<Key> v;
    // synthgen
    v.push_back(num_key<int>("synthgen.users", "cohort size", [](R& c) -> int& { return c.synth.n_users; }));
    v.push_back(num_key<int>("synthgen.days", "simulated days", [](R& c) -> int& { return c.synth.span_days; }));
    v.push_back(num_key<int>("synthgen.zips", "zip codes", [](R& c) -> int& { return c.synth.n_zips; }));
    v.push_back(num_key<std::uint64_t>("synthgen.seed", "generator seed", [](R& c) -> std::uint64_t& { return c.synth.seed; }));
    v.push_back(num_key<long long>("synthgen.start_unix", "first simulated hour (unix seconds)",
                                   [](R& c) -> long long& { return c.synth.start_unix; }));
    v.push_back(num_key<double>("synthgen.mobile_coef_mean", "mobile-data effect on the latent propensity",
                                [](R& c) -> double& { return c.synth.mobile_coef_mean; }));
    v.push_back(num_key<double>("synthgen.mobile_coef_sd", "", [](R& c) -> double& { return c.synth.mobile_coef_sd; }));
    v.push_back({"synthgen.location_coef_mean", "per-category location effects (10 values)",
                 [](const R& c) { return join(std::vector<double>(c.synth.location_coef_mean.begin(), c.synth.location_coef_mean.end())); },
                 [](R& c, const std::string& s) {
                   const auto items = parse_list(s);
                   if (items.size() != c.synth.location_coef_mean.size())
                     throw InvalidArgument("config: synthgen.location_coef_mean needs " +
                                           std::to_string(c.synth.location_coef_mean.size()) + " values");
                   for (std::size_t i = 0; i < items.size(); ++i)
                     c.synth.location_coef_mean[i] = parse_number<double>("synthgen.location_coef_mean", items[i]);
                 }});
    v.push_back(num_key<double>("synthgen.location_coef_sd", "", [](R& c) -> double& { return c.synth.location_coef_sd; }));
    v.push_back(num_key<double>("synthgen.rain_coef", "", [](R& c) -> double& { return c.synth.rain_coef; }));
    v.push_back(num_key<double>("synthgen.temperature_coef", "", [](R& c) -> double& { return c.synth.temperature_coef; }));
    v.push_back(num_key<double>("synthgen.evening_coef", "", [](R& c) -> double& { return c.synth.evening_coef; }));
    v.push_back(num_key<double>("synthgen.trait_sd", "", [](R& c) -> double& { return c.synth.trait_sd; }));
    v.push_back(num_key<double>("synthgen.mood_ar", "", [](R& c) -> double& { return c.synth.mood_ar; }));
    v.push_back(num_key<double>("synthgen.mood_sd", "", [](R& c) -> double& { return c.synth.mood_sd; }));
    v.push_back(num_key<double>("synthgen.habit_ar", "", [](R& c) -> double& { return c.synth.habit_ar; }));
    v.push_back(num_key<double>("synthgen.habit_sd", "", [](R& c) -> double& { return c.synth.habit_sd; }));
    v.push_back(num_key<double>("synthgen.base_rate_sd", "", [](R& c) -> double& { return c.synth.base_rate_sd; }));
    v.push_back(num_key<double>("synthgen.rate_scale", "", [](R& c) -> double& { return c.synth.rate_scale; }));
    v.push_back(num_key<double>("synthgen.location_share_prob", "", [](R& c) -> double& { return c.synth.location_share_prob; }));
    v.push_back(num_key<double>("synthgen.location_missing_prob", "", [](R& c) -> double& { return c.synth.location_missing_prob; }));
    v.push_back(num_key<double>("synthgen.missingness_rate", "fraction of deleted weather cells",
                                [](R& c) -> double& { return c.synth.missingness_rate; }));
    v.push_back(num_key<double>("synthgen.heavy_tail_fraction", "", [](R& c) -> double& { return c.synth.heavy_tail_fraction; }));
    v.push_back(num_key<double>("synthgen.pareto_alpha", "", [](R& c) -> double& { return c.synth.pareto_alpha; }));
    // pipeline
    v.push_back(num_key<double>("pipeline.ratio_epsilon", "", [](R& c) -> double& { return c.prepare.options.ratio_epsilon; }));
    v.push_back(num_key<double>("pipeline.target_epsilon", "", [](R& c) -> double& { return c.prepare.options.target_epsilon; }));
    v.push_back(num_key<double>("pipeline.trim_quantile", "", [](R& c) -> double& { return c.prepare.options.trim_quantile; }));
    v.push_back(bool_key("pipeline.extended_schema", "add raw and log session time",
                         [](R& c) -> bool& { return c.prepare.options.extended_schema; }));
    v.push_back(bool_key("pipeline.impute_missing", "", [](R& c) -> bool& { return c.prepare.enrich.impute_missing; }));
    v.push_back(num_key<double>("pipeline.split_train", "", [](R& c) -> double& { return c.prepare.fractions.train; }));
    v.push_back(num_key<double>("pipeline.split_validation", "", [](R& c) -> double& { return c.prepare.fractions.validation; }));
    v.push_back(num_key<double>("pipeline.split_test", "", [](R& c) -> double& { return c.prepare.fractions.test; }));
    v.push_back(num_key<std::uint64_t>("pipeline.seed", "user split seed", [](R& c) -> std::uint64_t& { return c.prepare.seed; }));
    // training
    v.push_back(list_key<int>("training.layer_dims", "hidden widths", [](R& c) -> std::vector<int>& { return c.bench.base.layer_dims; }));
    v.push_back(num_key<int>("training.top_dim", "", [](R& c) -> int& { return c.bench.base.top_dim; }));
    v.push_back(num_key<double>("training.dropout", "", [](R& c) -> double& { return c.bench.base.dropout; }));
    v.push_back(num_key<double>("training.recurrent_dropout", "", [](R& c) -> double& { return c.bench.base.recurrent_dropout; }));
    v.push_back(num_key<double>("training.learning_rate", "", [](R& c) -> double& { return c.bench.base.learning_rate; }));
    v.push_back(num_key<int>("training.batch_size", "", [](R& c) -> int& { return c.bench.base.batch_size; }));
    v.push_back(num_key<int>("training.max_epochs", "", [](R& c) -> int& { return c.bench.base.max_epochs; }));
    v.push_back(num_key<int>("training.patience", "", [](R& c) -> int& { return c.bench.base.patience; }));
    v.push_back(num_key<double>("training.clip_norm", "", [](R& c) -> double& { return c.bench.base.clip_norm; }));
    v.push_back(num_key<double>("training.adam_beta1", "", [](R& c) -> double& { return c.bench.base.adam.beta1; }));
    v.push_back(num_key<double>("training.adam_beta2", "", [](R& c) -> double& { return c.bench.base.adam.beta2; }));
    v.push_back(num_key<double>("training.adam_epsilon", "", [](R& c) -> double& { return c.bench.base.adam.epsilon; }));
    v.push_back(num_key<int>("training.model", "model id for the train command", [](R& c) -> int& { return c.train_model; }));
    v.push_back(num_key<std::uint64_t>("training.seed", "", [](R& c) -> std::uint64_t& { return c.train_seed; }));
    // tuner
    v.push_back(num_key<int>("tuner.trials", "search budget per model", [](R& c) -> int& { return c.bench.hpo_trials; }));
    v.push_back(num_key<int>("tuner.init", "random trials before the surrogate", [](R& c) -> int& { return c.bench.hpo_init; }));
    v.push_back(str_key("tuner.space", "desk or full", [](R& c) -> std::string& { return c.bench.space; }));
    v.push_back(num_key<std::size_t>("tuner.train_focal", "training samples per trial, 0 = all",
                                     [](R& c) -> std::size_t& { return c.bench.hpo_train_focal; }));
    v.push_back(num_key<int>("tuner.max_epochs", "", [](R& c) -> int& { return c.bench.hpo_max_epochs; }));
    // bench
    v.push_back(bool_key("bench.paper_scale", "original-study preset", [](R& c) -> bool& { return c.paper_scale; }));
    v.push_back(list_key<int>("bench.models", "models of the ablate command", [](R& c) -> std::vector<int>& { return c.models; }));
    v.push_back(num_key<std::uint64_t>("bench.seed", "", [](R& c) -> std::uint64_t& { return c.bench.seed; }));
    v.push_back(num_key<int>("bench.repetitions", "", [](R& c) -> int& { return c.bench.repetitions; }));
    v.push_back(num_key<int>("bench.seq_len", "history length", [](R& c) -> int& { return c.bench.seq_len; }));
    v.push_back(bool_key("bench.momentary_context", "add the t0 context step", [](R& c) -> bool& { return c.bench.momentary_context; }));
    v.push_back(num_key<std::size_t>("bench.focal_train", "0 = all", [](R& c) -> std::size_t& { return c.bench.focal.train; }));
    v.push_back(num_key<std::size_t>("bench.focal_validation", "0 = all", [](R& c) -> std::size_t& { return c.bench.focal.validation; }));
    v.push_back(num_key<std::size_t>("bench.focal_test", "0 = all", [](R& c) -> std::size_t& { return c.bench.focal.test; }));
    v.push_back(list_key<int>("bench.sweep_lengths", "", [](R& c) -> std::vector<int>& { return c.bench.sweep_lengths; }));
    v.push_back(list_key<std::string>("bench.sweep_channels", "behavioral and/or context",
                                      [](R& c) -> std::vector<std::string>& { return c.bench.sweep_channels; }));
    // explain
    v.push_back(str_key("explain.mode", "sampled or exact", [](R& c) -> std::string& { return c.explain.mode; }));
    v.push_back(num_key<int>("explain.permutations", "", [](R& c) -> int& { return c.explain.permutations; }));
    v.push_back(num_key<int>("explain.background", "background rows", [](R& c) -> int& { return c.explain.background; }));
    v.push_back(num_key<int>("explain.samples", "explained test samples", [](R& c) -> int& { return c.explain.samples; }));
    v.push_back(num_key<int>("explain.model", "8 or 9", [](R& c) -> int& { return c.explain.model; }));
    v.push_back(num_key<std::uint64_t>("explain.seed", "", [](R& c) -> std::uint64_t& { return c.explain.seed; }));
    // output
    v.push_back(str_key("output.dir", "parent of timestamped run directories", [](R& c) -> std::string& { return c.output_dir; }));
    return v;
  }();
  return k;
}

inline const Key& find_key(const std::string& name) {
  for (const auto& k : keys())
    if (k.name == name) return k;
  throw InvalidArgument("config: unknown key '" + name + "'");
}

/// Preset of the original study.
inline void apply_paper_scale(RunConfig& c) {
  const int jobs = c.bench.jobs;
  const bool rt = c.bench.record_time;
  c.bench = bench::BenchConfig::paper_scale();
  c.bench.jobs = jobs;
  c.bench.record_time = rt;
  c.explain.samples = 20000;
  c.paper_scale = true;
}

using Assignments = std::vector<std::pair<std::string, std::string>>;

/// Parses "key = value" lines; '#' starts a comment.
inline Assignments parse_text(std::string_view text, const std::string& source = "config") {
  Assignments out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string line(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidArgument(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    out.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return out;
}

inline std::pair<std::string, std::string> parse_assignment(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos) throw InvalidArgument("--set expects key=value, got '" + s + "'");
  return {detail::trim(s.substr(0, eq)), detail::trim(s.substr(eq + 1))};
}

inline void validate(const RunConfig& c) {
  if (c.synth.n_users < 1) throw InvalidArgument("config: synthgen.users must be >= 1");
  if (c.synth.span_days < 1) throw InvalidArgument("config: synthgen.days must be >= 1");
  if (c.synth.n_zips < 1) throw InvalidArgument("config: synthgen.zips must be >= 1");
  const auto& f = c.prepare.fractions;
  if (f.train <= 0 || f.validation < 0 || f.test < 0 || std::abs(f.train + f.validation + f.test - 1.0) > 1e-9)
    throw InvalidArgument("config: split fractions must be non-negative and sum to 1");
  for (int m : c.models)
    if (m < 1 || m > 9) throw InvalidArgument("config: bench.models entries must lie in 1..9");
  if (c.train_model < 1 || c.train_model > 9) throw InvalidArgument("config: training.model must lie in 1..9");
  if (c.explain.mode != "sampled" && c.explain.mode != "exact")
    throw InvalidArgument("config: explain.mode must be 'sampled' or 'exact'");
  if (c.explain.permutations < 1 || c.explain.background < 1 || c.explain.samples < 1)
    throw InvalidArgument("config: explain budgets must be >= 1");
  if (c.explain.model != 8 && c.explain.model != 9) throw InvalidArgument("config: explain.model must be 8 or 9");
  c.bench.validate();
}

/// defaults, then the preset when requested, then file keys, then overrides.
inline RunConfig resolve(const Assignments& file, const Assignments& overrides, bool paper_scale_flag) {
  RunConfig c;
  bool preset = paper_scale_flag;
  for (const auto& [k, v] : file)
    if (k == "bench.paper_scale") preset = preset || detail::parse_bool(k, v);
  for (const auto& [k, v] : overrides)
    if (k == "bench.paper_scale") preset = detail::parse_bool(k, v);
  if (preset) apply_paper_scale(c);
  for (const auto& a : {&file, &overrides})
    for (const auto& [k, v] : *a) find_key(k).set(c, v);
  if (preset) c.paper_scale = true;
  validate(c);
  return c;
}

inline std::string to_text(const RunConfig& c) {
  std::string out;
  std::string section;
  for (const auto& k : keys()) {
    const std::string s = k.name.substr(0, k.name.find('.'));
    if (s != section) {
      if (!section.empty()) out += "\n";
      out += "# " + s + "\n";
      section = s;
    }
    out += k.name + " = " + k.get(c) + "\n";
  }
  return out;
}

inline std::string config_hash(const RunConfig& c) { return hex64(fnv1a64(to_text(c))); }

}  // namespace ctxeng::cli
