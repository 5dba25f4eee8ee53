#pragma once

// Sequential model-based search: random starting points, then expected
// improvement under a random-forest surrogate.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <ctime>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "ctxeng/common.hpp"
#include "ctxeng/synthgen/io.hpp"
#include "ctxeng/tuner/forest.hpp"
#include "ctxeng/tuner/space.hpp"

namespace ctxeng::tuner {

enum class TrialStatus { ok, failed };

struct Trial {
  std::size_t index = 0;
  Config config;
  double objective = std::numeric_limits<double>::infinity();  // validation RMSE
  TrialStatus status = TrialStatus::ok;
  std::uint64_t seed = 0;
  double wall_time_s = 0.0;
  std::string started_at, finished_at;
  std::string message;
};

inline void to_json(nlohmann::json& j, const Trial& t) {
  j = {{"index", t.index},
       {"config", t.config},
       {"objective", std::isfinite(t.objective) ? nlohmann::json(t.objective) : nlohmann::json(nullptr)},
       {"status", t.status == TrialStatus::ok ? "ok" : "failed"},
       {"seed", t.seed}};
  if (!t.started_at.empty()) {
    j["started_at"] = t.started_at;
    j["finished_at"] = t.finished_at;
    j["wall_time_s"] = t.wall_time_s;
  }
  if (!t.message.empty()) j["message"] = t.message;
}

inline void from_json(const nlohmann::json& j, Trial& t) {
  t.index = j.at("index").get<std::size_t>();
  t.config = j.at("config").get<Config>();
  t.objective = j.at("objective").is_null() ? std::numeric_limits<double>::infinity() : j.at("objective").get<double>();
  t.status = j.at("status").get<std::string>() == "ok" ? TrialStatus::ok : TrialStatus::failed;
  t.seed = j.at("seed").get<std::uint64_t>();
  t.started_at = j.value("started_at", "");
  t.finished_at = j.value("finished_at", "");
  t.wall_time_s = j.value("wall_time_s", 0.0);
  t.message = j.value("message", "");
}

struct ProposalOptions {
  int n_init = 3;
  ForestOptions forest;
};

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Expected improvement below `best` for a prediction N(mu, sigma^2).
inline double expected_improvement(double mu, double sigma, double best) {
  const double imp = best - mu;
  if (sigma <= 0.0) return std::max(imp, 0.0);
  const double z = imp / sigma;
  return imp * normal_cdf(z) + sigma * normal_pdf(z);
}

/// Next configuration to evaluate, or nullopt when every configuration has
/// been tried or is pending.
inline std::optional<Config> propose_next(const std::vector<Trial>& history, const SearchSpace& space,
                                          std::uint64_t seed, const ProposalOptions& opt = {},
                                          const std::vector<Config>& pending = {}) {
  const auto all = space.enumerate();
  std::unordered_set<std::string> tried;
  for (const auto& t : history) tried.insert(t.config.key());
  for (const auto& c : pending) tried.insert(c.key());
  std::vector<std::size_t> open;
  for (std::size_t i = 0; i < all.size(); ++i)
    if (!tried.count(all[i].key())) open.push_back(i);
  if (open.empty()) return std::nullopt;

  Rng rng = make_rng(seed, 0x9e0905a1, history.size() + pending.size());
  auto pick = [&](const std::vector<std::size_t>& from) {
    return all[from[std::min(from.size() - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(from.size())))]];
  };
  if (static_cast<int>(history.size()) < opt.n_init) return pick(open);

  // Failed trials stand in at 1.5x the worst observed objective.
  double worst = -std::numeric_limits<double>::infinity(), best = std::numeric_limits<double>::infinity();
  for (const auto& t : history)
    if (t.status == TrialStatus::ok && std::isfinite(t.objective)) {
      worst = std::max(worst, t.objective);
      best = std::min(best, t.objective);
    }
  if (!std::isfinite(worst)) return pick(open);
  std::vector<std::vector<double>> X;
  std::vector<double> y;
  for (const auto& t : history) {
    X.push_back(space.encode(t.config));
    y.push_back(t.status == TrialStatus::ok && std::isfinite(t.objective) ? t.objective : worst * 1.5);
  }
  RandomForest forest;
  forest.fit(X, y, opt.forest, rng);

  double top = -1.0;
  std::vector<std::size_t> argmax;
  for (std::size_t i : open) {
    const auto [mu, sd] = forest.predict(space.encode(all[i]));
    const double ei = expected_improvement(mu, sd, best);
    if (ei > top) {
      top = ei;
      argmax.assign(1, i);
    } else if (ei == top) {
      argmax.push_back(i);
    }
  }
  return pick(argmax);
}

using TrainFn = std::function<double(const Config&, std::uint64_t trial_seed)>;

struct SearchOptions {
  int n_init = 3;
  int n_iter = 100;
  std::uint64_t seed = 0;
  ForestOptions forest;
  std::string history_path;  // append-only JSONL; existing trials are resumed
  bool record_time = true;
  std::function<void(const Trial&)> on_trial;
};

struct SearchResult {
  std::vector<Trial> history;
  std::optional<std::size_t> best;  // index into history

  const Trial& best_trial() const {
    if (!best) throw InvariantError("search: no trial completed successfully");
    return history[*best];
  }
};

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::vector<Trial> read_history(const std::string& path, const SearchSpace& space) {
  std::vector<Trial> out;
  if (!std::filesystem::exists(path)) return out;
  const std::string text = synthgen::io_detail::read_file(path);
  synthgen::io_detail::for_each_line(text, [&](std::string_view line, std::size_t lineno) {
    try {
      out.push_back(nlohmann::json::parse(line).get<Trial>());
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path + ":" + std::to_string(lineno) + ": bad trial record: " + e.what());
    }
    if (!space.contains(out.back().config))
      throw InvalidArgument(path + ":" + std::to_string(lineno) + ": trial configuration is outside the search space");
    if (out.back().index != out.size() - 1)
      throw IoError(path + ":" + std::to_string(lineno) + ": trial indices are not consecutive");
  });
  return out;
}

inline std::optional<std::size_t> best_index(const std::vector<Trial>& h) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < h.size(); ++i)
    if (h[i].status == TrialStatus::ok && std::isfinite(h[i].objective) && (!best || h[i].objective < h[*best].objective))
      best = i;
  return best;
}

inline SearchResult run_search(const SearchSpace& space, const TrainFn& train_fn, const SearchOptions& opt = {}) {
  if (opt.n_iter < 0 || opt.n_init < 0) throw InvalidArgument("search: n_iter and n_init must be non-negative");
  SearchResult res;
  std::ofstream log;
  if (!opt.history_path.empty()) {
    res.history = read_history(opt.history_path, space);
    log.open(opt.history_path, std::ios::app | std::ios::binary);
    if (!log) throw IoError("cannot append to " + opt.history_path);
  }
  ProposalOptions popt{opt.n_init, opt.forest};
  while (static_cast<int>(res.history.size()) < opt.n_iter) {
    auto cfg = propose_next(res.history, space, opt.seed, popt);
    if (!cfg) break;
    Trial t;
    t.index = res.history.size();
    t.config = *cfg;
    t.seed = substream_seed(opt.seed, 0x7121a1, t.index);
    const auto t0 = std::chrono::steady_clock::now();
    if (opt.record_time) t.started_at = utc_timestamp();
    try {
      t.objective = train_fn(t.config, t.seed);
      if (!std::isfinite(t.objective)) {
        t.status = TrialStatus::failed;
        t.message = "non-finite objective";
      }
    } catch (const DivergenceError& e) {
      t.status = TrialStatus::failed;
      t.message = e.what();
    }
    if (t.status == TrialStatus::failed) t.objective = std::numeric_limits<double>::infinity();
    if (opt.record_time) {
      t.finished_at = utc_timestamp();
      t.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    res.history.push_back(t);
    if (log.is_open()) {
      log << nlohmann::json(t).dump() << '\n';
      log.flush();
    }
    if (opt.on_trial) opt.on_trial(t);
  }
  res.best = best_index(res.history);
  return res;
}

}  // namespace ctxeng::tuner
