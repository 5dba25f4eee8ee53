#pragma once

// Feature schema, behavioral feature derivation, context encoding, scaling,
// outlier trimming and the active-passive target.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ctxeng/common.hpp"
#include "ctxeng/names.hpp"
#include "ctxeng/pipeline/session_hours.hpp"

namespace ctxeng::pipeline {

enum class Bracket { behavioral, census, weather, temporal, location, connectivity };
enum class FeatureKind { raw, normalized, log, derived, onehot, numeric };

inline constexpr std::array<Bracket, 6> kAllBrackets = {Bracket::behavioral, Bracket::census,
                                                        Bracket::weather,    Bracket::temporal,
                                                        Bracket::location,   Bracket::connectivity};

inline constexpr std::string_view bracket_name(Bracket b) {
  switch (b) {
    case Bracket::behavioral: return "behavioral";
    case Bracket::census: return "census";
    case Bracket::weather: return "weather";
    case Bracket::temporal: return "temporal";
    case Bracket::location: return "location";
    case Bracket::connectivity: return "connectivity";
  }
  return "?";
}

inline std::optional<Bracket> parse_bracket(std::string_view name) {
  for (Bracket b : kAllBrackets)
    if (bracket_name(b) == name) return b;
  return std::nullopt;
}

inline constexpr std::string_view kind_name(FeatureKind k) {
  switch (k) {
    case FeatureKind::raw: return "raw";
    case FeatureKind::normalized: return "normalized";
    case FeatureKind::log: return "log";
    case FeatureKind::derived: return "derived";
    case FeatureKind::onehot: return "onehot";
    case FeatureKind::numeric: return "numeric";
  }
  return "?";
}

inline std::optional<FeatureKind> parse_kind(std::string_view name) {
  for (auto k : {FeatureKind::raw, FeatureKind::normalized, FeatureKind::log, FeatureKind::derived,
                 FeatureKind::onehot, FeatureKind::numeric})
    if (kind_name(k) == name) return k;
  return std::nullopt;
}

struct FeatureColumn {
  std::string name;
  Bracket bracket;
  FeatureKind kind;
  bool operator==(const FeatureColumn&) const = default;
};

struct FeatureSchema {
  int schema_version = 1;
  std::vector<FeatureColumn> columns;

  std::size_t size() const { return columns.size(); }

  std::size_t count(Bracket b) const {
    return static_cast<std::size_t>(
        std::count_if(columns.begin(), columns.end(), [b](const FeatureColumn& c) { return c.bracket == b; }));
  }

  std::vector<std::size_t> indices(Bracket b) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i].bracket == b) idx.push_back(i);
    return idx;
  }

  std::map<std::string, std::size_t> manifest() const {
    std::map<std::string, std::size_t> m;
    for (Bracket b : kAllBrackets) m[std::string(bracket_name(b))] = count(b);
    m["total"] = columns.size();
    return m;
  }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i].name == name) return i;
    return std::nullopt;
  }

  /// Stable digest of names, brackets and kinds.
  std::string fingerprint() const {
    std::uint64_t h = fnv1a64("schema_version=" + std::to_string(schema_version));
    for (const auto& c : columns) {
      h = fnv1a64(c.name, h);
      h = fnv1a64(bracket_name(c.bracket), h);
      h = fnv1a64(kind_name(c.kind), h);
    }
    return hex64(h);
  }

  bool operator==(const FeatureSchema&) const = default;
};

inline constexpr std::size_t kNumDerived = 15;
inline constexpr std::array<std::string_view, kNumDerived> kDerivedNames = {
    "chat_act_pass_ratio",  "chat_act_pass_diff",  "snap_act_pass_ratio",   "snap_act_pass_diff",
    "story_act_pass_ratio", "story_act_pass_diff", "comp_score_act",        "comp_score_pass",
    "comp_score_create",    "act_pass_ratio",      "act_pass_diff",         "create_pass_ratio",
    "create_pass_diff",     "act_create_pass_ratio", "act_create_pass_diff",
};

// Components of the composite scores and of the target.
inline constexpr std::array<std::size_t, 4> kActiveComponents = {count::chat_send, count::direct_snap_create,
                                                                 count::direct_snap_send, count::story_snap_post};
inline constexpr std::array<std::size_t, 3> kPassiveComponents = {count::story_story_view,
                                                                  count::discover_snap_view, count::spotlight_view};
inline constexpr std::array<std::size_t, 4> kCreativeComponents = {
    count::creative_tools_open, count::creative_tools_pick, count::filter_lens_swipe, count::filter_filter_swipe};

struct PipelineOptions {
  double ratio_epsilon = 1.0;    // derived count ratios
  double target_epsilon = 0.05;  // active-passive log ratio
  double trim_quantile = 0.999;
  bool extended_schema = false;  // adds raw and log session_time
};

inline FeatureSchema behavioral_schema(bool extended = false) {
  FeatureSchema s;
  auto add = [&](std::string name, FeatureKind k) { s.columns.push_back({std::move(name), Bracket::behavioral, k}); };
  for (auto n : kCountNames) add(std::string(n), FeatureKind::raw);
  for (auto n : kCountNames) add(std::string(n) + "_norm", FeatureKind::normalized);
  for (auto n : kCountNames) add("log_" + std::string(n), FeatureKind::log);
  for (auto n : kCountNames) add("log_" + std::string(n) + "_norm", FeatureKind::log);
  for (auto n : kDerivedNames) add(std::string(n), FeatureKind::derived);
  if (extended) {
    add("session_time", FeatureKind::raw);
    add("log_session_time", FeatureKind::log);
  }
  return s;
}

inline FeatureSchema context_schema() {
  FeatureSchema s;
  for (auto n : kWeatherNumericNames) s.columns.push_back({std::string(n), Bracket::weather, FeatureKind::numeric});
  for (auto l : kWeatherLabels)
    s.columns.push_back({"weather_label_" + std::string(l), Bracket::weather, FeatureKind::onehot});
  for (auto n : kCensusNames) s.columns.push_back({std::string(n), Bracket::census, FeatureKind::numeric});
  for (auto n : kTemporalNames) s.columns.push_back({std::string(n), Bracket::temporal, FeatureKind::numeric});
  for (auto n : kLocationNames) s.columns.push_back({std::string(n), Bracket::location, FeatureKind::numeric});
  s.columns.push_back({"connectivity_fraction", Bracket::connectivity, FeatureKind::numeric});
  return s;
}

inline FeatureSchema full_schema(bool extended = false) {
  FeatureSchema s = behavioral_schema(extended);
  const FeatureSchema c = context_schema();
  s.columns.insert(s.columns.end(), c.columns.begin(), c.columns.end());
  return s;
}

/// Empirical quantile with linear interpolation between order statistics.
inline double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidArgument("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

struct TrimResult {
  std::vector<SessionHour> rows;
  std::array<double, kNumCounts> thresholds{};
};

inline std::array<double, kNumCounts> fit_trim_thresholds(std::span<const SessionHour> rows, double q) {
  std::array<double, kNumCounts> th{};
  if (rows.empty()) {
    th.fill(std::numeric_limits<double>::infinity());
    return th;
  }
  std::vector<double> col(rows.size());
  for (std::size_t k = 0; k < kNumCounts; ++k) {
    for (std::size_t i = 0; i < rows.size(); ++i) col[i] = rows[i].counts[k];
    th[k] = quantile(col, q);
  }
  return th;
}

/// Drops rows where any count strictly exceeds its threshold.
inline std::vector<SessionHour> apply_trim(std::vector<SessionHour> rows, const std::array<double, kNumCounts>& th) {
  std::erase_if(rows, [&](const SessionHour& r) {
    for (std::size_t k = 0; k < kNumCounts; ++k)
      if (r.counts[k] > th[k]) return true;
    return false;
  });
  return rows;
}

/// Thresholds at quantile q of the given (training) rows, applied to them.
inline TrimResult trim_outliers(std::vector<SessionHour> rows, double q = 0.999) {
  TrimResult r;
  r.thresholds = fit_trim_thresholds(rows, q);
  r.rows = apply_trim(std::move(rows), r.thresholds);
  return r;
}

/// Training-set ranges of the raw counts, used to weight composite scores
/// and the target components so they contribute equally.
struct CountRanges {
  bool fitted = false;
  std::array<double, kNumCounts> min{};
  std::array<double, kNumCounts> max{};
  double passive_sum_min = 0.0;
  double passive_sum_max = 0.0;

  double scale(std::size_t k, double v) const {
    const double span = max[k] - min[k];
    return span > 0.0 ? (v - min[k]) / span : 0.0;
  }
  double scale_passive_sum(double v) const {
    const double span = passive_sum_max - passive_sum_min;
    return span > 0.0 ? (v - passive_sum_min) / span : 0.0;
  }
};

inline double passive_sum(const std::array<double, kNumCounts>& c) {
  double s = 0.0;
  for (std::size_t k : kPassiveComponents) s += c[k];
  return s;
}

inline CountRanges fit_count_ranges(std::span<const SessionHour> train) {
  if (train.empty()) throw InvalidArgument("fit_count_ranges: no training rows");
  CountRanges r;
  r.min.fill(std::numeric_limits<double>::infinity());
  r.max.fill(-std::numeric_limits<double>::infinity());
  r.passive_sum_min = std::numeric_limits<double>::infinity();
  r.passive_sum_max = -std::numeric_limits<double>::infinity();
  for (const auto& row : train) {
    for (std::size_t k = 0; k < kNumCounts; ++k) {
      r.min[k] = std::min(r.min[k], row.counts[k]);
      r.max[k] = std::max(r.max[k], row.counts[k]);
    }
    const double p = passive_sum(row.counts);
    r.passive_sum_min = std::min(r.passive_sum_min, p);
    r.passive_sum_max = std::max(r.passive_sum_max, p);
  }
  r.fitted = true;
  return r;
}

struct ActivePassive {
  double active;
  double passive;
};

inline ActivePassive active_passive_scores(const std::array<double, kNumCounts>& c, const CountRanges& r) {
  double a = 0.0;
  for (std::size_t k : kActiveComponents) a += r.scale(k, c[k]);
  return {a / static_cast<double>(kActiveComponents.size()), r.scale_passive_sum(passive_sum(c))};
}

/// Smoothed log ratio of active over passive scores. Written as a difference
/// of logs so swapping the arguments negates the result exactly.
inline double active_passive_target(double active, double passive, double eps = 0.05) {
  return std::log(active + eps) - std::log(passive + eps);
}

inline double compute_target(const SessionHour& h, const CountRanges& ranges, double eps = 0.05) {
  if (!ranges.fitted) throw StateError("compute_target: target scaler not fitted");
  const auto s = active_passive_scores(h.counts, ranges);
  return active_passive_target(s.active, s.passive, eps);
}

/// Appends the behavioral features of one row (127, or 129 extended).
inline void derive_behavioral_row(const SessionHour& h, const CountRanges& ranges, const PipelineOptions& opt,
                                  std::vector<double>& out) {
  if (!(h.session_time > 0.0))
    throw InvariantError("derive_behavioral_features: session_time must be positive for " + h.user_id +
                         " hour " + std::to_string(h.hour_index));
  if (!ranges.fitted) throw StateError("derive_behavioral_features: count ranges not fitted");
  const auto& c = h.counts;
  std::array<double, kNumCounts> norm{};
  for (std::size_t k = 0; k < kNumCounts; ++k) norm[k] = c[k] / h.session_time;
  for (double v : c) out.push_back(v);
  for (double v : norm) out.push_back(v);
  for (double v : c) out.push_back(std::log1p(v));
  for (double v : norm) out.push_back(std::log1p(v));

  const double e = opt.ratio_epsilon;
  auto ratio = [e](double a, double b) { return (a + e) / (b + e); };
  auto mean_scaled = [&](auto const& comps) {
    double s = 0.0;
    for (std::size_t k : comps) s += ranges.scale(k, c[k]);
    return s / static_cast<double>(comps.size());
  };
  const double act = mean_scaled(kActiveComponents);
  const double pass = mean_scaled(kPassiveComponents);
  const double create = mean_scaled(kCreativeComponents);
  const double chat_s = c[count::chat_send], chat_v = c[count::chat_view];
  const double snap_s = c[count::direct_snap_send], snap_v = c[count::direct_snap_view];
  const double story_p = c[count::story_snap_post], story_v = c[count::story_story_view];
  out.push_back(ratio(chat_s, chat_v));
  out.push_back(chat_s - chat_v);
  out.push_back(ratio(snap_s, snap_v));
  out.push_back(snap_s - snap_v);
  out.push_back(ratio(story_p, story_v));
  out.push_back(story_p - story_v);
  out.push_back(act);
  out.push_back(pass);
  out.push_back(create);
  out.push_back(ratio(act, pass));
  out.push_back(act - pass);
  out.push_back(ratio(create, pass));
  out.push_back(create - pass);
  out.push_back(ratio(act + create, pass));
  out.push_back(act + create - pass);
  if (opt.extended_schema) {
    out.push_back(h.session_time);
    out.push_back(std::log1p(h.session_time));
  }
}

struct FeatureRows {
  FeatureSchema schema;
  std::size_t n_rows = 0;
  std::vector<double> values;  // row-major n_rows x schema.size()

  double at(std::size_t r, std::size_t c) const { return values[r * schema.size() + c]; }
};

inline FeatureRows derive_behavioral_features(std::span<const SessionHour> rows, const CountRanges& ranges,
                                              const PipelineOptions& opt = {}) {
  FeatureRows out;
  out.schema = behavioral_schema(opt.extended_schema);
  out.n_rows = rows.size();
  out.values.reserve(rows.size() * out.schema.size());
  for (const auto& h : rows) derive_behavioral_row(h, ranges, opt, out.values);
  return out;
}

/// Appends the 55 context columns of one row. Missing numeric weather and
/// census values stay NaN for the imputation step; a missing label encodes
/// as all zeros.
inline void encode_context_row(const SessionHour& h, std::vector<double>& out) {
  if (!h.enriched) throw StateError("encode_context: row not enriched");
  for (double v : h.weather) out.push_back(v);
  if (h.weather_label && *h.weather_label >= kNumWeatherLabels)
    throw InvariantError("encode_context: unknown weather label index " + std::to_string(*h.weather_label));
  for (std::size_t l = 0; l < kNumWeatherLabels; ++l)
    out.push_back(h.weather_label && *h.weather_label == l ? 1.0 : 0.0);
  for (double v : h.census) out.push_back(v);
  for (double v : h.temporal) out.push_back(v);
  for (double v : h.location) out.push_back(v);
  out.push_back(h.connectivity_fraction);
}

/// One-hot encodes a weather label by name.
inline std::array<double, kNumWeatherLabels> one_hot_label(std::string_view label) {
  const auto idx = weather_label_index(label);
  if (!idx) throw InvariantError("encode_context: unknown weather label '" + std::string(label) + "'");
  std::array<double, kNumWeatherLabels> v{};
  v[*idx] = 1.0;
  return v;
}

inline std::string decode_label(std::span<const double> onehot) {
  for (std::size_t l = 0; l < onehot.size() && l < kNumWeatherLabels; ++l)
    if (onehot[l] == 1.0) return std::string(kWeatherLabels[l]);
  return {};
}

inline FeatureRows encode_context(std::span<const SessionHour> rows) {
  FeatureRows out;
  out.schema = context_schema();
  out.n_rows = rows.size();
  out.values.reserve(rows.size() * out.schema.size());
  for (const auto& h : rows) encode_context_row(h, out.values);
  return out;
}

/// Per-feature min-max state plus the imputation means and trim thresholds
/// fitted alongside it. Everything here comes from training rows only.
struct ScalerState {
  bool fitted = false;
  std::vector<double> min;
  std::vector<double> max;
  std::vector<bool> scaled;           // one-hot columns pass through
  std::vector<double> impute_mean;    // NaN -> training mean
  std::array<double, kNumCounts> trim_thresholds{};
  double trim_quantile = 0.999;
  CountRanges count_ranges;
};

/// Fits min/max (and imputation means) over n_rows training rows read
/// through value(r, c). The caller hands over only the training partition.
template <class ValueAt>
ScalerState fit_scaler_rows(const FeatureSchema& schema, std::size_t n_rows, ValueAt&& value) {
  if (n_rows == 0) throw InvalidArgument("fit_scaler: no training rows");
  const std::size_t d = schema.size();
  ScalerState s;
  s.min.assign(d, std::numeric_limits<double>::infinity());
  s.max.assign(d, -std::numeric_limits<double>::infinity());
  s.scaled.assign(d, true);
  s.impute_mean.assign(d, 0.0);
  std::vector<double> sum(d, 0.0);
  std::vector<std::size_t> n(d, 0);
  for (std::size_t c = 0; c < d; ++c) s.scaled[c] = schema.columns[c].kind != FeatureKind::onehot;
  for (std::size_t r = 0; r < n_rows; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const double v = value(r, c);
      if (std::isnan(v)) continue;
      s.min[c] = std::min(s.min[c], v);
      s.max[c] = std::max(s.max[c], v);
      sum[c] += v;
      ++n[c];
    }
  }
  for (std::size_t c = 0; c < d; ++c) {
    if (n[c] == 0) {
      s.min[c] = s.max[c] = 0.0;
      continue;
    }
    s.impute_mean[c] = sum[c] / static_cast<double>(n[c]);
  }
  s.fitted = true;
  return s;
}

inline ScalerState fit_scaler(const FeatureRows& train) {
  return fit_scaler_rows(train.schema, train.n_rows, [&](std::size_t r, std::size_t c) { return train.at(r, c); });
}

inline double scale_value(const ScalerState& s, std::size_t c, double v) {
  if (std::isnan(v)) v = s.impute_mean[c];
  if (!s.scaled[c]) return v;
  const double span = s.max[c] - s.min[c];
  return span > 0.0 ? (v - s.min[c]) / span : 0.0;
}

/// Min-max transform with training ranges; no clipping, constant columns -> 0.
inline FeatureRows apply_scaler(FeatureRows rows, const ScalerState& s) {
  if (!s.fitted) throw StateError("apply_scaler: scaler not fitted");
  const std::size_t d = rows.schema.size();
  if (s.min.size() != d) throw InvariantError("apply_scaler: scaler width does not match rows");
  for (std::size_t r = 0; r < rows.n_rows; ++r)
    for (std::size_t c = 0; c < d; ++c) rows.values[r * d + c] = scale_value(s, c, rows.values[r * d + c]);
  return rows;
}

}  // namespace ctxeng::pipeline
