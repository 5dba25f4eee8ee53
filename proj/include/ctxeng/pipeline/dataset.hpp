#pragma once

// Person-level splits, the preprocessed feature matrix bundle and its file
// format, and sequence sample construction.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctxeng/common.hpp"
#include "ctxeng/pipeline/features.hpp"
#include "ctxeng/pipeline/session_hours.hpp"
#include "ctxeng/synthgen/io.hpp"
#include "ctxeng/synthgen/types.hpp"

namespace ctxeng::pipeline {

enum class Split : int { train = 0, validation = 1, test = 2 };

inline constexpr std::string_view split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

struct SplitFractions {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

struct UserSplit {
  std::map<std::string, Split> assignment;
  std::array<std::vector<std::string>, 3> users;  // indexed by Split
  std::array<std::size_t, 3> hour_counts{};       // session hours per split

  const std::vector<std::string>& of(Split s) const { return users[static_cast<std::size_t>(s)]; }
};

/// Assigns whole users to train/validation/test. Deterministic in seed.
inline UserSplit split_by_user(std::span<const SessionHour> hours, const SplitFractions& f, std::uint64_t seed) {
  const double total = f.train + f.validation + f.test;
  if (std::abs(total - 1.0) > 1e-9 || f.train < 0 || f.validation < 0 || f.test < 0)
    throw InvalidArgument("split_by_user: fractions must be non-negative and sum to 1");
  std::vector<std::string> ids;
  for (const auto& h : hours)
    if (ids.empty() || ids.back() != h.user_id) ids.push_back(h.user_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < 3) throw InvalidArgument("split_by_user: fewer users than splits");

  Rng rng = make_rng(seed, 0x5e17);
  for (std::size_t i = ids.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(ids[i - 1], ids[std::min(j, i - 1)]);
  }
  const std::size_t n = ids.size();
  auto n_val = static_cast<std::size_t>(std::llround(f.validation * static_cast<double>(n)));
  auto n_test = static_cast<std::size_t>(std::llround(f.test * static_cast<double>(n)));
  n_val = std::clamp<std::size_t>(n_val, 1, n - 2);
  n_test = std::clamp<std::size_t>(n_test, 1, n - 1 - n_val);
  const std::size_t n_train = n - n_val - n_test;

  UserSplit out;
  for (std::size_t i = 0; i < n; ++i) {
    const Split s = i < n_train ? Split::train : (i < n_train + n_val ? Split::validation : Split::test);
    out.assignment[ids[i]] = s;
    out.users[static_cast<std::size_t>(s)].push_back(ids[i]);
  }
  for (auto& u : out.users) std::sort(u.begin(), u.end());
  for (const auto& h : hours) out.hour_counts[static_cast<std::size_t>(out.assignment.at(h.user_id))]++;
  return out;
}

inline constexpr std::string_view kContextCountNote =
    "context columns total 55 after one-hot encoding (19 weather + 19 census + 5 temporal + 11 location + "
    "1 connectivity); the source study reports 56 context features and 183 predictors, which the "
    "enumerated feature list does not reproduce, so the manifest asserts 182";

/// Preprocessed predictors for every retained session hour, sorted by
/// (user, hour). Feature values are min-max scaled with training ranges.
struct FeatureMatrixBundle {
  FeatureSchema schema;
  ScalerState scaler;
  PipelineOptions options;
  std::vector<std::string> users;  // sorted user ids
  std::vector<Split> user_split;   // parallel to users
  std::vector<std::uint32_t> row_user;
  std::vector<long long> row_hour;
  std::vector<float> targets;
  std::vector<float> features;  // rows x schema.size(), row-major

  std::size_t rows() const { return row_user.size(); }
  std::size_t cols() const { return schema.size(); }
  const float* row(std::size_t r) const { return features.data() + r * cols(); }
  Split split_of_row(std::size_t r) const { return user_split[row_user[r]]; }
};

struct PrepareConfig {
  PipelineOptions options;
  SplitFractions fractions;
  std::uint64_t seed = 42;
  EnrichOptions enrich;
};

/// Full preprocessing: sessionize, enrich, split by person, trim outliers,
/// derive/encode features, scale and compute targets. Every fitted quantity
/// (trim thresholds, count ranges, min-max ranges, imputation means) comes
/// from training users only.
inline FeatureMatrixBundle prepare(const synthgen::EventLog& log, const synthgen::ContextTables& tables,
                                   const PrepareConfig& cfg) {
  std::vector<SessionHour> hours = enrich_context(sessionize_hourly(log), tables, cfg.enrich);
  const UserSplit split = split_by_user(hours, cfg.fractions, cfg.seed);

  std::vector<SessionHour> train_rows;
  for (const auto& h : hours)
    if (split.assignment.at(h.user_id) == Split::train) train_rows.push_back(h);
  const auto thresholds = fit_trim_thresholds(train_rows, cfg.options.trim_quantile);
  train_rows = apply_trim(std::move(train_rows), thresholds);
  hours = apply_trim(std::move(hours), thresholds);
  const CountRanges ranges = fit_count_ranges(train_rows);
  train_rows.clear();
  train_rows.shrink_to_fit();

  FeatureMatrixBundle b;
  b.schema = full_schema(cfg.options.extended_schema);
  b.options = cfg.options;
  b.users = split.of(Split::train);
  for (auto s : {Split::validation, Split::test})
    b.users.insert(b.users.end(), split.of(s).begin(), split.of(s).end());
  std::sort(b.users.begin(), b.users.end());
  std::map<std::string, std::uint32_t> user_index;
  for (std::size_t i = 0; i < b.users.size(); ++i) {
    user_index[b.users[i]] = static_cast<std::uint32_t>(i);
    b.user_split.push_back(split.assignment.at(b.users[i]));
  }

  const std::size_t d = b.schema.size();
  b.features.reserve(hours.size() * d);
  std::vector<double> row;
  row.reserve(d);
  for (const auto& h : hours) {
    row.clear();
    derive_behavioral_row(h, ranges, cfg.options, row);
    encode_context_row(h, row);
    if (row.size() != d) throw InvariantError("prepare: row width does not match the schema");
    for (double v : row) b.features.push_back(static_cast<float>(v));
    b.row_user.push_back(user_index.at(h.user_id));
    b.row_hour.push_back(h.hour_index);
    b.targets.push_back(static_cast<float>(compute_target(h, ranges, cfg.options.target_epsilon)));
  }
  hours.clear();
  hours.shrink_to_fit();

  std::vector<std::size_t> train_idx;
  for (std::size_t r = 0; r < b.rows(); ++r)
    if (b.split_of_row(r) == Split::train) train_idx.push_back(r);
  b.scaler = fit_scaler_rows(b.schema, train_idx.size(), [&](std::size_t r, std::size_t c) {
    return static_cast<double>(b.features[train_idx[r] * d + c]);
  });
  b.scaler.trim_thresholds = thresholds;
  b.scaler.trim_quantile = cfg.options.trim_quantile;
  b.scaler.count_ranges = ranges;
  for (std::size_t r = 0; r < b.rows(); ++r)
    for (std::size_t c = 0; c < d; ++c) {
      float& v = b.features[r * d + c];
      v = static_cast<float>(scale_value(b.scaler, c, static_cast<double>(v)));
    }
  return b;
}

// ---------------------------------------------------------------------------
// Bundle file: 8-byte magic, u64 little-endian header length, JSON header,
// then rows of little-endian float32: user_index, hour_index, target, features.

inline constexpr char kBundleMagic[8] = {'C', 'T', 'X', 'B', 'N', 'D', 'L', '1'};

inline nlohmann::json schema_to_json(const FeatureSchema& s) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : s.columns)
    cols.push_back({{"name", c.name}, {"bracket", bracket_name(c.bracket)}, {"kind", kind_name(c.kind)}});
  return {{"schema_version", s.schema_version}, {"columns", cols}, {"manifest", s.manifest()},
          {"fingerprint", s.fingerprint()}};
}

inline FeatureSchema schema_from_json(const nlohmann::json& j) {
  FeatureSchema s;
  s.schema_version = j.at("schema_version").get<int>();
  if (s.schema_version != 1) throw IoError("unsupported schema_version " + std::to_string(s.schema_version));
  for (const auto& c : j.at("columns")) {
    const auto b = parse_bracket(c.at("bracket").get<std::string>());
    const auto k = parse_kind(c.at("kind").get<std::string>());
    if (!b || !k) throw IoError("bad schema column " + c.dump());
    s.columns.push_back({c.at("name").get<std::string>(), *b, *k});
  }
  return s;
}

inline nlohmann::json bundle_header(const FeatureMatrixBundle& b) {
  nlohmann::json split = nlohmann::json::object();
  for (std::size_t i = 0; i < b.users.size(); ++i) split[b.users[i]] = split_name(b.user_split[i]);
  const auto& s = b.scaler;
  nlohmann::json scaler = {
      {"min", s.min},
      {"max", s.max},
      {"impute_mean", s.impute_mean},
      {"scaled", s.scaled},
      {"trim_quantile", s.trim_quantile},
      {"trim_thresholds", s.trim_thresholds},
      {"count_min", s.count_ranges.min},
      {"count_max", s.count_ranges.max},
      {"passive_sum_min", s.count_ranges.passive_sum_min},
      {"passive_sum_max", s.count_ranges.passive_sum_max},
  };
  return {
      {"format", "ctxeng-feature-bundle"},
      {"schema_version", 1},
      {"schema", schema_to_json(b.schema)},
      {"context_count_note", kContextCountNote},
      {"scaler", scaler},
      {"split", split},
      {"users", b.users},
      {"rows", b.rows()},
      {"cols", b.cols()},
      {"meta_columns", {"user_index", "hour_index", "target"}},
      {"options",
       {{"ratio_epsilon", b.options.ratio_epsilon},
        {"target_epsilon", b.options.target_epsilon},
        {"trim_quantile", b.options.trim_quantile},
        {"extended_schema", b.options.extended_schema}}},
      {"dtype", "float32-le"},
  };
}

namespace detail {
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_f32(std::string& out, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
}
inline std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}
inline float get_f32(const unsigned char* p) {
  std::uint32_t u = 0;
  for (int i = 3; i >= 0; --i) u = (u << 8) | p[i];
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}
}  // namespace detail

inline std::string serialize_bundle(const FeatureMatrixBundle& b) {
  const std::string header = bundle_header(b).dump();
  std::string out(kBundleMagic, sizeof kBundleMagic);
  detail::put_u64(out, header.size());
  out += header;
  out.reserve(out.size() + b.rows() * (b.cols() + 3) * 4);
  for (std::size_t r = 0; r < b.rows(); ++r) {
    detail::put_f32(out, static_cast<float>(b.row_user[r]));
    detail::put_f32(out, static_cast<float>(b.row_hour[r]));
    detail::put_f32(out, b.targets[r]);
    const float* x = b.row(r);
    for (std::size_t c = 0; c < b.cols(); ++c) detail::put_f32(out, x[c]);
  }
  return out;
}

inline FeatureMatrixBundle deserialize_bundle(std::string_view bytes, const std::string& source = "bundle") {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kBundleMagic, 8) != 0)
    throw IoError(source + ": not a feature bundle");
  const std::uint64_t hlen = detail::get_u64(p + 8);
  if (bytes.size() < 16 + hlen) throw IoError(source + ": truncated header");
  const auto h = nlohmann::json::parse(bytes.substr(16, hlen));
  FeatureMatrixBundle b;
  b.schema = schema_from_json(h.at("schema"));
  const auto& s = h.at("scaler");
  b.scaler.min = s.at("min").get<std::vector<double>>();
  b.scaler.max = s.at("max").get<std::vector<double>>();
  b.scaler.impute_mean = s.at("impute_mean").get<std::vector<double>>();
  b.scaler.scaled = s.at("scaled").get<std::vector<bool>>();
  b.scaler.trim_quantile = s.at("trim_quantile").get<double>();
  b.scaler.trim_thresholds = s.at("trim_thresholds").get<std::array<double, kNumCounts>>();
  b.scaler.count_ranges.min = s.at("count_min").get<std::array<double, kNumCounts>>();
  b.scaler.count_ranges.max = s.at("count_max").get<std::array<double, kNumCounts>>();
  b.scaler.count_ranges.passive_sum_min = s.at("passive_sum_min").get<double>();
  b.scaler.count_ranges.passive_sum_max = s.at("passive_sum_max").get<double>();
  b.scaler.count_ranges.fitted = true;
  b.scaler.fitted = true;
  const auto& o = h.at("options");
  b.options.ratio_epsilon = o.at("ratio_epsilon").get<double>();
  b.options.target_epsilon = o.at("target_epsilon").get<double>();
  b.options.trim_quantile = o.at("trim_quantile").get<double>();
  b.options.extended_schema = o.at("extended_schema").get<bool>();
  b.users = h.at("users").get<std::vector<std::string>>();
  const auto& split = h.at("split");
  for (const auto& u : b.users) {
    const auto name = split.at(u).get<std::string>();
    b.user_split.push_back(name == "train" ? Split::train : name == "validation" ? Split::validation : Split::test);
  }
  const auto rows = h.at("rows").get<std::size_t>();
  const auto cols = h.at("cols").get<std::size_t>();
  if (cols != b.schema.size()) throw IoError(source + ": column count does not match schema");
  const std::size_t stride = (cols + 3) * 4;
  if (bytes.size() != 16 + hlen + rows * stride) throw IoError(source + ": payload size mismatch");
  const unsigned char* data = p + 16 + hlen;
  b.row_user.resize(rows);
  b.row_hour.resize(rows);
  b.targets.resize(rows);
  b.features.resize(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const unsigned char* q = data + r * stride;
    b.row_user[r] = static_cast<std::uint32_t>(detail::get_f32(q));
    b.row_hour[r] = static_cast<long long>(detail::get_f32(q + 4));
    b.targets[r] = detail::get_f32(q + 8);
    for (std::size_t c = 0; c < cols; ++c) b.features[r * cols + c] = detail::get_f32(q + 12 + 4 * c);
  }
  return b;
}

inline void write_bundle(const FeatureMatrixBundle& b, const std::string& path) {
  synthgen::io_detail::write_file(path, serialize_bundle(b));
}

inline FeatureMatrixBundle read_bundle(const std::string& path) {
  return deserialize_bundle(synthgen::io_detail::read_file(path), path);
}

/// Plain CSV for inspection: user_id, hour_index, split, target, features.
inline void write_bundle_csv(const FeatureMatrixBundle& b, const std::string& path) {
  std::string out = "user_id,hour_index,split,target";
  for (const auto& c : b.schema.columns) out += "," + c.name;
  out += '\n';
  for (std::size_t r = 0; r < b.rows(); ++r) {
    out += b.users[b.row_user[r]];
    out += ',' + std::to_string(b.row_hour[r]) + ',';
    out += split_name(b.split_of_row(r));
    out += ',';
    synthgen::io_detail::append_float(out, b.targets[r]);
    for (std::size_t c = 0; c < b.cols(); ++c) {
      out += ',';
      synthgen::io_detail::append_float(out, b.row(r)[c]);
    }
    out += '\n';
  }
  synthgen::io_detail::write_file(path, out);
}

// ---------------------------------------------------------------------------
// Sequences

struct SequenceOptions {
  int max_len = 25;
  bool include_momentary_context = false;
  std::size_t max_focal = 0;  // 0 = every eligible hour
  std::uint64_t seed = 0;
};

/// One focal hour: target at t0, up to max_len preceding hours (zero
/// pre-padded, mask 0 on padding) and optionally the t0 context row with
/// behavioral columns zeroed.
struct SequenceSample {
  std::string user_id;
  long long hour_index = 0;
  double target = 0.0;
  std::size_t max_len = 0;
  std::size_t n_features = 0;
  std::vector<float> history;         // max_len x n_features
  std::vector<unsigned char> mask;    // max_len
  std::optional<std::vector<float>> momentary;
};

/// Focal hours of one split, referencing the bundle rows. Samples are
/// materialized on demand.
class SequenceSet {
 public:
  SequenceSet() = default;
  SequenceSet(const FeatureMatrixBundle* bundle, Split split, const SequenceOptions& opt)
      : bundle_(bundle), split_(split), opt_(opt) {
    if (opt.max_len < 1) throw InvalidArgument("build_sequences: max_len must be >= 1");
    std::vector<std::size_t> eligible;
    std::size_t first = 0;
    for (std::size_t r = 0; r < bundle->rows(); ++r) {
      if (r == 0 || bundle->row_user[r] != bundle->row_user[r - 1]) first = r;
      if (bundle->split_of_row(r) != split || r == first) continue;
      eligible.push_back(r);
      user_first_.push_back(first);
    }
    if (opt.max_focal > 0 && eligible.size() > opt.max_focal) {
      std::vector<std::size_t> order(eligible.size());
      std::iota(order.begin(), order.end(), 0);
      Rng rng = make_rng(opt.seed, 0xf0ca1, static_cast<std::uint64_t>(split));
      for (std::size_t i = order.size(); i > 1; --i) {
        const auto j = std::min(i - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i)));
        std::swap(order[i - 1], order[j]);
      }
      order.resize(opt.max_focal);
      std::sort(order.begin(), order.end());
      std::vector<std::size_t> rows, firsts;
      for (std::size_t i : order) {
        rows.push_back(eligible[i]);
        firsts.push_back(user_first_[i]);
      }
      eligible.swap(rows);
      user_first_.swap(firsts);
    }
    focal_ = std::move(eligible);
  }

  std::size_t size() const { return focal_.size(); }
  const FeatureMatrixBundle& bundle() const { return *bundle_; }
  const SequenceOptions& options() const { return opt_; }
  Split split() const { return split_; }
  std::size_t focal_row(std::size_t i) const { return focal_[i]; }
  std::size_t user_first_row(std::size_t i) const { return user_first_[i]; }
  float target(std::size_t i) const { return bundle_->targets[focal_[i]]; }

  /// Number of real (unpadded) history steps for sample i at length len.
  std::size_t history_steps(std::size_t i, std::size_t len) const {
    return std::min(len, focal_[i] - user_first_[i]);
  }

  SequenceSample sample(std::size_t i) const {
    const auto& b = *bundle_;
    const std::size_t d = b.cols();
    const auto len = static_cast<std::size_t>(opt_.max_len);
    SequenceSample s;
    s.user_id = b.users[b.row_user[focal_[i]]];
    s.hour_index = b.row_hour[focal_[i]];
    s.target = b.targets[focal_[i]];
    s.max_len = len;
    s.n_features = d;
    s.history.assign(len * d, 0.0f);
    s.mask.assign(len, 0);
    const std::size_t steps = history_steps(i, len);
    for (std::size_t k = 0; k < steps; ++k) {
      const std::size_t slot = len - steps + k;
      const std::size_t r = focal_[i] - steps + k;
      std::copy_n(b.row(r), d, s.history.begin() + static_cast<std::ptrdiff_t>(slot * d));
      s.mask[slot] = 1;
    }
    if (opt_.include_momentary_context) {
      std::vector<float> m(b.row(focal_[i]), b.row(focal_[i]) + d);
      for (std::size_t c = 0; c < d; ++c)
        if (b.schema.columns[c].bracket == Bracket::behavioral) m[c] = 0.0f;
      s.momentary = std::move(m);
    }
    return s;
  }

 private:
  const FeatureMatrixBundle* bundle_ = nullptr;
  Split split_ = Split::train;
  SequenceOptions opt_;
  std::vector<std::size_t> focal_;
  std::vector<std::size_t> user_first_;
};

struct SequenceSplits {
  SequenceSet train;
  SequenceSet validation;
  SequenceSet test;
  std::array<std::size_t, 3> focal_counts() const { return {train.size(), validation.size(), test.size()}; }
};

struct FocalCounts {
  std::size_t train = 0;  // 0 = all eligible
  std::size_t validation = 0;
  std::size_t test = 0;
};

inline SequenceSplits build_sequences(const FeatureMatrixBundle& b, SequenceOptions opt, const FocalCounts& n = {}) {
  SequenceSplits out;
  opt.max_focal = n.train;
  out.train = SequenceSet(&b, Split::train, opt);
  opt.max_focal = n.validation;
  out.validation = SequenceSet(&b, Split::validation, opt);
  opt.max_focal = n.test;
  out.test = SequenceSet(&b, Split::test, opt);
  return out;
}

}  // namespace ctxeng::pipeline
