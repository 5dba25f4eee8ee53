#pragma once

// Summaries of Shapley results and adapters from trained dense models.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ctxeng/bench/inputs.hpp"
#include "ctxeng/explain/shap.hpp"
#include "ctxeng/nnet/train.hpp"
#include "ctxeng/plot/svg.hpp"

namespace ctxeng::explain {

using nnet::NetKind;

struct ImportanceRow {
  std::string group;
  double mean_abs = 0.0;
};

/// Mean |phi| per group, descending; ties in name order.
inline std::vector<ImportanceRow> importance_summary(const ShapResult& r) {
  if (r.phi.rows() == 0) throw InvalidArgument("importance: empty result");
  std::vector<ImportanceRow> out;
  for (Eigen::Index g = 0; g < r.phi.cols(); ++g)
    out.push_back({r.group_names[static_cast<std::size_t>(g)], r.phi.col(g).cwiseAbs().mean()});
  std::stable_sort(out.begin(), out.end(), [](const ImportanceRow& a, const ImportanceRow& b) {
    if (a.mean_abs != b.mean_abs) return a.mean_abs > b.mean_abs;
    return a.group < b.group;
  });
  return out;
}

/// Pearson correlation; nullopt when either side has zero variance.
inline std::optional<double> pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw InvalidArgument("pearson: length mismatch");
  const Eigen::VectorXd da = a.array() - a.mean(), db = b.array() - b.mean();
  const double sa = da.squaredNorm(), sb = db.squaredNorm();
  if (!(sa > 0.0) || !(sb > 0.0)) return std::nullopt;
  return std::clamp(da.dot(db) / std::sqrt(sa * sb), -1.0, 1.0);
}

enum class CorrKind { pearson, point_biserial };

inline const char* corr_kind_name(CorrKind k) { return k == CorrKind::pearson ? "pearson" : "point_biserial"; }

struct CorrelationRow {
  std::string feature;
  std::optional<double> r_value_shap;    // nullopt = undefined
  std::optional<double> r_value_target;
  CorrKind kind = CorrKind::pearson;
};

inline bool is_binary(const Eigen::VectorXd& v) {
  return (v.array() == 0.0 || v.array() == 1.0).all();
}

/// Per input column: correlation of its value with the phi of its group and
/// with the target. Binary columns use the point-biserial coefficient
/// (Pearson on the 0/1 coding).
inline std::vector<CorrelationRow> value_shap_correlations(const ShapResult& r, const Eigen::MatrixXd& X,
                                                           const Eigen::VectorXd& y, const Groups& groups,
                                                           const std::vector<std::string>& column_names) {
  if (X.rows() < 3) throw InvalidArgument("correlations: at least 3 samples are required");
  if (X.rows() != r.phi.rows() || y.size() != X.rows())
    throw InvalidArgument("correlations: sample counts of values, attributions and targets differ");
  if (static_cast<std::size_t>(X.cols()) != column_names.size())
    throw InvalidArgument("correlations: column name count differs from feature width");
  groups.validate(static_cast<std::size_t>(X.cols()));
  std::vector<std::size_t> group_of(static_cast<std::size_t>(X.cols()));
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (auto c : groups.members[g]) group_of[c] = g;
  std::vector<CorrelationRow> out;
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    const Eigen::VectorXd v = X.col(c);
    CorrelationRow row;
    row.feature = column_names[static_cast<std::size_t>(c)];
    row.kind = is_binary(v) ? CorrKind::point_biserial : CorrKind::pearson;
    row.r_value_shap = pearson(v, r.phi.col(static_cast<Eigen::Index>(group_of[static_cast<std::size_t>(c)])));
    row.r_value_target = pearson(v, y);
    out.push_back(row);
  }
  return out;
}

// ---- adapters ----

struct InputColumns {
  std::vector<std::string> names;
  std::vector<pipeline::FeatureKind> kinds;
};

/// Names of the model input positions of a dense input layout.
inline InputColumns input_columns(const bench::InputSpec& spec, const pipeline::FeatureSchema& schema) {
  if (spec.arch != NetKind::dense) throw InvalidArgument("explain: only dense models are supported");
  InputColumns ic;
  for (auto c : spec.columns) {
    ic.names.push_back(schema.columns[c].name);
    ic.kinds.push_back(schema.columns[c].kind);
  }
  for (auto c : spec.momentary) {
    std::string n = schema.columns[c].name;
    if (std::find(ic.names.begin(), ic.names.end(), n) != ic.names.end()) n += "@t0";
    ic.names.push_back(n);
    ic.kinds.push_back(schema.columns[c].kind);
  }
  return ic;
}

/// Family of a column: one-hot weather labels and location category
/// probabilities each form one atomic group.
inline std::string family_of(const std::string& name) {
  if (name.rfind("weather_label_", 0) == 0) return "weather_label";
  if (name.rfind("loc_", 0) == 0 && name.size() > 9 && name.compare(name.size() - 5, 5, "_prob") == 0)
    return "location_category";
  return name;
}

/// Groups in order of first appearance.
inline Groups family_groups(const std::vector<std::string>& names) {
  Groups g;
  std::map<std::string, std::size_t> at;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const std::string f = family_of(names[i]);
    auto [it, fresh] = at.emplace(f, g.names.size());
    if (fresh) {
      g.names.push_back(f);
      g.members.emplace_back();
    }
    g.members[it->second].push_back(i);
  }
  return g;
}

/// Rows of a dense input view as a double matrix, with targets.
inline std::pair<Eigen::MatrixXd, Eigen::VectorXd> dense_rows(const nnet::DataSource<float>& src,
                                                              const std::vector<std::size_t>& idx) {
  if (src.steps() != 1) throw InvalidArgument("explain: only dense inputs are supported");
  nnet::Batch<float> b;
  src.fill(idx, b);
  Eigen::VectorXd y(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) y[static_cast<Eigen::Index>(i)] = src.target(idx[i]);
  return {b.x.cast<double>(), y};
}

/// Evaluation-mode forward pass of a trained dense network in double precision.
inline ModelFn model_function(const nnet::TrainedModel& m) {
  if (m.spec.kind != NetKind::dense) throw InvalidArgument("explain: only dense models are supported");
  auto net = std::make_shared<nnet::Network<double>>(m.spec, m.input_dim);
  if (m.parameters.size() != net->n_params()) throw InvariantError("explain: parameter count mismatch");
  for (std::size_t i = 0; i < m.parameters.size(); ++i)
    net->params()[static_cast<Eigen::Index>(i)] = static_cast<double>(m.parameters[i]);
  const int d = m.input_dim;
  return [net, d](const Eigen::MatrixXd& X) {
    if (X.cols() != d) throw InvalidArgument("explain: model expects " + std::to_string(d) + " inputs");
    nnet::Batch<double> b;
    b.resize(1, static_cast<int>(X.rows()), d);
    b.x = X;
    b.mask.setOnes();
    return Eigen::VectorXd(net->forward(b));
  };
}

// ---- output ----

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string shap_values_csv(const ShapResult& r) {
  std::string out = "sample";
  for (const auto& n : r.group_names) out += "," + n;
  out += ",base_value,prediction\n";
  for (Eigen::Index i = 0; i < r.phi.rows(); ++i) {
    out += std::to_string(i);
    for (Eigen::Index g = 0; g < r.phi.cols(); ++g) out += "," + fmt(r.phi(i, g));
    out += "," + fmt(r.base_value) + "," + fmt(r.fx[i]) + "\n";
  }
  return out;
}

inline std::string importance_csv(const std::vector<ImportanceRow>& rows) {
  std::string out = "group,mean_abs_shap\n";
  for (const auto& r : rows) out += r.group + "," + fmt(r.mean_abs) + "\n";
  return out;
}

/// Undefined coefficients are written as NA.
inline std::string correlations_csv(const std::vector<CorrelationRow>& rows) {
  std::string out = "feature,r_value_shap,r_value_target,kind\n";
  auto cell = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string("NA"); };
  for (const auto& r : rows)
    out += r.feature + "," + cell(r.r_value_shap) + "," + cell(r.r_value_target) + "," + corr_kind_name(r.kind) + "\n";
  return out;
}

inline std::string importance_svg(const std::vector<ImportanceRow>& rows, std::size_t top = 20,
                                  const std::string& title = "Mean |SHAP value|") {
  std::vector<plot::Bar> bars;
  for (std::size_t i = 0; i < std::min(top, rows.size()); ++i) bars.push_back({rows[i].group, rows[i].mean_abs, {}, {}});
  return plot::horizontal_bars(title, "mean |SHAP value|", bars);
}

}  // namespace ctxeng::explain
