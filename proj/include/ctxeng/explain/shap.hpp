#pragma once

// Shapley values with an interventional value function:
//   v(S) = mean over background rows b of f(x on S, b elsewhere).
// Exact mode enumerates every coalition of feature groups. Sampled mode walks
// random permutations, each forward and reversed, against one background row.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ctxeng/common.hpp"

namespace ctxeng::explain {

/// Batch model: one input per row, one output per row.
using ModelFn = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

struct Groups {
  std::vector<std::string> names;
  std::vector<std::vector<std::size_t>> members;  // column indices per group

  std::size_t size() const { return names.size(); }

  static Groups singletons(const std::vector<std::string>& column_names) {
    Groups g;
    for (std::size_t i = 0; i < column_names.size(); ++i) {
      g.names.push_back(column_names[i]);
      g.members.push_back({i});
    }
    return g;
  }

  static Groups singletons(std::size_t d) {
    std::vector<std::string> n;
    for (std::size_t i = 0; i < d; ++i) n.push_back("f" + std::to_string(i + 1));
    return singletons(n);
  }

  /// Every column in exactly one group.
  void validate(std::size_t d) const {
    if (names.size() != members.size()) throw InvalidArgument("shap: group names and members differ in length");
    std::vector<int> seen(d, 0);
    for (const auto& m : members) {
      if (m.empty()) throw InvalidArgument("shap: empty feature group");
      for (auto c : m) {
        if (c >= d) throw InvalidArgument("shap: group column out of range");
        ++seen[c];
      }
    }
    for (std::size_t c = 0; c < d; ++c)
      if (seen[c] != 1) throw InvalidArgument("shap: column " + std::to_string(c) + " is not in exactly one group");
  }
};

inline constexpr std::size_t kMaxExactGroups = 15;

struct ShapRow {
  Eigen::VectorXd phi;
  Eigen::VectorXd se;  // zero in exact mode
  double base_value = 0.0;
  double fx = 0.0;
};

namespace detail {

inline void check_inputs(const Eigen::VectorXd& x, const Eigen::MatrixXd& background, const Groups& g) {
  if (background.rows() == 0) throw InvalidArgument("shap: background must be non-empty");
  if (background.cols() != x.size()) throw InvalidArgument("shap: background and sample widths differ");
  g.validate(static_cast<std::size_t>(x.size()));
}

inline double eval_one(const ModelFn& f, const Eigen::VectorXd& x) {
  Eigen::MatrixXd m = x.transpose();
  return f(m)[0];
}

}  // namespace detail

/// Exact Shapley values by enumeration of all 2^d group coalitions.
inline ShapRow exact_shap(const ModelFn& f, const Eigen::VectorXd& x, const Eigen::MatrixXd& background,
                          const Groups& groups) {
  detail::check_inputs(x, background, groups);
  const std::size_t d = groups.size();
  if (d > kMaxExactGroups)
    throw InvalidArgument("exact shap supports at most " + std::to_string(kMaxExactGroups) + " feature groups, got " +
                          std::to_string(d) + "; use sampled mode");
  const std::size_t n_coal = std::size_t{1} << d;
  const Eigen::Index B = background.rows();
  std::vector<double> v(n_coal);
  Eigen::MatrixXd z(B, x.size());
  for (std::size_t S = 0; S < n_coal; ++S) {
    z = background;
    for (std::size_t g = 0; g < d; ++g)
      if (S >> g & 1)
        for (auto c : groups.members[g]) z.col(static_cast<Eigen::Index>(c)).setConstant(x[static_cast<Eigen::Index>(c)]);
    v[S] = f(z).mean();
  }
  // w(k) = k! (d-k-1)! / d!
  std::vector<double> w(d);
  for (std::size_t k = 0; k < d; ++k)
    w[k] = std::exp(std::lgamma(double(k) + 1) + std::lgamma(double(d - k)) - std::lgamma(double(d) + 1));
  ShapRow r;
  r.phi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  r.se = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  for (std::size_t S = 0; S < n_coal; ++S) {
    const auto k = static_cast<std::size_t>(std::popcount(S));
    for (std::size_t g = 0; g < d; ++g)
      if (!(S >> g & 1)) r.phi[static_cast<Eigen::Index>(g)] += w[k] * (v[S | (std::size_t{1} << g)] - v[S]);
  }
  r.base_value = v[0];
  r.fx = v[n_coal - 1];
  return r;
}

struct SampledOptions {
  int n_permutations = 500;  // each used forward and reversed
  std::uint64_t seed = 0;
  int chunk = 16;  // permutations evaluated per model call
};

/// Antithetic permutation estimate with per-group standard errors taken
/// across the permutation pairs. Efficiency holds exactly when
/// n_permutations is a multiple of the background size.
inline ShapRow sampled_shap(const ModelFn& f, const Eigen::VectorXd& x, const Eigen::MatrixXd& background,
                            const Groups& groups, const SampledOptions& opt) {
  detail::check_inputs(x, background, groups);
  if (opt.n_permutations < 1) throw InvalidArgument("sampled shap: n_permutations must be >= 1");
  const std::size_t d = groups.size();
  const Eigen::Index D = static_cast<Eigen::Index>(d);
  const auto B = static_cast<std::size_t>(background.rows());
  Rng rng = make_rng(opt.seed, 0x54a9);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(D), sum2 = Eigen::VectorXd::Zero(D);
  std::vector<std::size_t> perm(d);
  const int chunk = std::max(1, opt.chunk);
  const Eigen::Index walk = D + 1;
  // Background rows are visited in reshuffled cycles so each row is used
  // equally often.
  std::vector<std::size_t> rows(B);
  std::size_t pair_index = 0;

  for (int done = 0; done < opt.n_permutations; done += chunk) {
    const int m = std::min(chunk, opt.n_permutations - done);
    Eigen::MatrixXd z(static_cast<Eigen::Index>(m) * 2 * walk, x.size());
    std::vector<std::vector<std::size_t>> perms(static_cast<std::size_t>(m));
    for (int p = 0; p < m; ++p) {
      std::iota(perm.begin(), perm.end(), 0);
      for (std::size_t i = d; i > 1; --i) {
        const auto j = std::min(i - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i)));
        std::swap(perm[i - 1], perm[j]);
      }
      if (pair_index % B == 0) {
        std::iota(rows.begin(), rows.end(), 0);
        for (std::size_t i = B; i > 1; --i) {
          const auto j = std::min(i - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i)));
          std::swap(rows[i - 1], rows[j]);
        }
      }
      const std::size_t b = rows[pair_index++ % B];
      perms[static_cast<std::size_t>(p)] = perm;
      for (int dir = 0; dir < 2; ++dir) {
        const Eigen::Index base = (static_cast<Eigen::Index>(p) * 2 + dir) * walk;
        Eigen::VectorXd cur = background.row(static_cast<Eigen::Index>(b)).transpose();
        z.row(base) = cur.transpose();
        for (std::size_t s = 0; s < d; ++s) {
          const std::size_t g = dir == 0 ? perm[s] : perm[d - 1 - s];
          for (auto c : groups.members[g]) cur[static_cast<Eigen::Index>(c)] = x[static_cast<Eigen::Index>(c)];
          z.row(base + static_cast<Eigen::Index>(s) + 1) = cur.transpose();
        }
      }
    }
    const Eigen::VectorXd out = f(z);
    Eigen::VectorXd pair(D);
    for (int p = 0; p < m; ++p) {
      pair.setZero();
      const auto& pm = perms[static_cast<std::size_t>(p)];
      for (int dir = 0; dir < 2; ++dir) {
        const Eigen::Index base = (static_cast<Eigen::Index>(p) * 2 + dir) * walk;
        for (std::size_t s = 0; s < d; ++s) {
          const std::size_t g = dir == 0 ? pm[s] : pm[d - 1 - s];
          pair[static_cast<Eigen::Index>(g)] += 0.5 * (out[base + static_cast<Eigen::Index>(s) + 1] - out[base + static_cast<Eigen::Index>(s)]);
        }
      }
      sum += pair;
      sum2 += pair.cwiseProduct(pair);
    }
  }
  const double n = opt.n_permutations;
  ShapRow r;
  r.phi = sum / n;
  if (n > 1) {
    const Eigen::VectorXd var = ((sum2 - sum.cwiseProduct(sum) / n) / (n - 1)).cwiseMax(0.0);
    r.se = (var / n).cwiseSqrt();
  } else {
    r.se = Eigen::VectorXd::Constant(D, std::numeric_limits<double>::infinity());
  }
  r.base_value = f(background).mean();
  r.fx = detail::eval_one(f, x);
  return r;
}

enum class ShapMode { exact, sampled };

struct ShapConfig {
  Eigen::MatrixXd background;
  int n_permutations = 500;
  ShapMode mode = ShapMode::sampled;
  Groups groups;  // empty = one group per column
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct ShapResult {
  std::vector<std::string> group_names;
  Eigen::MatrixXd phi;  // samples x groups
  Eigen::MatrixXd se;   // samples x groups
  Eigen::VectorXd fx;
  double base_value = 0.0;
  ShapMode mode = ShapMode::sampled;
};

/// Shapley values for every row of `samples`. Sample i uses seed
/// (config.seed, i), so results do not depend on evaluation order.
inline ShapResult explain_samples(const ModelFn& f, const Eigen::MatrixXd& samples, const ShapConfig& cfg,
                          const std::function<void(std::size_t)>& progress = {}) {
  Groups g = cfg.groups.size() ? cfg.groups : Groups::singletons(static_cast<std::size_t>(samples.cols()));
  if (samples.rows() == 0) throw InvalidArgument("shap: no samples to explain");
  ShapResult res;
  res.group_names = g.names;
  res.mode = cfg.mode;
  const Eigen::Index n = samples.rows(), d = static_cast<Eigen::Index>(g.size());
  res.phi.resize(n, d);
  res.se.resize(n, d);
  res.fx.resize(n);
  parallel_for(cfg.jobs, static_cast<std::size_t>(n), [&](std::size_t k) {
    const auto i = static_cast<Eigen::Index>(k);
    const Eigen::VectorXd x = samples.row(i).transpose();
    const ShapRow r = cfg.mode == ShapMode::exact
                          ? exact_shap(f, x, cfg.background, g)
                          : sampled_shap(f, x, cfg.background, g,
                                         {cfg.n_permutations, substream_seed(cfg.seed, 0x5a4b, k)});
    res.phi.row(i) = r.phi.transpose();
    res.se.row(i) = r.se.transpose();
    res.fx[i] = r.fx;
    if (progress) progress(k);
  });
  res.base_value = f(cfg.background).mean();
  return res;
}

/// Background rows drawn without replacement, allocated to strata in
/// proportion to their size (largest remainders).
inline std::vector<std::size_t> stratified_sample(const std::vector<int>& strata, std::size_t k, std::uint64_t seed) {
  const std::size_t n = strata.size();
  if (k >= n) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  std::vector<int> keys(strata);
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  std::vector<std::vector<std::size_t>> members(keys.size());
  for (std::size_t i = 0; i < n; ++i)
    members[static_cast<std::size_t>(std::lower_bound(keys.begin(), keys.end(), strata[i]) - keys.begin())].push_back(i);
  std::vector<std::size_t> quota(keys.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t given = 0;
  for (std::size_t s = 0; s < keys.size(); ++s) {
    const double exact = static_cast<double>(k) * static_cast<double>(members[s].size()) / static_cast<double>(n);
    quota[s] = static_cast<std::size_t>(exact);
    given += quota[s];
    rem.push_back({-(exact - static_cast<double>(quota[s])), s});
  }
  std::sort(rem.begin(), rem.end());
  for (std::size_t i = 0; given < k; ++i, ++given) ++quota[rem[i % rem.size()].second];
  Rng rng = make_rng(seed, 0xb6);
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < keys.size(); ++s) {
    auto& m = members[s];
    for (std::size_t i = 0; i < quota[s] && i < m.size(); ++i) {
      const auto j = i + std::min(m.size() - i - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(m.size() - i)));
      std::swap(m[i], m[j]);
      out.push_back(m[i]);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace ctxeng::explain
