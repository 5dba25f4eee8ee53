#pragma once

// Random-forest regressor used as the search surrogate.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "ctxeng/common.hpp"

namespace ctxeng::tuner {

struct ForestOptions {
  int trees = 50;
  int max_depth = 8;
  int min_leaf = 1;
  double feature_fraction = 1.0 / 3.0;
};

class RandomForest {
 public:
  void fit(const std::vector<std::vector<double>>& X, const std::vector<double>& y, const ForestOptions& opt,
           Rng& rng) {
    if (X.empty() || X.size() != y.size()) throw InvalidArgument("forest: bad training data");
    X_ = &X;
    y_ = &y;
    opt_ = opt;
    trees_.assign(static_cast<std::size_t>(opt.trees), {});
    const std::size_t n = X.size();
    for (auto& tree : trees_) {
      std::vector<std::size_t> idx(n);
      for (auto& i : idx) i = std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
      build(tree, idx, 0, rng);
    }
    X_ = nullptr;
    y_ = nullptr;
  }

  /// Mean and spread of the per-tree predictions.
  std::pair<double, double> predict(const std::vector<double>& x) const {
    double s = 0.0, s2 = 0.0;
    for (const auto& tree : trees_) {
      int k = 0;
      while (tree[static_cast<std::size_t>(k)].feature >= 0) {
        const auto& nd = tree[static_cast<std::size_t>(k)];
        k = x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
      }
      const double v = tree[static_cast<std::size_t>(k)].value;
      s += v;
      s2 += v * v;
    }
    const double n = static_cast<double>(trees_.size());
    const double mean = s / n;
    return {mean, std::sqrt(std::max(0.0, s2 / n - mean * mean))};
  }

 private:
  struct Node {
    int feature = -1;
    double threshold = 0.0;
    double value = 0.0;
    int left = -1, right = -1;
  };

  int build(std::vector<Node>& tree, std::vector<std::size_t>& idx, int depth, Rng& rng) {
    const auto& X = *X_;
    const auto& y = *y_;
    const int id = static_cast<int>(tree.size());
    tree.emplace_back();
    double mean = 0.0;
    for (auto i : idx) mean += y[i];
    mean /= static_cast<double>(idx.size());
    tree[static_cast<std::size_t>(id)].value = mean;
    bool constant = true;
    for (auto i : idx) constant = constant && y[i] == y[idx[0]];
    if (depth >= opt_.max_depth || static_cast<int>(idx.size()) < 2 * opt_.min_leaf || constant) return id;

    const std::size_t d = X[0].size();
    std::vector<std::size_t> feats(d);
    std::iota(feats.begin(), feats.end(), 0);
    const std::size_t m = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(opt_.feature_fraction * d)));
    for (std::size_t i = 0; i < m; ++i) {
      const auto j = i + std::min(d - i - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(d - i)));
      std::swap(feats[i], feats[j]);
    }

    int best_f = -1;
    double best_t = 0.0, best_sse = 0.0;
    {
      double s = 0.0, s2 = 0.0;
      for (auto i : idx) s += y[i], s2 += y[i] * y[i];
      best_sse = s2 - s * s / static_cast<double>(idx.size());
    }
    const double parent_sse = best_sse;
    std::vector<std::pair<double, double>> vals(idx.size());
    for (std::size_t fi = 0; fi < m; ++fi) {
      const std::size_t f = feats[fi];
      for (std::size_t k = 0; k < idx.size(); ++k) vals[k] = {X[idx[k]][f], y[idx[k]]};
      std::sort(vals.begin(), vals.end());
      double ls = 0.0, ls2 = 0.0, ts = 0.0, ts2 = 0.0;
      for (auto& [v, t] : vals) ts += t, ts2 += t * t;
      const auto n = vals.size();
      for (std::size_t k = 0; k + 1 < n; ++k) {
        ls += vals[k].second;
        ls2 += vals[k].second * vals[k].second;
        if (vals[k].first == vals[k + 1].first) continue;
        const auto nl = static_cast<double>(k + 1), nr = static_cast<double>(n - k - 1);
        if (nl < opt_.min_leaf || nr < opt_.min_leaf) continue;
        const double sse = (ls2 - ls * ls / nl) + ((ts2 - ls2) - (ts - ls) * (ts - ls) / nr);
        if (sse < best_sse - 1e-12 * (1.0 + parent_sse)) {
          best_sse = sse;
          best_f = static_cast<int>(f);
          best_t = 0.5 * (vals[k].first + vals[k + 1].first);
        }
      }
    }
    if (best_f < 0) return id;
    std::vector<std::size_t> li, ri;
    for (auto i : idx) (X[i][static_cast<std::size_t>(best_f)] <= best_t ? li : ri).push_back(i);
    idx.clear();
    idx.shrink_to_fit();
    const int l = build(tree, li, depth + 1, rng);
    const int r = build(tree, ri, depth + 1, rng);
    auto& nd = tree[static_cast<std::size_t>(id)];
    nd.feature = best_f;
    nd.threshold = best_t;
    nd.left = l;
    nd.right = r;
    return id;
  }

  const std::vector<std::vector<double>>* X_ = nullptr;
  const std::vector<double>* y_ = nullptr;
  ForestOptions opt_;
  std::vector<std::vector<Node>> trees_;
};

}  // namespace ctxeng::tuner
