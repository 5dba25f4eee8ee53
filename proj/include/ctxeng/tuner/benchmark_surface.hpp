#pragma once

// A fixed 288-point response surface for testing the search loop without
// training networks. Values behave like validation RMSE: a learning-rate
// optimum, a depth-dependent dropout optimum, interactions and hashed noise.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "ctxeng/common.hpp"
#include "ctxeng/tuner/space.hpp"

namespace ctxeng::tuner {

inline SearchSpace benchmark_space() {
  SearchSpace s;
  s.kind = NetKind::recurrent;
  s.depths = {1, 2, 3, 4};
  s.layer_dims = {32};
  s.top_dims = {32, 64, 128};
  s.dropouts = {0.0, 0.2, 0.4, 0.6};
  s.recurrent_dropouts = {0.0, 0.6};
  s.learning_rates = {0.01, 0.001, 0.0001};
  return s;
}

inline double benchmark_objective(const Config& c) {
  const int depth = static_cast<int>(c.layer_dims.size());
  double f = 1.0;
  f += c.learning_rate == 0.001 ? 0.0 : c.learning_rate == 0.01 ? 0.04 : 0.06;
  const double best_do = 0.1 * depth;
  f += 0.25 * (c.dropout - best_do) * (c.dropout - best_do);
  f += c.recurrent_dropout > 0.0 ? (depth <= 2 ? 0.02 : -0.01) : 0.0;
  f += c.top_dim == 64 ? 0.0 : c.top_dim == 32 ? 0.01 : 0.005;
  const double depth_term[] = {0.03, 0.0, 0.01, 0.025};
  f += depth_term[depth - 1];
  if (c.learning_rate == 0.01 && depth == 4) f += 0.03;
  // Deterministic noise from the configuration key, roughly N(0, 0.008^2).
  Rng rng(fnv1a64(c.key()));
  double z = 0.0;
  for (int i = 0; i < 12; ++i) z += uniform01(rng);
  f += 0.008 * (z - 6.0);
  return f;
}

/// Objective values of the whole grid, ascending.
inline std::vector<double> benchmark_sorted_values() {
  std::vector<double> v;
  for (const auto& c : benchmark_space().enumerate()) v.push_back(benchmark_objective(c));
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace ctxeng::tuner
