#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "ctxeng/common.hpp"

namespace ctxeng::nnet {

struct Metrics {
  double r2 = 0.0;
  double rmse = 0.0;
  std::size_t n = 0;
};

struct UndefinedMetricError : Error {
  explicit UndefinedMetricError(const std::string& w) : Error(ErrorKind::invariant, w) {}
};

/// R^2 against the mean of the evaluated targets, and root mean squared error.
inline Metrics compute_metrics(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) throw InvalidArgument("metrics: target and prediction sizes differ");
  if (y.empty()) throw InvalidArgument("metrics: empty evaluation split");
  const auto n = static_cast<double>(y.size());
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= n;
  double sse = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - yhat[i];
    const double d = y[i] - mean;
    sse += e * e;
    sst += d * d;
  }
  if (!(sst > 0.0)) throw UndefinedMetricError("R^2 undefined: evaluation targets have zero variance");
  return {1.0 - sse / sst, std::sqrt(sse / n), y.size()};
}

}  // namespace ctxeng::nnet
