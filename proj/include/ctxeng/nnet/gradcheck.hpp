#pragma once

// Central-difference gradient check in double precision with frozen dropout
// masks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "ctxeng/common.hpp"
#include "ctxeng/nnet/network.hpp"

namespace ctxeng::nnet {

struct GradCheckOptions {
  int input_dim = 5;
  int steps = 4;
  int batch = 3;
  int probes = 100;
  double step = 1e-5;
  double tolerance = 1e-4;
  double forget_gate_grad_scale = 1.0;  // != 1 injects a fault
  std::uint64_t seed = 1;
};

struct GradCheckReport {
  std::size_t n_params = 0;
  std::size_t probes = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  bool passed = false;
};

inline double grad_rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

inline GradCheckReport gradient_check(const NetworkSpec& spec, const GradCheckOptions& opt = {}) {
  const int T = spec.kind == NetKind::recurrent ? opt.steps : 1;
  Network<double> net(spec, opt.input_dim);
  net.init(opt.seed);
  net.forget_gate_grad_scale = opt.forget_gate_grad_scale;
  Rng rng = make_rng(opt.seed, 0x62ad);
  // Perturb biases too so no parameter sits at a special value.
  for (Eigen::Index i = 0; i < net.params().size(); ++i) net.params()[i] += 0.1 * (2.0 * uniform01(rng) - 1.0);

  Batch<double> batch;
  batch.resize(T, opt.batch, opt.input_dim);
  for (Eigen::Index i = 0; i < batch.x.size(); ++i) batch.x.data()[i] = 2.0 * uniform01(rng) - 1.0;
  for (int b = 0; b < opt.batch; ++b) {
    // Sample b is pre-padded by b steps, at least one step stays live.
    const int pad = std::min(b, T - 1);
    for (int t = 0; t < T; ++t) batch.mask(t, b) = t < pad ? 0.0 : 1.0;
    batch.y[b] = 2.0 * uniform01(rng) - 1.0;
  }
  const auto masks = draw_masks<double>(spec, net.layout(), opt.batch, rng);

  auto loss_at = [&]() {
    const Vec<double> p = net.forward(batch, nullptr, &masks);
    return mse_loss<double>(p, batch.y);
  };
  ForwardCache<double> fc;
  Vec<double> dpred, grad;
  const Vec<double> pred = net.forward(batch, &fc, &masks);
  mse_loss<double>(pred, batch.y, &dpred);
  grad.setZero(net.params().size());
  net.backward(batch, fc, &masks, dpred, grad);

  GradCheckReport rep;
  rep.n_params = net.n_params();
  std::vector<std::size_t> idx(rep.n_params);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = idx.size(); i > 1; --i) {
    const auto j = std::min(i - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i)));
    std::swap(idx[i - 1], idx[j]);
  }
  idx.resize(std::min(idx.size(), static_cast<std::size_t>(opt.probes)));
  for (std::size_t k : idx) {
    auto& p = net.params()[static_cast<Eigen::Index>(k)];
    const double orig = p;
    p = orig + opt.step;
    const double up = loss_at();
    p = orig - opt.step;
    const double down = loss_at();
    p = orig;
    const double numeric = (up - down) / (2.0 * opt.step);
    const double rel = grad_rel_error(grad[static_cast<Eigen::Index>(k)], numeric);
    if (rel > rep.max_rel_error) {
      rep.max_rel_error = rel;
      rep.worst_index = k;
    }
  }
  rep.probes = idx.size();
  rep.passed = rep.max_rel_error < opt.tolerance;
  return rep;
}

}  // namespace ctxeng::nnet
