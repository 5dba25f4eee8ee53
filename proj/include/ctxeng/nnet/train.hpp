#pragma once

// Mini-batch training with Adam, global-norm clipping and early stopping on
// validation RMSE.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctxeng/common.hpp"
#include "ctxeng/nnet/metrics.hpp"
#include "ctxeng/nnet/network.hpp"

namespace ctxeng::nnet {

/// Indexed samples that can be packed into batches.
template <class S>
class DataSource {
 public:
  virtual ~DataSource() = default;
  virtual std::size_t size() const = 0;
  virtual int input_dim() const = 0;
  virtual int steps() const = 0;
  virtual double target(std::size_t i) const = 0;
  virtual void fill(std::span<const std::size_t> idx, Batch<S>& out) const = 0;
};

/// Samples held in memory: one (steps x features) matrix and mask per sample.
template <class S>
class MemorySource : public DataSource<S> {
 public:
  MemorySource(int steps, int features) : steps_(steps), features_(features) {}

  void add(const Mat<S>& x, const std::vector<S>& mask, double y) {
    if (x.rows() != steps_ || x.cols() != features_) throw InvalidArgument("MemorySource: sample shape mismatch");
    xs_.push_back(x);
    masks_.push_back(mask.empty() ? std::vector<S>(static_cast<std::size_t>(steps_), S(1)) : mask);
    ys_.push_back(y);
  }

  std::size_t size() const override { return xs_.size(); }
  int input_dim() const override { return features_; }
  int steps() const override { return steps_; }
  double target(std::size_t i) const override { return ys_[i]; }

  void fill(std::span<const std::size_t> idx, Batch<S>& out) const override {
    const int B = static_cast<int>(idx.size());
    out.resize(steps_, B, features_);
    for (int b = 0; b < B; ++b) {
      const std::size_t i = idx[static_cast<std::size_t>(b)];
      for (int t = 0; t < steps_; ++t) {
        out.x.row(static_cast<Eigen::Index>(t) * B + b) = xs_[i].row(t);
        out.mask(t, b) = masks_[i][static_cast<std::size_t>(t)];
      }
      out.y[b] = static_cast<S>(ys_[i]);
    }
  }

 private:
  int steps_, features_;
  std::vector<Mat<S>> xs_;
  std::vector<std::vector<S>> masks_;
  std::vector<double> ys_;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_rmse = 0.0;
};

struct TrainedModel {
  NetworkSpec spec;
  int input_dim = 0;
  std::vector<float> parameters;  // best-epoch state, internal layout
  std::vector<EpochRecord> trace;
  int best_epoch = 0;
  int stopped_epoch = 0;
  std::string schema_fingerprint;

  Network<float> network() const {
    Network<float> net(spec, input_dim);
    if (parameters.size() != net.n_params()) throw InvariantError("trained model: parameter count mismatch");
    std::copy(parameters.begin(), parameters.end(), net.params().data());
    return net;
  }
};

struct TrainOptions {
  std::string schema_fingerprint;
  // Replaces the measured validation RMSE of an epoch (test fixtures).
  std::function<double(int epoch, double measured)> validation_override;
  std::function<void(const EpochRecord&)> on_epoch;
};

template <class S>
std::vector<double> predict(const Network<S>& net, const DataSource<S>& src, int batch_size = 512) {
  std::vector<double> out(src.size());
  std::vector<std::size_t> idx;
  Batch<S> batch;
  for (std::size_t start = 0; start < src.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(src.size(), start + static_cast<std::size_t>(batch_size));
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    src.fill(idx, batch);
    const Vec<S> p = net.forward(batch);
    for (std::size_t i = start; i < end; ++i) out[i] = static_cast<double>(p[static_cast<Eigen::Index>(i - start)]);
  }
  return out;
}

template <class S>
Metrics evaluate(const Network<S>& net, const DataSource<S>& src) {
  if (src.size() == 0) throw InvalidArgument("evaluate: empty split");
  const auto pred = predict(net, src);
  std::vector<double> y(src.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = src.target(i);
  return compute_metrics(y, pred);
}

inline Metrics evaluate(const TrainedModel& m, const DataSource<float>& src) { return evaluate(m.network(), src); }

/// Adam state over a flat parameter vector.
template <class S>
struct Adam {
  AdamConfig cfg;
  Vec<S> m, v;
  long long t = 0;

  void step(Vec<S>& params, const Vec<S>& grad, double lr) {
    if (m.size() != params.size()) {
      m.setZero(params.size());
      v.setZero(params.size());
    }
    ++t;
    const auto b1 = static_cast<S>(cfg.beta1), b2 = static_cast<S>(cfg.beta2);
    m = b1 * m + (S(1) - b1) * grad;
    v = b2 * v + (S(1) - b2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    const auto step = static_cast<S>(lr / c1);
    const auto eps = static_cast<S>(cfg.epsilon);
    const auto inv_c2 = static_cast<S>(1.0 / c2);
    params.array() -= step * m.array() / ((v.array() * inv_c2).sqrt() + eps);
  }
};

/// Scales grad so its global L2 norm is at most max_norm; returns the norm.
template <class S>
double clip_global_norm(Vec<S>& grad, double max_norm) {
  double sq = 0.0;
  for (Eigen::Index i = 0; i < grad.size(); ++i) sq += static_cast<double>(grad[i]) * static_cast<double>(grad[i]);
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) grad *= static_cast<S>(max_norm / norm);
  return norm;
}

inline TrainedModel train(const NetworkSpec& spec, const DataSource<float>& train_src,
                          const DataSource<float>& val_src, const TrainOptions& opt = {}) {
  spec.validate();
  if (train_src.size() == 0 || val_src.size() == 0)
    throw InvalidArgument("train: training and validation splits must be non-empty");
  if (train_src.input_dim() != val_src.input_dim())
    throw InvalidArgument("train: training and validation feature widths differ");

  Network<float> net(spec, train_src.input_dim());
  net.init(spec.seed);
  Adam<float> adam{spec.adam, {}, {}, 0};

  TrainedModel model;
  model.spec = spec;
  model.input_dim = train_src.input_dim();
  model.schema_fingerprint = opt.schema_fingerprint;
  model.parameters.assign(net.params().data(), net.params().data() + net.params().size());

  const std::size_t n = train_src.size();
  const auto bs = static_cast<std::size_t>(spec.batch_size);
  std::vector<std::size_t> order(n);
  Batch<float> batch;
  ForwardCache<float> cache;
  Vec<float> grad, dpred;
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 1; epoch <= spec.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle = make_rng(spec.seed, 0x5f0ff1e, static_cast<std::uint64_t>(epoch));
    for (std::size_t i = n; i > 1; --i) {
      const auto j = std::min(i - 1, static_cast<std::size_t>(uniform01(shuffle) * static_cast<double>(i)));
      std::swap(order[i - 1], order[j]);
    }
    double loss_sum = 0.0;
    for (std::size_t start = 0, bi = 0; start < n; start += bs, ++bi) {
      const std::size_t end = std::min(n, start + bs);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      train_src.fill(idx, batch);
      Rng drop = make_rng(spec.seed, 0xd20b07, (static_cast<std::uint64_t>(epoch) << 32) | bi);
      const auto masks = draw_masks<float>(spec, net.layout(), batch.size, drop);
      const Vec<float> pred = net.forward(batch, &cache, &masks);
      const double loss = mse_loss<float>(pred, batch.y, &dpred);
      if (!std::isfinite(loss))
        throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(bi));
      grad.setZero(net.params().size());
      net.backward(batch, cache, &masks, dpred, grad);
      clip_global_norm(grad, spec.clip_norm);
      adam.step(net.params(), grad, spec.learning_rate);
      loss_sum += loss * static_cast<double>(end - start);
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(n), 0.0};
    double val = evaluate(net, val_src).rmse;
    if (opt.validation_override) val = opt.validation_override(epoch, val);
    if (!std::isfinite(val))
      throw DivergenceError("train: non-finite validation RMSE at epoch " + std::to_string(epoch));
    rec.validation_rmse = val;
    model.trace.push_back(rec);
    if (opt.on_epoch) opt.on_epoch(rec);
    model.stopped_epoch = epoch;
    if (val < best) {
      best = val;
      model.best_epoch = epoch;
      model.parameters.assign(net.params().data(), net.params().data() + net.params().size());
      since_best = 0;
    } else if (++since_best >= spec.patience) {
      break;
    }
  }
  return model;
}

}  // namespace ctxeng::nnet
