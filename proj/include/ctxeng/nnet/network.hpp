#pragma once

// Stacked LSTM and feed-forward regressors with hand-written backward passes.
//
// Recurrent: LSTM layers (gate order i, f, g, o), the last hidden state feeds
// a ReLU top layer and a linear 1-unit output. Dense: ReLU hidden layers with
// dropout, a ReLU top layer and the same output.
//
// Batches are time-major: row t * B + b of x holds step t of sample b. A step
// with mask 0 leaves the state untouched.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ctxeng/common.hpp"
#include "ctxeng/nnet/spec.hpp"

namespace ctxeng::nnet {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <class S>
struct Batch {
  int steps = 1;
  int size = 0;
  int features = 0;
  Mat<S> x;     // (steps * size) x features
  Mat<S> mask;  // steps x size, recurrent only
  Vec<S> y;     // size

  void resize(int t, int b, int f) {
    steps = t;
    size = b;
    features = f;
    x.setZero(static_cast<Eigen::Index>(t) * b, f);
    mask.setZero(t, b);
    y.setZero(b);
  }
};

struct LstmBlock {
  std::size_t in = 0, hidden = 0;
  std::size_t wx = 0, wh = 0, b = 0;  // offsets into the parameter vector
};

struct DenseBlock {
  std::size_t in = 0, out = 0;
  std::size_t w = 0, b = 0;
  bool relu = true;
  bool dropout = false;
};

struct Layout {
  std::vector<LstmBlock> lstm;
  std::vector<DenseBlock> dense;  // hidden..., top, output
  std::size_t total = 0;
};

inline Layout make_layout(const NetworkSpec& spec, int input_dim) {
  if (input_dim < 1) throw InvalidArgument("network: input dimension must be >= 1");
  Layout L;
  std::size_t off = 0;
  std::size_t in = static_cast<std::size_t>(input_dim);
  auto add_dense = [&](std::size_t out, bool relu, bool dropout) {
    DenseBlock d{in, out, off, off + in * out, relu, dropout};
    off += in * out + out;
    L.dense.push_back(d);
    in = out;
  };
  if (spec.kind == NetKind::recurrent) {
    for (int hd : spec.layer_dims) {
      const auto h = static_cast<std::size_t>(hd);
      LstmBlock b{in, h, off, off + in * 4 * h, off + in * 4 * h + h * 4 * h};
      off = b.b + 4 * h;
      L.lstm.push_back(b);
      in = h;
    }
    add_dense(static_cast<std::size_t>(spec.top_dim), true, false);
  } else {
    for (int hd : spec.layer_dims) add_dense(static_cast<std::size_t>(hd), true, spec.dropout > 0.0);
    add_dense(static_cast<std::size_t>(spec.top_dim), true, false);
  }
  add_dense(1, false, false);
  L.total = off;
  return L;
}

/// Inverted dropout masks, fixed for a whole sequence.
template <class S>
struct DropoutMasks {
  std::vector<Mat<S>> lstm_input;      // B x in, empty when unused
  std::vector<Mat<S>> lstm_recurrent;  // B x hidden
  std::vector<Mat<S>> dense;           // B x out
};

template <class S>
Mat<S> bernoulli_mask(Rng& rng, Eigen::Index rows, Eigen::Index cols, double rate) {
  Mat<S> m(rows, cols);
  const S keep = static_cast<S>(1.0 / (1.0 - rate));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform01(rng) < rate ? S(0) : keep;
  return m;
}

template <class S>
DropoutMasks<S> draw_masks(const NetworkSpec& spec, const Layout& L, int batch, Rng& rng) {
  DropoutMasks<S> m;
  for (const auto& b : L.lstm) {
    m.lstm_input.push_back(spec.dropout > 0.0
                               ? bernoulli_mask<S>(rng, batch, static_cast<Eigen::Index>(b.in), spec.dropout)
                               : Mat<S>());
    m.lstm_recurrent.push_back(spec.recurrent_dropout > 0.0
                                   ? bernoulli_mask<S>(rng, batch, static_cast<Eigen::Index>(b.hidden),
                                                       spec.recurrent_dropout)
                                   : Mat<S>());
  }
  for (const auto& d : L.dense)
    m.dense.push_back(d.dropout ? bernoulli_mask<S>(rng, batch, static_cast<Eigen::Index>(d.out), spec.dropout)
                                : Mat<S>());
  return m;
}

template <class S>
struct LstmCache {
  Mat<S> xin;    // (T*B) x in, after input dropout
  Mat<S> gates;  // (T*B) x 4H, activated
  Mat<S> tanh_c; // (T*B) x H, tanh of the unmasked new cell
  Mat<S> c;      // ((T+1)*B) x H, block 0 is the initial state
  Mat<S> h;      // ((T+1)*B) x H
};

template <class S>
struct ForwardCache {
  std::vector<LstmCache<S>> lstm;
  std::vector<Mat<S>> dense_in;  // input to each dense layer
  std::vector<Mat<S>> dense_z;   // pre-activation
  Vec<S> pred;
};

template <class S>
class Network {
 public:
  Network() = default;
  Network(NetworkSpec spec, int input_dim) : spec_(std::move(spec)), input_dim_(input_dim) {
    spec_.validate();
    layout_ = make_layout(spec_, input_dim);
    params_.setZero(static_cast<Eigen::Index>(layout_.total));
  }

  const NetworkSpec& spec() const { return spec_; }
  int input_dim() const { return input_dim_; }
  const Layout& layout() const { return layout_; }
  Vec<S>& params() { return params_; }
  const Vec<S>& params() const { return params_; }
  std::size_t n_params() const { return layout_.total; }

  /// Multiplies the forget-gate pre-activation gradient; 1 in normal use.
  /// Only a test fixture changes it.
  double forget_gate_grad_scale = 1.0;

  /// Uniform +-1/sqrt(fan_in) weights, forget-gate bias +1, other biases 0.
  void init(std::uint64_t seed) {
    Rng rng = make_rng(seed, 0x1417);
    params_.setZero();
    auto fill = [&](std::size_t off, std::size_t n, std::size_t fan_in) {
      const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (std::size_t i = 0; i < n; ++i)
        params_[static_cast<Eigen::Index>(off + i)] = static_cast<S>((2.0 * uniform01(rng) - 1.0) * a);
    };
    for (const auto& b : layout_.lstm) {
      fill(b.wx, b.in * 4 * b.hidden, b.in);
      fill(b.wh, b.hidden * 4 * b.hidden, b.hidden);
      for (std::size_t j = 0; j < b.hidden; ++j) params_[static_cast<Eigen::Index>(b.b + b.hidden + j)] = S(1);
    }
    for (const auto& d : layout_.dense) fill(d.w, d.in * d.out, d.in);
  }

  void check_batch(const Batch<S>& b) const {
    if (b.features != input_dim_ || b.x.cols() != input_dim_)
      throw InvalidArgument("network: expected " + std::to_string(input_dim_) + " input features, got " +
                            std::to_string(b.x.cols()));
    if (b.x.rows() != static_cast<Eigen::Index>(b.steps) * b.size)
      throw InvalidArgument("network: expected " + std::to_string(b.steps * b.size) + " input rows, got " +
                            std::to_string(b.x.rows()));
    if (spec_.kind == NetKind::dense && b.steps != 1)
      throw InvalidArgument("network: dense input must have 1 step, got " + std::to_string(b.steps));
    if (spec_.kind == NetKind::recurrent && (b.mask.rows() != b.steps || b.mask.cols() != b.size))
      throw InvalidArgument("network: mask shape does not match " + std::to_string(b.steps) + "x" +
                            std::to_string(b.size));
  }

  /// Predictions for a batch. Pass masks for training mode, nullptr for
  /// evaluation; the cache is filled when given.
  Vec<S> forward(const Batch<S>& batch, ForwardCache<S>* cache = nullptr,
                 const DropoutMasks<S>* masks = nullptr) const {
    check_batch(batch);
    ForwardCache<S> local;
    ForwardCache<S>& fc = cache ? *cache : local;
    const Eigen::Index B = batch.size;
    const int T = batch.steps;
    Mat<S> head_in;
    if (spec_.kind == NetKind::recurrent) {
      fc.lstm.resize(layout_.lstm.size());
      Mat<S> layer_in;
      for (std::size_t l = 0; l < layout_.lstm.size(); ++l) {
        lstm_forward(l, l == 0 ? batch.x : layer_in, batch.mask, T, B, masks, fc.lstm[l]);
        // The next layer consumes the state after each step.
        if (l + 1 < layout_.lstm.size()) layer_in = fc.lstm[l].h.bottomRows(static_cast<Eigen::Index>(T) * B);
      }
      head_in = fc.lstm.back().h.bottomRows(B);
    } else {
      head_in = batch.x;
    }
    dense_forward(head_in, masks, fc);
    return fc.pred;
  }

  /// Accumulates dLoss/dparams into grad given dLoss/dpred.
  void backward(const Batch<S>& batch, const ForwardCache<S>& fc, const DropoutMasks<S>* masks,
                const Vec<S>& dpred, Vec<S>& grad) const {
    if (grad.size() != params_.size()) grad.setZero(params_.size());
    const Eigen::Index B = batch.size;
    const int T = batch.steps;
    Mat<S> dhead = dense_backward(fc, masks, dpred, grad);
    if (spec_.kind == NetKind::dense) return;
    // Gradient w.r.t. each step's output of the top LSTM layer.
    const std::size_t top = layout_.lstm.size() - 1;
    Mat<S> dout = Mat<S>::Zero(static_cast<Eigen::Index>(T) * B, static_cast<Eigen::Index>(layout_.lstm[top].hidden));
    dout.bottomRows(B) = dhead;
    for (std::size_t l = layout_.lstm.size(); l-- > 0;) {
      Mat<S> dx = lstm_backward(l, batch.mask, T, B, masks, fc.lstm[l], dout, grad);
      if (l > 0) dout = std::move(dx);
    }
  }

 private:
  static Eigen::Index ix(std::size_t v) { return static_cast<Eigen::Index>(v); }

  Eigen::Map<const Mat<S>> wmap(std::size_t off, std::size_t r, std::size_t c) const {
    return Eigen::Map<const Mat<S>>(params_.data() + off, ix(r), ix(c));
  }
  static Eigen::Map<Mat<S>> gmap(Vec<S>& g, std::size_t off, std::size_t r, std::size_t c) {
    return Eigen::Map<Mat<S>>(g.data() + off, ix(r), ix(c));
  }

  void lstm_forward(std::size_t l, const Mat<S>& input, const Mat<S>& mask, int T, Eigen::Index B,
                    const DropoutMasks<S>* masks, LstmCache<S>& c) const {
    const auto& blk = layout_.lstm[l];
    const Eigen::Index H = ix(blk.hidden);
    const auto Wx = wmap(blk.wx, blk.in, 4 * blk.hidden);
    const auto Wh = wmap(blk.wh, blk.hidden, 4 * blk.hidden);
    const auto bias = wmap(blk.b, 1, 4 * blk.hidden);
    const Mat<S>* din = masks && masks->lstm_input[l].size() ? &masks->lstm_input[l] : nullptr;
    const Mat<S>* dh = masks && masks->lstm_recurrent[l].size() ? &masks->lstm_recurrent[l] : nullptr;

    c.xin = input;
    if (din)
      for (int t = 0; t < T; ++t) c.xin.middleRows(t * B, B).array() *= din->array();
    c.gates.noalias() = c.xin * Wx;
    c.gates.rowwise() += bias.row(0);
    c.tanh_c.resize(static_cast<Eigen::Index>(T) * B, H);
    c.c.setZero(static_cast<Eigen::Index>(T + 1) * B, H);
    c.h.setZero(static_cast<Eigen::Index>(T + 1) * B, H);

    Mat<S> hp(B, H);
    for (int t = 0; t < T; ++t) {
      hp = c.h.middleRows(t * B, B);
      if (dh) hp.array() *= dh->array();
      auto z = c.gates.middleRows(t * B, B);
      z.noalias() += hp * Wh;
      auto zi = z.leftCols(H).array();
      auto zf = z.middleCols(H, H).array();
      auto zg = z.middleCols(2 * H, H).array();
      auto zo = z.rightCols(H).array();
      zi = S(1) / (S(1) + (-zi).exp());
      zf = S(1) / (S(1) + (-zf).exp());
      zg = zg.tanh();
      zo = S(1) / (S(1) + (-zo).exp());
      const auto m = mask.row(t).transpose().array();
      auto cprev = c.c.middleRows(t * B, B).array();
      auto hprev = c.h.middleRows(t * B, B).array();
      const Mat<S> ct = (zf * cprev + zi * zg).matrix();
      c.tanh_c.middleRows(t * B, B) = ct.array().tanh().matrix();
      const Mat<S> ht = (zo * c.tanh_c.middleRows(t * B, B).array()).matrix();
      const auto keep = (S(1) - m);
      c.c.middleRows((t + 1) * B, B) =
          (ct.array().colwise() * m + cprev.colwise() * keep).matrix();
      c.h.middleRows((t + 1) * B, B) =
          (ht.array().colwise() * m + hprev.colwise() * keep).matrix();
    }
  }

  Mat<S> lstm_backward(std::size_t l, const Mat<S>& mask, int T, Eigen::Index B, const DropoutMasks<S>* masks,
                       const LstmCache<S>& c, const Mat<S>& dout, Vec<S>& grad) const {
    const auto& blk = layout_.lstm[l];
    const Eigen::Index H = ix(blk.hidden);
    const auto Wx = wmap(blk.wx, blk.in, 4 * blk.hidden);
    const auto Wh = wmap(blk.wh, blk.hidden, 4 * blk.hidden);
    auto dWx = gmap(grad, blk.wx, blk.in, 4 * blk.hidden);
    auto dWh = gmap(grad, blk.wh, blk.hidden, 4 * blk.hidden);
    auto db = gmap(grad, blk.b, 1, 4 * blk.hidden);
    const Mat<S>* din = masks && masks->lstm_input[l].size() ? &masks->lstm_input[l] : nullptr;
    const Mat<S>* drec = masks && masks->lstm_recurrent[l].size() ? &masks->lstm_recurrent[l] : nullptr;
    const S fault = static_cast<S>(forget_gate_grad_scale);

    Mat<S> dz_all(static_cast<Eigen::Index>(T) * B, 4 * H);
    Mat<S> dh_next = Mat<S>::Zero(B, H);
    Mat<S> dc_next = Mat<S>::Zero(B, H);
    Mat<S> hp(B, H);
    for (int t = T; t-- > 0;) {
      const auto m = mask.row(t).transpose().array();
      const auto keep = (S(1) - m);
      const auto g = c.gates.middleRows(t * B, B);
      const auto gi = g.leftCols(H).array();
      const auto gf = g.middleCols(H, H).array();
      const auto gg = g.middleCols(2 * H, H).array();
      const auto go = g.rightCols(H).array();
      const auto tc = c.tanh_c.middleRows(t * B, B).array();
      const auto cprev = c.c.middleRows(t * B, B).array();

      const Mat<S> dh = dout.middleRows(t * B, B) + dh_next;
      const Mat<S> dh_til = (dh.array().colwise() * m).matrix();
      const Mat<S> dc_til =
          ((dc_next.array().colwise() * m) + dh_til.array() * go * (S(1) - tc * tc)).matrix();
      auto dz = dz_all.middleRows(t * B, B);
      dz.leftCols(H) = (dc_til.array() * gg * gi * (S(1) - gi)).matrix();
      dz.middleCols(H, H) = (dc_til.array() * cprev * gf * (S(1) - gf) * fault).matrix();
      dz.middleCols(2 * H, H) = (dc_til.array() * gi * (S(1) - gg * gg)).matrix();
      dz.rightCols(H) = (dh_til.array() * tc * go * (S(1) - go)).matrix();

      dc_next = ((dc_next.array().colwise() * keep) + dc_til.array() * gf).matrix();
      hp = c.h.middleRows(t * B, B);
      if (drec) hp.array() *= drec->array();
      dWh.noalias() += hp.transpose() * dz;
      Mat<S> dhp = dz * Wh.transpose();
      if (drec) dhp.array() *= drec->array();
      dh_next = (dh.array().colwise() * keep).matrix() + dhp;
    }
    dWx.noalias() += c.xin.transpose() * dz_all;
    db += dz_all.colwise().sum();
    Mat<S> dx;
    if (l == 0) return dx;  // input gradient not needed below the first layer
    dx.noalias() = dz_all * Wx.transpose();
    if (din)
      for (int t = 0; t < T; ++t) dx.middleRows(t * B, B).array() *= din->array();
    return dx;
  }

  void dense_forward(const Mat<S>& input, const DropoutMasks<S>* masks, ForwardCache<S>& fc) const {
    fc.dense_in.resize(layout_.dense.size());
    fc.dense_z.resize(layout_.dense.size());
    Mat<S> a = input;
    for (std::size_t k = 0; k < layout_.dense.size(); ++k) {
      const auto& d = layout_.dense[k];
      fc.dense_in[k] = a;
      Mat<S>& z = fc.dense_z[k];
      z.noalias() = a * wmap(d.w, d.in, d.out);
      z.rowwise() += wmap(d.b, 1, d.out).row(0);
      a = d.relu ? Mat<S>(z.cwiseMax(S(0))) : z;
      if (masks && masks->dense[k].size()) a.array() *= masks->dense[k].array();
    }
    fc.pred = a.col(0);
  }

  Mat<S> dense_backward(const ForwardCache<S>& fc, const DropoutMasks<S>* masks, const Vec<S>& dpred,
                        Vec<S>& grad) const {
    Mat<S> da = dpred;
    for (std::size_t k = layout_.dense.size(); k-- > 0;) {
      const auto& d = layout_.dense[k];
      if (masks && masks->dense[k].size()) da.array() *= masks->dense[k].array();
      if (d.relu) da.array() *= (fc.dense_z[k].array() > S(0)).template cast<S>();
      gmap(grad, d.w, d.in, d.out).noalias() += fc.dense_in[k].transpose() * da;
      gmap(grad, d.b, 1, d.out) += da.colwise().sum();
      Mat<S> prev = da * wmap(d.w, d.in, d.out).transpose();
      da = std::move(prev);
    }
    return da;
  }

  NetworkSpec spec_;
  int input_dim_ = 0;
  Layout layout_;
  Vec<S> params_;
};

/// Mean squared error and its gradient w.r.t. predictions.
template <class S>
S mse_loss(const Vec<S>& pred, const Vec<S>& y, Vec<S>* dpred = nullptr) {
  const Vec<S> diff = pred - y;
  const S n = static_cast<S>(pred.size());
  if (dpred) *dpred = diff * (S(2) / n);
  return diff.squaredNorm() / n;
}

}  // namespace ctxeng::nnet
