#pragma once

// Network inputs built from a SequenceSet by column selection.
//
// Recurrent: `history_len` steps of the selected columns ending at t-1, plus an
// optional last step at t0 in which only the momentary columns are filled.
// Dense: selected columns of the t-1 row, followed by momentary columns of the
// t0 row.

#include <algorithm>
#include <span>
#include <vector>

#include "ctxeng/common.hpp"
#include "ctxeng/nnet/train.hpp"
#include "ctxeng/pipeline/dataset.hpp"

namespace ctxeng::bench {

using nnet::NetKind;
using pipeline::Bracket;

struct InputSpec {
  NetKind arch = NetKind::recurrent;
  std::vector<std::size_t> columns;    // bundle columns per history step (dense: of the t-1 row)
  std::vector<std::size_t> momentary;  // bundle columns taken from the t0 row
  int history_len = 25;
  std::vector<std::size_t> zeroed;  // input positions forced to zero

  int steps() const {
    if (arch == NetKind::dense) return 1;
    return history_len + (momentary.empty() ? 0 : 1);
  }
  int input_dim() const {
    return static_cast<int>(arch == NetKind::dense ? columns.size() + momentary.size() : columns.size());
  }
};

inline void validate(const InputSpec& s, std::size_t bundle_cols) {
  if (s.columns.empty() && s.momentary.empty()) throw InvalidArgument("input: no columns selected");
  for (auto c : s.columns)
    if (c >= bundle_cols) throw InvalidArgument("input: column index out of range");
  for (auto c : s.momentary)
    if (c >= bundle_cols) throw InvalidArgument("input: momentary column index out of range");
  if (s.arch == NetKind::recurrent) {
    if (s.history_len < 1) throw InvalidArgument("input: history length must be >= 1");
    for (auto c : s.momentary)
      if (std::find(s.columns.begin(), s.columns.end(), c) == s.columns.end())
        throw InvalidArgument("input: recurrent momentary columns must be part of the step columns");
  }
  for (auto z : s.zeroed)
    if (z >= static_cast<std::size_t>(s.input_dim())) throw InvalidArgument("input: zeroed position out of range");
}

class InputView : public nnet::DataSource<float> {
 public:
  InputView(const pipeline::SequenceSet& set, InputSpec spec) : set_(&set), spec_(std::move(spec)) {
    validate(spec_, set.bundle().cols());
    // Position of each momentary column within the step vector.
    if (spec_.arch == NetKind::recurrent)
      for (auto c : spec_.momentary)
        momentary_pos_.push_back(static_cast<std::size_t>(
            std::find(spec_.columns.begin(), spec_.columns.end(), c) - spec_.columns.begin()));
  }

  std::size_t size() const override { return set_->size(); }
  int input_dim() const override { return spec_.input_dim(); }
  int steps() const override { return spec_.steps(); }
  double target(std::size_t i) const override { return set_->target(i); }
  const InputSpec& spec() const { return spec_; }
  const pipeline::SequenceSet& set() const { return *set_; }

  void fill(std::span<const std::size_t> idx, nnet::Batch<float>& out) const override {
    const auto& b = set_->bundle();
    const int B = static_cast<int>(idx.size());
    const int T = spec_.steps();
    const std::size_t d = static_cast<std::size_t>(spec_.input_dim());
    out.resize(T, B, static_cast<int>(d));
    for (int s = 0; s < B; ++s) {
      const std::size_t i = idx[static_cast<std::size_t>(s)];
      const std::size_t focal = set_->focal_row(i);
      out.y[s] = set_->target(i);
      if (spec_.arch == NetKind::dense) {
        float* dst = out.x.row(s).data();
        const float* prev = b.row(focal - 1);
        const float* now = b.row(focal);
        std::size_t k = 0;
        for (auto c : spec_.columns) dst[k++] = prev[c];
        for (auto c : spec_.momentary) dst[k++] = now[c];
        out.mask(0, s) = 1.0f;
      } else {
        const auto len = static_cast<std::size_t>(spec_.history_len);
        const std::size_t n = set_->history_steps(i, len);
        for (std::size_t k = 0; k < n; ++k) {
          const std::size_t t = len - n + k;
          const float* src = b.row(focal - n + k);
          float* dst = out.x.row(static_cast<Eigen::Index>(t) * B + s).data();
          for (std::size_t j = 0; j < d; ++j) dst[j] = src[spec_.columns[j]];
          out.mask(static_cast<Eigen::Index>(t), s) = 1.0f;
        }
        if (!spec_.momentary.empty()) {
          const float* now = b.row(focal);
          float* dst = out.x.row(static_cast<Eigen::Index>(len) * B + s).data();
          for (std::size_t k = 0; k < spec_.momentary.size(); ++k) dst[momentary_pos_[k]] = now[spec_.momentary[k]];
          out.mask(static_cast<Eigen::Index>(len), s) = 1.0f;
        }
      }
      for (auto z : spec_.zeroed)
        for (int t = 0; t < T; ++t) out.x(static_cast<Eigen::Index>(t) * B + s, static_cast<Eigen::Index>(z)) = 0.0f;
    }
  }

 private:
  const pipeline::SequenceSet* set_;
  InputSpec spec_;
  std::vector<std::size_t> momentary_pos_;
};

}  // namespace ctxeng::bench
