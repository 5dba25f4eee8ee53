#pragma once

// Discrete hyperparameter grid with tapered layer widths.

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctxeng/common.hpp"
#include "ctxeng/nnet/spec.hpp"

namespace ctxeng::tuner {

using nnet::NetKind;
using nnet::NetworkSpec;

struct Config {
  std::vector<int> layer_dims;
  int top_dim = 32;
  double dropout = 0.0;
  double recurrent_dropout = 0.0;
  double learning_rate = 0.001;

  bool operator==(const Config&) const = default;

  NetworkSpec apply(NetworkSpec base) const {
    base.layer_dims = layer_dims;
    base.top_dim = top_dim;
    base.dropout = dropout;
    base.recurrent_dropout = recurrent_dropout;
    base.learning_rate = learning_rate;
    return base;
  }

  static Config from_spec(const NetworkSpec& s) {
    return {s.layer_dims, s.top_dim, s.dropout, s.recurrent_dropout, s.learning_rate};
  }

  std::string key() const {
    std::string k = "d";
    for (int d : layer_dims) k += "-" + std::to_string(d);
    char buf[96];
    std::snprintf(buf, sizeof buf, "|t%d|do%g|rdo%g|lr%g", top_dim, dropout, recurrent_dropout, learning_rate);
    return k + buf;
  }
};

inline void to_json(nlohmann::json& j, const Config& c) {
  j = {{"layer_dims", c.layer_dims},
       {"top_dim", c.top_dim},
       {"dropout", c.dropout},
       {"recurrent_dropout", c.recurrent_dropout},
       {"learning_rate", c.learning_rate}};
}

inline void from_json(const nlohmann::json& j, Config& c) {
  c.layer_dims = j.at("layer_dims").get<std::vector<int>>();
  c.top_dim = j.at("top_dim").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.recurrent_dropout = j.at("recurrent_dropout").get<double>();
  c.learning_rate = j.at("learning_rate").get<double>();
}

struct SearchSpace {
  NetKind kind = NetKind::recurrent;
  std::vector<int> depths{1, 2, 3, 4};
  std::vector<int> layer_dims{32, 64, 128, 256};
  std::vector<int> top_dims{32, 64, 128};
  std::vector<double> dropouts{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  std::vector<double> recurrent_dropouts{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  std::vector<double> learning_rates{0.01, 0.001, 0.0001};
  bool taper = true;  // widths non-increasing toward the head

  /// The full published grid. Dense networks have no recurrent dropout axis.
  static SearchSpace full(NetKind kind) {
    SearchSpace s;
    s.kind = kind;
    if (kind == NetKind::dense) s.recurrent_dropouts = {0.0};
    return s;
  }

  /// Reduced grid for single-core runs.
  static SearchSpace desk(NetKind kind) {
    SearchSpace s;
    s.kind = kind;
    s.depths = {1, 2};
    s.layer_dims = {32, 64};
    s.top_dims = {32, 64};
    s.dropouts = {0.0, 0.2, 0.4};
    s.recurrent_dropouts = kind == NetKind::recurrent ? std::vector<double>{0.0, 0.2} : std::vector<double>{0.0};
    s.learning_rates = {0.01, 0.001};
    return s;
  }

  void validate() const {
    auto nonempty = [](bool ok, const char* axis) {
      if (!ok) throw InvalidArgument(std::string("search space: axis '") + axis + "' is empty");
    };
    nonempty(!depths.empty(), "depths");
    nonempty(!layer_dims.empty(), "layer_dims");
    nonempty(!top_dims.empty(), "top_dims");
    nonempty(!dropouts.empty(), "dropouts");
    nonempty(!recurrent_dropouts.empty(), "recurrent_dropouts");
    nonempty(!learning_rates.empty(), "learning_rates");
    for (int d : depths)
      if (d < (kind == NetKind::recurrent ? 1 : 0)) throw InvalidArgument("search space: invalid depth");
  }

  /// Layer-width sequences of one depth, in lexicographic order of sorted widths.
  std::vector<std::vector<int>> width_sequences(int depth) const {
    std::vector<int> dims = layer_dims;
    std::sort(dims.begin(), dims.end(), std::greater<>());
    std::vector<std::vector<int>> out;
    std::vector<int> cur;
    auto rec = [&](auto&& self, std::size_t from) -> void {
      if (static_cast<int>(cur.size()) == depth) {
        out.push_back(cur);
        return;
      }
      for (std::size_t i = taper ? from : 0; i < dims.size(); ++i) {
        cur.push_back(dims[i]);
        self(self, i);
        cur.pop_back();
      }
    };
    rec(rec, 0);
    return out;
  }

  std::vector<Config> enumerate() const {
    validate();
    std::vector<Config> out;
    for (int depth : depths)
      for (const auto& w : width_sequences(depth))
        for (int top : top_dims)
          for (double d : dropouts)
            for (double r : recurrent_dropouts)
              for (double lr : learning_rates) out.push_back({w, top, d, r, lr});
    return out;
  }

  bool contains(const Config& c) const {
    auto in = [](const auto& v, auto x) { return std::find(v.begin(), v.end(), x) != v.end(); };
    if (!in(depths, static_cast<int>(c.layer_dims.size()))) return false;
    for (std::size_t i = 0; i < c.layer_dims.size(); ++i) {
      if (!in(layer_dims, c.layer_dims[i])) return false;
      if (taper && i > 0 && c.layer_dims[i] > c.layer_dims[i - 1]) return false;
    }
    return in(top_dims, c.top_dim) && in(dropouts, c.dropout) && in(recurrent_dropouts, c.recurrent_dropout) &&
           in(learning_rates, c.learning_rate);
  }

  /// One-hot features for the surrogate: depth, width per layer slot (all zero
  /// when the slot is unused), top width, dropout, recurrent dropout, rate.
  std::vector<double> encode(const Config& c) const {
    std::vector<double> f;
    auto onehot = [&f](const auto& axis, auto v) {
      for (const auto& a : axis) f.push_back(a == v ? 1.0 : 0.0);
    };
    onehot(depths, static_cast<int>(c.layer_dims.size()));
    const int max_depth = *std::max_element(depths.begin(), depths.end());
    for (int p = 0; p < max_depth; ++p)
      for (int w : layer_dims)
        f.push_back(p < static_cast<int>(c.layer_dims.size()) && c.layer_dims[static_cast<std::size_t>(p)] == w);
    onehot(top_dims, c.top_dim);
    onehot(dropouts, c.dropout);
    onehot(recurrent_dropouts, c.recurrent_dropout);
    onehot(learning_rates, c.learning_rate);
    return f;
  }
};

inline void to_json(nlohmann::json& j, const SearchSpace& s) {
  j = {{"kind", nnet::kind_name(s.kind)},
       {"depths", s.depths},
       {"layer_dims", s.layer_dims},
       {"top_dims", s.top_dims},
       {"dropouts", s.dropouts},
       {"recurrent_dropouts", s.recurrent_dropouts},
       {"learning_rates", s.learning_rates},
       {"taper", s.taper}};
}

}  // namespace ctxeng::tuner
