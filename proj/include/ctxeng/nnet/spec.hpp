#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctxeng/common.hpp"

namespace ctxeng::nnet {

enum class NetKind { recurrent, dense };

inline std::string kind_name(NetKind k) { return k == NetKind::recurrent ? "recurrent" : "dense"; }

inline NetKind parse_net_kind(const std::string& s) {
  if (s == "recurrent") return NetKind::recurrent;
  if (s == "dense") return NetKind::dense;
  throw InvalidArgument("unknown network kind '" + s + "'");
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool operator==(const AdamConfig&) const = default;
};

struct NetworkSpec {
  NetKind kind = NetKind::recurrent;
  std::vector<int> layer_dims = {32};  // LSTM layers, or dense hidden layers
  int top_dim = 32;
  double dropout = 0.0;
  double recurrent_dropout = 0.0;
  double learning_rate = 0.001;
  int batch_size = 256;
  int max_epochs = 50;
  int patience = 5;
  double clip_norm = 5.0;
  AdamConfig adam;
  std::uint64_t seed = 0;

  bool operator==(const NetworkSpec&) const = default;

  void validate() const {
    if (top_dim < 1) throw InvalidArgument("network spec: top_dim must be >= 1");
    for (int d : layer_dims)
      if (d < 1) throw InvalidArgument("network spec: layer dims must be >= 1");
    if (kind == NetKind::recurrent && layer_dims.empty())
      throw InvalidArgument("network spec: a recurrent network needs at least one LSTM layer");
    if (dropout < 0.0 || dropout >= 1.0 || recurrent_dropout < 0.0 || recurrent_dropout >= 1.0)
      throw InvalidArgument("network spec: dropout rates must lie in [0, 1)");
    if (learning_rate < 0.0) throw InvalidArgument("network spec: negative learning rate");
    if (batch_size < 1 || max_epochs < 1 || patience < 1)
      throw InvalidArgument("network spec: batch_size, max_epochs and patience must be >= 1");
  }

  /// Compact label, e.g. "lstm[64,32]-top32-do0.2-rdo0-lr0.001".
  std::string label() const {
    std::string s = kind == NetKind::recurrent ? "lstm[" : "dense[";
    for (std::size_t i = 0; i < layer_dims.size(); ++i) s += (i ? "," : "") + std::to_string(layer_dims[i]);
    auto num = [](double v) {
      std::string t = nlohmann::json(v).dump();
      return t;
    };
    s += "]-top" + std::to_string(top_dim) + "-do" + num(dropout);
    if (kind == NetKind::recurrent) s += "-rdo" + num(recurrent_dropout);
    s += "-lr" + num(learning_rate);
    return s;
  }
};

inline void to_json(nlohmann::json& j, const NetworkSpec& s) {
  j = {{"kind", kind_name(s.kind)},
       {"layer_dims", s.layer_dims},
       {"top_dim", s.top_dim},
       {"dropout", s.dropout},
       {"recurrent_dropout", s.recurrent_dropout},
       {"learning_rate", s.learning_rate},
       {"batch_size", s.batch_size},
       {"max_epochs", s.max_epochs},
       {"patience", s.patience},
       {"clip_norm", s.clip_norm},
       {"optimizer", {{"name", "adam"}, {"beta1", s.adam.beta1}, {"beta2", s.adam.beta2}, {"epsilon", s.adam.epsilon}}},
       {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, NetworkSpec& s) {
  s.kind = parse_net_kind(j.at("kind").get<std::string>());
  s.layer_dims = j.at("layer_dims").get<std::vector<int>>();
  s.top_dim = j.at("top_dim").get<int>();
  s.dropout = j.at("dropout").get<double>();
  s.recurrent_dropout = j.at("recurrent_dropout").get<double>();
  s.learning_rate = j.at("learning_rate").get<double>();
  s.batch_size = j.at("batch_size").get<int>();
  s.max_epochs = j.at("max_epochs").get<int>();
  s.patience = j.at("patience").get<int>();
  s.clip_norm = j.value("clip_norm", 5.0);
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    s.adam.beta1 = o.at("beta1").get<double>();
    s.adam.beta2 = o.at("beta2").get<double>();
    s.adam.epsilon = o.at("epsilon").get<double>();
  }
  s.seed = j.at("seed").get<std::uint64_t>();
}

}  // namespace ctxeng::nnet
