#pragma once

// Checkpoint file: 8-byte magic, little-endian u64 header length, JSON header,
// then little-endian float32 parameters. Parameter order: LSTM layers first,
// each as gates i, f, g, o with (input weights, hidden weights, bias) per gate;
// then dense layers as (weights row-major in x out, bias).

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctxeng/common.hpp"
#include "ctxeng/nnet/train.hpp"
#include "ctxeng/synthgen/io.hpp"

namespace ctxeng::nnet {

inline constexpr char kCheckpointMagic[8] = {'C', 'T', 'X', 'M', 'O', 'D', 'L', '1'};

/// Internal parameter index for each checkpoint position.
inline std::vector<std::size_t> checkpoint_order(const Layout& L) {
  std::vector<std::size_t> order;
  order.reserve(L.total);
  for (const auto& b : L.lstm) {
    const std::size_t H = b.hidden, G = 4 * H;
    for (std::size_t k = 0; k < 4; ++k) {
      for (std::size_t r = 0; r < b.in; ++r)
        for (std::size_t j = 0; j < H; ++j) order.push_back(b.wx + r * G + k * H + j);
      for (std::size_t r = 0; r < H; ++r)
        for (std::size_t j = 0; j < H; ++j) order.push_back(b.wh + r * G + k * H + j);
      for (std::size_t j = 0; j < H; ++j) order.push_back(b.b + k * H + j);
    }
  }
  for (const auto& d : L.dense) {
    for (std::size_t i = 0; i < d.in * d.out; ++i) order.push_back(d.w + i);
    for (std::size_t j = 0; j < d.out; ++j) order.push_back(d.b + j);
  }
  if (order.size() != L.total) throw InvariantError("checkpoint: parameter order does not cover the layout");
  return order;
}

inline nlohmann::json checkpoint_header(const TrainedModel& m) {
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& r : m.trace)
    trace.push_back({{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"validation_rmse", r.validation_rmse}});
  return {{"format", "ctxeng-model"},
          {"version", 1},
          {"spec", m.spec},
          {"input_dim", m.input_dim},
          {"schema_fingerprint", m.schema_fingerprint},
          {"best_epoch", m.best_epoch},
          {"stopped_epoch", m.stopped_epoch},
          {"trace", trace},
          {"n_params", m.parameters.size()},
          {"dtype", "float32-le"},
          {"parameter_order", "lstm layer > gate(i,f,g,o) > (input_weights, hidden_weights, bias); dense layer > "
                              "(weights row-major, bias)"}};
}

inline std::string serialize_checkpoint(const TrainedModel& m) {
  const Layout L = make_layout(m.spec, m.input_dim);
  if (m.parameters.size() != L.total) throw InvariantError("checkpoint: parameter count does not match the spec");
  const std::string header = checkpoint_header(m).dump();
  std::string out(kCheckpointMagic, 8);
  std::uint64_t len = header.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xFF));
  out += header;
  for (std::size_t k : checkpoint_order(L)) {
    const std::uint32_t u = std::bit_cast<std::uint32_t>(m.parameters[k]);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
  }
  return out;
}

inline TrainedModel deserialize_checkpoint(const std::string& bytes, const std::string& name = "checkpoint") {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw IoError(name + ": not a model checkpoint");
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
  if (16 + len > bytes.size()) throw IoError(name + ": truncated header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(bytes.substr(16, len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(name + ": bad header: " + e.what());
  }
  TrainedModel m;
  m.spec = h.at("spec").get<NetworkSpec>();
  m.input_dim = h.at("input_dim").get<int>();
  m.schema_fingerprint = h.value("schema_fingerprint", "");
  m.best_epoch = h.value("best_epoch", 0);
  m.stopped_epoch = h.value("stopped_epoch", 0);
  for (const auto& r : h.value("trace", nlohmann::json::array()))
    m.trace.push_back({r.at("epoch").get<int>(), r.at("train_loss").get<double>(), r.at("validation_rmse").get<double>()});
  const Layout L = make_layout(m.spec, m.input_dim);
  const std::size_t blob = bytes.size() - 16 - len;
  if (blob != 4 * L.total)
    throw IoError(name + ": expected " + std::to_string(4 * L.total) + " parameter bytes, found " + std::to_string(blob));
  m.parameters.assign(L.total, 0.0f);
  const auto order = checkpoint_order(L);
  const char* p = bytes.data() + 16 + len;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    std::uint32_t u = 0;
    for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[4 * pos + i])) << (8 * i);
    m.parameters[order[pos]] = std::bit_cast<float>(u);
  }
  return m;
}

inline void write_checkpoint(const std::string& path, const TrainedModel& m) {
  synthgen::io_detail::write_file(path, serialize_checkpoint(m));
}

inline TrainedModel read_checkpoint(const std::string& path) {
  return deserialize_checkpoint(synthgen::io_detail::read_file(path), path);
}

}  // namespace ctxeng::nnet
