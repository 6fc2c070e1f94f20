#pragma once

#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "candlerl/error.hpp"
#include "candlerl/nn/layers.hpp"

namespace candlerl::nn {

inline constexpr const char* kCheckpointFormat = "candlerl-weights";
inline constexpr int kCheckpointVersion = 1;

/// Named tensor as stored in a checkpoint.
struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Every parameter and buffer of `net`, named `<prefix><layer>.<kind>.<name>`.
inline std::vector<std::pair<std::string, Tensor*>> named_state(Sequential& net, const std::string& prefix) {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (std::size_t i = 0; i < net.size(); ++i) {
    auto& layer = net[i];
    const std::string base = prefix + std::to_string(i) + "." + std::string(to_string(layer.kind())) + ".";
    for (auto* p : layer.parameters()) out.emplace_back(base + p->name, &p->value);
    for (auto& [name, t] : layer.buffers()) out.emplace_back(base + name, t);
  }
  return out;
}

/// Checkpoint document:
///   {"format": "candlerl-weights", "version": 1,
///    "tensors": [{"name": str, "shape": [int...], "data": [double...]}...]}
/// Tensors appear in network order; doubles are written with round-trip precision.
inline nlohmann::json to_json(const std::vector<NamedTensor>& tensors) {
  nlohmann::json doc;
  doc["format"] = kCheckpointFormat;
  doc["version"] = kCheckpointVersion;
  auto& arr = doc["tensors"] = nlohmann::json::array();
  for (const auto& nt : tensors)
    arr.push_back({{"name", nt.name}, {"shape", nt.tensor.shape()}, {"data", nt.tensor.values()}});
  return doc;
}

inline std::vector<NamedTensor> tensors_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || doc.value("format", "") != kCheckpointFormat)
    throw DataError("checkpoint: unrecognized format");
  if (doc.value("version", 0) != kCheckpointVersion)
    throw DataError("checkpoint: unsupported version " + std::to_string(doc.value("version", 0)));
  std::vector<NamedTensor> out;
  try {
    for (const auto& t : doc.at("tensors"))
      out.push_back({t.at("name").get<std::string>(),
                     Tensor(t.at("shape").get<Shape>(), t.at("data").get<std::vector<double>>())});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  } catch (const ComputeError& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  return out;
}

/// Copies stored tensors into `state`, requiring identical names and shapes.
inline void load_state(const std::vector<NamedTensor>& stored, const std::vector<std::pair<std::string, Tensor*>>& state) {
  if (stored.size() != state.size())
    throw DataError("checkpoint: expected " + std::to_string(state.size()) + " tensors, found " +
                    std::to_string(stored.size()));
  for (std::size_t i = 0; i < state.size(); ++i) {
    if (stored[i].name != state[i].first) throw DataError("checkpoint: expected tensor '" + state[i].first + "', found '" + stored[i].name + "'");
    if (stored[i].tensor.shape() != state[i].second->shape())
      throw DataError("checkpoint: shape mismatch for '" + state[i].first + "'");
    *state[i].second = stored[i].tensor;
  }
}

inline std::vector<NamedTensor> snapshot(const std::vector<std::pair<std::string, Tensor*>>& state) {
  std::vector<NamedTensor> out;
  out.reserve(state.size());
  for (const auto& [name, t] : state) out.push_back({name, *t});
  return out;
}

}  // namespace candlerl::nn
