#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "hgnn/autodiff.hpp"
#include "hgnn/error.hpp"
#include "hgnn/tensor.hpp"

namespace hgnn {

/// Named learnable tensors. Names follow
/// `<role>.<type-name>[.<modality>].<weight|bias>`; the map keeps them sorted,
/// which fixes iteration (and therefore reduction) order.
using ParameterSet = std::map<std::string, Tensor>;
using GradientMap = std::map<std::string, Tensor>;

/// Parameters bound as leaves on one tape.
class BoundParameters {
 public:
  BoundParameters(Tape& tape, const ParameterSet& params) {
    for (const auto& [name, value] : params) vars_.emplace(name, tape.leaf(value));
  }

  Var operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw Error(ErrorCode::Config, "missing parameter block '" + name + "'");
    return it->second;
  }

  bool contains(const std::string& name) const { return vars_.count(name) != 0; }

  GradientMap gradients(const Tape& tape) const {
    GradientMap out;
    for (const auto& [name, v] : vars_) out.emplace(name, tape.grad(v));
    return out;
  }

 private:
  std::map<std::string, Var> vars_;
};

inline std::size_t parameter_count(const ParameterSet& p) {
  std::size_t n = 0;
  for (const auto& [_, t] : p) n += t.size();
  return n;
}

// Checkpoint document: {"format": "hgnn-checkpoint", "version": 1,
// "parameters": {name: {"shape": [...], "values": [...]}}, "metadata": {...}}.
// Values are written with 17 significant digits so a reload is bit-exact.
inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json checkpoint_to_json(const ParameterSet& params, const nlohmann::json& metadata = {}) {
  nlohmann::json doc;
  doc["format"] = "hgnn-checkpoint";
  doc["version"] = kCheckpointVersion;
  doc["metadata"] = metadata.is_null() ? nlohmann::json::object() : metadata;
  nlohmann::json& ps = doc["parameters"];
  ps = nlohmann::json::object();
  for (const auto& [name, t] : params) ps[name] = {{"shape", t.shape()}, {"values", t.storage()}};
  return doc;
}

inline ParameterSet checkpoint_from_json(const nlohmann::json& doc, nlohmann::json* metadata = nullptr) {
  if (doc.value("format", "") != "hgnn-checkpoint") throw Error(ErrorCode::Format, "not an hgnn checkpoint");
  if (doc.value("version", 0) != kCheckpointVersion) {
    throw Error(ErrorCode::Format, "unsupported checkpoint version " + doc.value("version", nlohmann::json(0)).dump());
  }
  ParameterSet params;
  for (const auto& [name, entry] : doc.at("parameters").items()) {
    params.emplace(name, Tensor(entry.at("shape").get<std::vector<std::size_t>>(),
                                entry.at("values").get<std::vector<double>>()));
  }
  if (metadata) *metadata = doc.value("metadata", nlohmann::json::object());
  return params;
}

inline void save_checkpoint(const std::string& path, const ParameterSet& params, const nlohmann::json& metadata = {}) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write checkpoint " + path);
  out << checkpoint_to_json(params, metadata).dump(1) << '\n';
}

inline ParameterSet load_checkpoint(const std::string& path, nlohmann::json* metadata = nullptr) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open checkpoint " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, path + ": " + e.what());
  }
  return checkpoint_from_json(doc, metadata);
}

}  // namespace hgnn
