#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hgnn/error.hpp"
#include "hgnn/graph.hpp"

namespace hgnn {

enum class AlignmentSign { AsWritten, Negated };

struct ModelConfig {
  std::size_t layers = 3;
  std::size_t hidden_dim = 64;
  std::size_t heads = 8;
  std::size_t fusion_dim = 0;  // 0: same as hidden_dim
  double dropout = 0.6;

  // Ablation switches. Defaults are the full model.
  bool cross_modal_unit = true;
  bool adapt_mean = false;
  bool influenced_modality_in_lambda = false;
  bool neighbor_in_lambda = true;
  bool alignment_modulation = true;
  bool attention_loss = true;
  bool individual_modality_loss = true;
  std::vector<std::string> modalities_enabled;  // empty: all
  bool node_type_dependent_params = true;
  bool edge_type_dependent_params = true;
  bool nonlinear_projections = false;

  AlignmentSign alignment_sign = AlignmentSign::AsWritten;
  bool attention_scale = true;
  bool add_self_loops = false;
  bool normalize_attention_loss_by_pairs = false;
  bool share_modality_classifiers = false;
  std::string reference_modality;  // empty: first modality
  bool zero_fill_without_reference = false;

  std::uint64_t seed = 0;

  std::size_t head_dim() const { return hidden_dim / heads; }
  std::size_t fusion_width() const { return fusion_dim ? fusion_dim : hidden_dim; }

  void validate() const {
    if (layers == 0) throw Error(ErrorCode::Config, "layers must be >= 1");
    if (heads == 0 || hidden_dim == 0 || hidden_dim % heads != 0) {
      throw Error(ErrorCode::Config, "hidden_dim must be a positive multiple of heads");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorCode::Config, "dropout must lie in [0, 1)");
  }
};

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t max_iterations = 300;
  std::size_t patience = 50;
  std::size_t threads = 1;  // parallel seeds in run_seeds
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

inline nlohmann::ordered_json to_json(const RunConfig& rc) {
  const ModelConfig& m = rc.model;
  nlohmann::ordered_json j;
  j["layers"] = m.layers;
  j["hidden_dim"] = m.hidden_dim;
  j["heads"] = m.heads;
  j["fusion_dim"] = m.fusion_dim;
  j["dropout"] = m.dropout;
  j["cross_modal_unit"] = m.cross_modal_unit;
  j["adapt"] = m.adapt_mean ? "mean" : "on";
  j["influenced_modality_in_lambda"] = m.influenced_modality_in_lambda;
  j["neighbor_in_lambda"] = m.neighbor_in_lambda;
  j["alignment_modulation"] = m.alignment_modulation;
  j["attention_loss"] = m.attention_loss;
  j["individual_modality_loss"] = m.individual_modality_loss;
  j["modalities_enabled"] = m.modalities_enabled;
  j["node_type_dependent_params"] = m.node_type_dependent_params;
  j["edge_type_dependent_params"] = m.edge_type_dependent_params;
  j["nonlinear_projections"] = m.nonlinear_projections;
  j["alignment_sign"] = m.alignment_sign == AlignmentSign::AsWritten ? "as_written" : "negated";
  j["attention_scale"] = m.attention_scale;
  j["add_self_loops"] = m.add_self_loops;
  j["normalize_attention_loss_by_pairs"] = m.normalize_attention_loss_by_pairs;
  j["share_modality_classifiers"] = m.share_modality_classifiers;
  j["reference_modality"] = m.reference_modality;
  j["zero_fill_without_reference"] = m.zero_fill_without_reference;
  j["seed"] = m.seed;
  j["learning_rate"] = rc.train.learning_rate;
  j["max_iterations"] = rc.train.max_iterations;
  j["patience"] = rc.train.patience;
  j["threads"] = rc.train.threads;
  return j;
}

/// Reads every key present in `j` onto a copy of `base`. Unknown keys are an
/// error.
inline RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {}) {
  if (!j.is_object()) throw Error(ErrorCode::Config, "config must be a JSON object");
  const auto known = to_json(base);
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw Error(ErrorCode::Config, "unknown config key '" + key + "'");
  }
  ModelConfig& m = base.model;
  TrainConfig& t = base.train;
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("layers", m.layers);
    get("hidden_dim", m.hidden_dim);
    get("heads", m.heads);
    get("fusion_dim", m.fusion_dim);
    get("dropout", m.dropout);
    get("cross_modal_unit", m.cross_modal_unit);
    if (j.contains("adapt")) {
      const auto v = j.at("adapt").get<std::string>();
      if (v != "on" && v != "mean") throw Error(ErrorCode::Config, "adapt must be 'on' or 'mean'");
      m.adapt_mean = v == "mean";
    }
    get("influenced_modality_in_lambda", m.influenced_modality_in_lambda);
    get("neighbor_in_lambda", m.neighbor_in_lambda);
    get("alignment_modulation", m.alignment_modulation);
    get("attention_loss", m.attention_loss);
    get("individual_modality_loss", m.individual_modality_loss);
    get("modalities_enabled", m.modalities_enabled);
    get("node_type_dependent_params", m.node_type_dependent_params);
    get("edge_type_dependent_params", m.edge_type_dependent_params);
    get("nonlinear_projections", m.nonlinear_projections);
    if (j.contains("alignment_sign")) {
      const auto v = j.at("alignment_sign").get<std::string>();
      if (v != "as_written" && v != "negated") throw Error(ErrorCode::Config, "alignment_sign must be 'as_written' or 'negated'");
      m.alignment_sign = v == "negated" ? AlignmentSign::Negated : AlignmentSign::AsWritten;
    }
    get("attention_scale", m.attention_scale);
    get("add_self_loops", m.add_self_loops);
    get("normalize_attention_loss_by_pairs", m.normalize_attention_loss_by_pairs);
    get("share_modality_classifiers", m.share_modality_classifiers);
    get("reference_modality", m.reference_modality);
    get("zero_fill_without_reference", m.zero_fill_without_reference);
    get("seed", m.seed);
    get("learning_rate", t.learning_rate);
    get("max_iterations", t.max_iterations);
    get("patience", t.patience);
    get("threads", t.threads);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Config, std::string("bad config value: ") + e.what());
  }
  m.validate();
  return base;
}

/// Applies one `key=value` override. The value is parsed as JSON when
/// possible (numbers, booleans, lists) and as a bare string otherwise.
inline RunConfig apply_override(const RunConfig& base, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw Error(ErrorCode::Config, "override must be key=value: '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  if (!to_json(base).contains(key)) throw Error(ErrorCode::Config, "unknown config key '" + key + "'");
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;
  }
  return run_config_from_json(nlohmann::json{{key, value}}, base);
}

inline const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names = {"full",      "-cross",      "-adapt",   "+inf",     "-nei",
                                                 "-align",    "-Latt",       "-Lind",    "text-only", "vision-only",
                                                 "node-ind",  "edge-ind",    "nonlinear"};
  return names;
}

/// Configuration of a named ablation variant on top of `base`.
inline RunConfig apply_variant(RunConfig rc, const std::string& name) {
  ModelConfig& m = rc.model;
  if (name == "full") return rc;
  if (name == "-cross") m.cross_modal_unit = false;
  else if (name == "-adapt") m.adapt_mean = true;
  else if (name == "+inf") m.influenced_modality_in_lambda = true;
  else if (name == "-nei") m.neighbor_in_lambda = false;
  else if (name == "-align") m.alignment_modulation = false;
  else if (name == "-Latt") m.attention_loss = false;
  else if (name == "-Lind") m.individual_modality_loss = false;
  else if (name == "text-only") m.modalities_enabled = {"text"};
  else if (name == "vision-only") m.modalities_enabled = {"vision"};
  else if (name == "node-ind") m.node_type_dependent_params = false;
  else if (name == "edge-ind") m.edge_type_dependent_params = false;
  else if (name == "nonlinear") m.nonlinear_projections = true;
  else throw Error(ErrorCode::Config, "unknown variant '" + name + "'");
  return rc;
}

namespace detail {

struct Fnv1a {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 0x100000001b3ULL;
    }
  }
  void str(const std::string& s) {
    bytes(s.data(), s.size());
    bytes("\0", 1);
  }
  void num(std::uint64_t v) { bytes(&v, sizeof v); }
  void num(double v) { bytes(&v, sizeof v); }
};

inline std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace detail

/// Hash of everything a checkpoint depends on structurally: type names,
/// modality names and dims, target type, categories.
inline std::string schema_hash(const MmhnGraph& g, const ModalitySchema& s) {
  detail::Fnv1a f;
  for (const auto& n : g.node_type_names()) f.str(n);
  f.str("|");
  for (const auto& n : g.edge_type_names()) f.str(n);
  f.str("|");
  for (std::size_t m = 0; m < s.modality_count(); ++m) {
    f.str(s.modality_names[m]);
    f.num(static_cast<std::uint64_t>(s.input_dim[m]));
  }
  for (const auto& row : s.native)
    for (bool b : row) f.num(static_cast<std::uint64_t>(b));
  f.num(static_cast<std::uint64_t>(s.target_type));
  for (const auto& c : s.categories) f.str(c);
  return detail::hex(f.h);
}

inline std::string dataset_hash(const Dataset& ds) {
  detail::Fnv1a f;
  f.str(schema_hash(ds.graph, ds.schema));
  for (std::size_t t : ds.graph.node_types()) f.num(static_cast<std::uint64_t>(t));
  for (const Edge& e : ds.graph.canonical_edges()) {
    f.num(static_cast<std::uint64_t>(e.src));
    f.num(static_cast<std::uint64_t>(e.dst));
    f.num(static_cast<std::uint64_t>(e.type));
  }
  for (const Tensor& x : ds.features.features)
    for (double v : x.values()) f.num(v);
  for (const auto& [id, c] : ds.split.labels) {
    f.num(static_cast<std::uint64_t>(id));
    f.num(static_cast<std::uint64_t>(c));
  }
  for (const auto* part : {&ds.split.train, &ds.split.val, &ds.split.test}) {
    f.str("|");
    for (std::size_t id : *part) f.num(static_cast<std::uint64_t>(id));
  }
  return detail::hex(f.h);
}

}  // namespace hgnn
