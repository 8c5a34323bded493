#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "hgnn/error.hpp"
#include "hgnn/tensor.hpp"

namespace hgnn {

struct Edge {
  std::size_t src = 0;
  std::size_t dst = 0;
  std::size_t type = 0;

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct InEdge {
  std::size_t src = 0;
  std::size_t type = 0;

  friend auto operator<=>(const InEdge&, const InEdge&) = default;
};

inline std::size_t index_of(const std::vector<std::string>& names, const std::string& name, const char* what) {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw Error(ErrorCode::Format, std::string("unknown ") + what + " '" + name + "'");
  return static_cast<std::size_t>(it - names.begin());
}

/// Typed multigraph. Edges are directed src -> dst; a node's neighborhood is
/// the set of its incoming edges.
class MmhnGraph {
 public:
  MmhnGraph() = default;

  MmhnGraph(std::vector<std::string> node_type_names, std::vector<std::string> edge_type_names,
            std::vector<std::size_t> node_type_of, std::vector<Edge> edges)
      : node_type_names_(std::move(node_type_names)),
        edge_type_names_(std::move(edge_type_names)),
        node_type_of_(std::move(node_type_of)),
        edges_(std::move(edges)) {
    if (node_type_names_.size() + edge_type_names_.size() <= 2) {
      throw Error(ErrorCode::Format, "a heterogeneous network needs |node types| + |edge types| > 2");
    }
    for (std::size_t i = 0; i < node_type_of_.size(); ++i) {
      if (node_type_of_[i] >= node_type_names_.size()) {
        throw Error(ErrorCode::Format, "node " + std::to_string(i) + ": unknown node type id");
      }
    }
    in_neighbors_.assign(node_type_of_.size(), {});
    for (std::size_t k = 0; k < edges_.size(); ++k) {
      const Edge& e = edges_[k];
      if (e.src >= node_count() || e.dst >= node_count()) {
        throw Error(ErrorCode::Format, "edge " + std::to_string(k) + ": invalid endpoint (" + std::to_string(e.src) +
                                           " -> " + std::to_string(e.dst) + ")");
      }
      if (e.type >= edge_type_names_.size()) {
        throw Error(ErrorCode::Format, "edge " + std::to_string(k) + ": unknown edge type id");
      }
      in_neighbors_[e.dst].push_back({e.src, e.type});
    }
    for (auto& nb : in_neighbors_) std::sort(nb.begin(), nb.end());
  }

  std::size_t node_count() const { return node_type_of_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  const std::vector<std::string>& node_type_names() const { return node_type_names_; }
  const std::vector<std::string>& edge_type_names() const { return edge_type_names_; }
  std::size_t node_type_count() const { return node_type_names_.size(); }
  std::size_t edge_type_count() const { return edge_type_names_.size(); }
  std::size_t node_type(std::size_t node) const { return node_type_of_.at(node); }
  const std::vector<std::size_t>& node_types() const { return node_type_of_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<InEdge>& in_neighbors(std::size_t node) const { return in_neighbors_.at(node); }

  /// Edge list ordered by (dst, src, type): a pure function of the edge
  /// multiset, independent of file row order.
  std::vector<Edge> canonical_edges() const {
    std::vector<Edge> out;
    out.reserve(edges_.size());
    for (std::size_t i = 0; i < in_neighbors_.size(); ++i)
      for (const InEdge& e : in_neighbors_[i]) out.push_back({e.src, i, e.type});
    return out;
  }

  std::vector<std::size_t> nodes_of_type(std::size_t type) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < node_count(); ++i)
      if (node_type_of_[i] == type) out.push_back(i);
    return out;
  }

  /// Copy with one extra edge type "self" and an i -> i edge per node.
  MmhnGraph with_self_loops() const {
    auto etypes = edge_type_names_;
    etypes.push_back("self");
    auto edges = edges_;
    for (std::size_t i = 0; i < node_count(); ++i) edges.push_back({i, i, etypes.size() - 1});
    return MmhnGraph(node_type_names_, std::move(etypes), node_type_of_, std::move(edges));
  }

  friend bool operator==(const MmhnGraph& a, const MmhnGraph& b) {
    return a.node_type_names_ == b.node_type_names_ && a.edge_type_names_ == b.edge_type_names_ &&
           a.node_type_of_ == b.node_type_of_ && a.in_neighbors_ == b.in_neighbors_;
  }

 private:
  std::vector<std::string> node_type_names_;
  std::vector<std::string> edge_type_names_;
  std::vector<std::size_t> node_type_of_;
  std::vector<Edge> edges_;
  std::vector<std::vector<InEdge>> in_neighbors_;
};

struct ModalitySchema {
  std::vector<std::string> modality_names;
  // native[o][m]: node type o natively carries modality m.
  std::vector<std::vector<bool>> native;
  std::vector<std::size_t> input_dim;
  std::size_t target_type = 0;
  std::vector<std::string> categories;

  std::size_t modality_count() const { return modality_names.size(); }
  std::size_t modality_index(const std::string& name) const { return index_of(modality_names, name, "modality"); }
  std::size_t category_index(const std::string& name) const { return index_of(categories, name, "category"); }

  bool any_missing() const {
    for (const auto& row : native)
      for (bool b : row)
        if (!b) return true;
    return false;
  }

  void validate(const MmhnGraph& g) const {
    if (modality_names.empty()) throw Error(ErrorCode::Format, "schema declares no modalities");
    if (input_dim.size() != modality_names.size()) throw Error(ErrorCode::Format, "schema: one dim per modality");
    for (std::size_t m = 0; m < input_dim.size(); ++m)
      if (input_dim[m] == 0) throw Error(ErrorCode::Format, "modality '" + modality_names[m] + "' has dim 0");
    if (native.size() != g.node_type_count()) throw Error(ErrorCode::Format, "schema: modality map must cover every node type");
    for (std::size_t o = 0; o < native.size(); ++o) {
      if (native[o].size() != modality_count()) throw Error(ErrorCode::Format, "schema: modality map width");
      if (std::none_of(native[o].begin(), native[o].end(), [](bool b) { return b; })) {
        throw Error(ErrorCode::Format, "node type '" + g.node_type_names()[o] + "' has no modality");
      }
    }
    if (target_type >= g.node_type_count()) throw Error(ErrorCode::Format, "target type is not a registered node type");
    if (categories.size() < 2) throw Error(ErrorCode::Format, "need >= 2 categories");
  }

  friend bool operator==(const ModalitySchema&, const ModalitySchema&) = default;
};

/// Per-modality input matrices plus the native-modality mask.
struct FeatureStore {
  std::vector<Tensor> features;             // features[m] is [nodes x input_dim[m]]
  std::vector<std::vector<bool>> presence;  // presence[i][m]

  static std::vector<std::vector<bool>> presence_for(const MmhnGraph& g, const ModalitySchema& s) {
    std::vector<std::vector<bool>> p(g.node_count());
    for (std::size_t i = 0; i < g.node_count(); ++i) p[i] = s.native.at(g.node_type(i));
    return p;
  }

  friend bool operator==(const FeatureStore&, const FeatureStore&) = default;
};

struct DatasetSplit {
  std::vector<std::size_t> train, val, test;
  std::map<std::size_t, std::size_t> labels;  // node -> category index

  void validate(const MmhnGraph& g, const ModalitySchema& s) const {
    std::vector<int> seen(g.node_count(), 0);
    for (const auto* part : {&train, &val, &test}) {
      for (std::size_t id : *part) {
        if (id >= g.node_count()) throw Error(ErrorCode::Format, "split: node " + std::to_string(id) + " out of range");
        if (seen[id]++) throw Error(ErrorCode::Format, "split: node " + std::to_string(id) + " in overlapping splits");
        if (g.node_type(id) != s.target_type) {
          throw Error(ErrorCode::Format, "split: node " + std::to_string(id) + " is not of the target type");
        }
        if (!labels.count(id)) throw Error(ErrorCode::Format, "split: node " + std::to_string(id) + " has no label");
      }
    }
    for (const auto& [id, c] : labels) {
      if (c >= s.categories.size()) throw Error(ErrorCode::Format, "label outside categories for node " + std::to_string(id));
    }
  }

  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

struct Dataset {
  MmhnGraph graph;
  ModalitySchema schema;
  FeatureStore features;
  DatasetSplit split;
};

struct CompletionOptions {
  // Node types missing both the filled modality and the reference get zeros
  // instead of an error.
  bool zero_fill_without_reference = false;
};

/// Fills every non-native (node, modality) row from the reference modality:
/// copy, then zero-pad or truncate to the target width. The presence mask is
/// left untouched, so applying this twice is the same as applying it once.
inline FeatureStore complete_missing_features(const FeatureStore& store, const ModalitySchema& schema,
                                              std::size_t reference, const CompletionOptions& opts = {}) {
  if (reference >= schema.modality_count()) throw Error(ErrorCode::Config, "reference modality out of range");
  FeatureStore out = store;
  const Tensor& ref = store.features.at(reference);
  for (std::size_t i = 0; i < store.presence.size(); ++i) {
    for (std::size_t m = 0; m < schema.modality_count(); ++m) {
      if (store.presence[i][m]) continue;
      Tensor& x = out.features[m];
      const std::size_t width = x.cols();
      if (!store.presence[i][reference]) {
        if (!opts.zero_fill_without_reference) {
          throw Error(ErrorCode::Config, "node " + std::to_string(i) + " lacks reference modality '" +
                                             schema.modality_names[reference] + "'");
        }
        for (std::size_t c = 0; c < width; ++c) x(i, c) = 0.0;
        continue;
      }
      for (std::size_t c = 0; c < width; ++c) x(i, c) = c < ref.cols() ? ref(i, c) : 0.0;
    }
  }
  return out;
}

}  // namespace hgnn
