#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "hgnn/error.hpp"
#include "hgnn/graph.hpp"
#include "hgnn/nn.hpp"
#include "hgnn/split.hpp"

namespace hgnn {

enum class PlantingMode {
  // Each target node carries its label in exactly one modality; the other
  // modalities hold label-independent mixture draws.
  CrossModal,
  // Every modality of a target node carries its label.
  Aligned,
  // No modality carries label information.
  None,
};

inline PlantingMode planting_from_string(const std::string& s) {
  if (s == "cross-modal") return PlantingMode::CrossModal;
  if (s == "aligned") return PlantingMode::Aligned;
  if (s == "none") return PlantingMode::None;
  throw Error(ErrorCode::Config, "unknown planting mode '" + s + "'");
}

inline std::string to_string(PlantingMode p) {
  switch (p) {
    case PlantingMode::CrossModal: return "cross-modal";
    case PlantingMode::Aligned: return "aligned";
    case PlantingMode::None: return "none";
  }
  return "?";
}

/// Two node types: "item" (target, labeled) and "tag" (auxiliary, label-free
/// features). Items link to tags of their own latent category with
/// probability `homophily`, which yields 2-hop item-tag-item homophily;
/// item-item links follow the same rule.
struct SyntheticSpec {
  std::size_t target_nodes = 200;
  std::size_t aux_nodes = 100;
  std::size_t categories = 2;
  std::vector<std::size_t> dims = {8, 8};
  std::vector<std::string> modality_names;  // default: text, vision, m2, ...
  PlantingMode planting = PlantingMode::CrossModal;
  bool aux_missing_last_modality = false;
  std::size_t aux_links_per_target = 3;
  std::size_t target_links_per_target = 2;
  double homophily = 0.8;
  double signal = 4.0;  // distance of cluster means from the origin
  double noise = 1.0;   // isotropic Gaussian std
  SplitRatios ratios = {0.2, 0.1, 0.7};
};

inline std::vector<std::string> default_modality_names(std::size_t count) {
  std::vector<std::string> names;
  for (std::size_t m = 0; m < count; ++m) {
    if (m == 0) names.push_back("text");
    else if (m == 1) names.push_back("vision");
    else names.push_back("m" + std::to_string(m));
  }
  return names;
}

/// For cross-modal planting: index of the label-bearing modality per target
/// node, in target order. Exposed for oracles.
struct SyntheticTruth {
  std::vector<std::size_t> target_ids;
  std::vector<std::size_t> informative_modality;
};

inline Dataset generate_synthetic_mmhn(const SyntheticSpec& spec, std::uint64_t seed, SyntheticTruth* truth = nullptr) {
  if (spec.categories < 2) throw Error(ErrorCode::Precondition, "need >= 2 categories");
  if (spec.dims.empty()) throw Error(ErrorCode::Precondition, "need at least one modality");
  for (std::size_t d : spec.dims)
    if (d == 0) throw Error(ErrorCode::Precondition, "modality dims must be positive");
  if (spec.target_nodes < 3 * spec.categories) throw Error(ErrorCode::Precondition, "too few target nodes for the split");
  if (spec.aux_nodes == 0 && spec.aux_links_per_target > 0) {
    throw Error(ErrorCode::Precondition, "aux links requested without aux nodes");
  }
  const std::size_t nmod = spec.dims.size();
  const auto names = spec.modality_names.empty() ? default_modality_names(nmod) : spec.modality_names;
  if (names.size() != nmod) throw Error(ErrorCode::Precondition, "one name per modality");

  Rng rng(mix_seed(seed, 0x5e7));
  const std::size_t T = spec.target_nodes, A = spec.aux_nodes, C = spec.categories;
  const std::size_t n = T + A;

  std::vector<std::size_t> node_type(n, 0);
  for (std::size_t i = T; i < n; ++i) node_type[i] = 1;

  std::vector<std::size_t> label(T);
  for (std::size_t i = 0; i < T; ++i) label[i] = i % C;
  shuffle(label, rng);
  std::vector<std::size_t> aux_label(A);
  for (std::size_t j = 0; j < A; ++j) aux_label[j] = j % C;

  std::vector<std::size_t> informative(T, 0);
  {
    std::vector<std::size_t> order(T);
    for (std::size_t i = 0; i < T; ++i) order[i] = i;
    shuffle(order, rng);
    for (std::size_t k = 0; k < T; ++k) informative[order[k]] = k * nmod / T;
  }

  ModalitySchema schema;
  schema.modality_names = names;
  schema.input_dim = spec.dims;
  schema.native = {std::vector<bool>(nmod, true), std::vector<bool>(nmod, true)};
  if (spec.aux_missing_last_modality) {
    if (nmod < 2) throw Error(ErrorCode::Precondition, "a missing modality needs at least two modalities");
    schema.native[1][nmod - 1] = false;
  }
  schema.target_type = 0;
  for (std::size_t c = 0; c < C; ++c) schema.categories.push_back("c" + std::to_string(c));

  FeatureStore store;
  for (std::size_t m = 0; m < nmod; ++m) store.features.push_back(Tensor::zeros(n, spec.dims[m]));
  auto plant = [&](std::size_t node, std::size_t m, std::size_t axis) {
    Tensor& x = store.features[m];
    for (std::size_t c = 0; c < x.cols(); ++c) x(node, c) = spec.noise * standard_normal(rng);
    x(node, axis % x.cols()) += spec.signal;
  };
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t m = 0; m < nmod; ++m) {
      const bool carries = spec.planting == PlantingMode::Aligned ||
                           (spec.planting == PlantingMode::CrossModal && informative[i] == m);
      // Label-independent mixture components sit on axes C and C+1.
      plant(i, m, carries ? label[i] : C + (uniform01(rng) < 0.5 ? 0 : 1));
    }
  }
  for (std::size_t j = 0; j < A; ++j) {
    for (std::size_t m = 0; m < nmod; ++m) {
      if (!schema.native[1][m]) continue;
      Tensor& x = store.features[m];
      for (std::size_t c = 0; c < x.cols(); ++c) x(T + j, c) = spec.noise * standard_normal(rng);
    }
  }
  store.presence = std::vector<std::vector<bool>>(n);
  for (std::size_t i = 0; i < n; ++i) store.presence[i] = schema.native[node_type[i]];

  // Edge types: 0 item->tag, 1 tag->item, 2 item->item.
  std::vector<std::vector<std::size_t>> aux_by_label(C), target_by_label(C);
  for (std::size_t j = 0; j < A; ++j) aux_by_label[aux_label[j]].push_back(T + j);
  for (std::size_t i = 0; i < T; ++i) target_by_label[label[i]].push_back(i);
  auto pick = [&](const std::vector<std::vector<std::size_t>>& pools, std::size_t own) -> std::size_t {
    std::size_t c = own;
    if (uniform01(rng) >= spec.homophily) c = (own + 1 + uniform_index(rng, C - 1)) % C;
    const auto& pool = pools[c].empty() ? pools[own] : pools[c];
    return pool[uniform_index(rng, pool.size())];
  };
  std::vector<Edge> edges;
  std::set<std::pair<std::size_t, std::size_t>> linked;
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t k = 0; k < spec.aux_links_per_target && A > 0; ++k) {
      for (int attempt = 0; attempt < 8; ++attempt) {
        const std::size_t a = pick(aux_by_label, label[i]);
        if (linked.insert({i, a}).second) {
          edges.push_back({i, a, 0});
          edges.push_back({a, i, 1});
          break;
        }
      }
    }
    for (std::size_t k = 0; k < spec.target_links_per_target; ++k) {
      for (int attempt = 0; attempt < 8; ++attempt) {
        const std::size_t j = pick(target_by_label, label[i]);
        if (j == i) continue;
        if (linked.insert({std::min(i, j), std::max(i, j)}).second) {
          edges.push_back({i, j, 2});
          edges.push_back({j, i, 2});
          break;
        }
      }
    }
  }
  MmhnGraph graph({"item", "tag"}, {"item-tag", "tag-item", "item-item"}, node_type, std::move(edges));
  schema.validate(graph);

  std::map<std::size_t, std::size_t> labels;
  for (std::size_t i = 0; i < T; ++i) labels[i] = label[i];
  DatasetSplit split = split_dataset(labels, spec.ratios, seed, C);

  if (truth) {
    truth->target_ids.resize(T);
    for (std::size_t i = 0; i < T; ++i) truth->target_ids[i] = i;
    truth->informative_modality = informative;
  }
  return Dataset{std::move(graph), std::move(schema), std::move(store), std::move(split)};
}

}  // namespace hgnn
