#pragma once

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "hgnn/fixture.hpp"
#include "hgnn/graph.hpp"
#include "hgnn/model.hpp"
#include "hgnn/nn.hpp"

namespace hgnn::testing {

inline Dataset small_fixture(std::uint64_t seed = 3, bool venue_missing_vision = true) {
  return gradient_fixture(seed, venue_missing_vision);
}

inline ModelConfig small_config() {
  ModelConfig c;
  c.layers = 2;
  c.hidden_dim = 8;
  c.heads = 2;
  c.dropout = 0.0;
  c.seed = 11;
  return c;
}

/// Keeps only the given modality in schema and features.
inline Dataset single_modality(const Dataset& ds, std::size_t m) {
  Dataset out = ds;
  out.schema.modality_names = {ds.schema.modality_names[m]};
  out.schema.input_dim = {ds.schema.input_dim[m]};
  for (auto& row : out.schema.native) row = {true};
  out.features.features = {ds.features.features[m]};
  out.features.presence = FeatureStore::presence_for(out.graph, out.schema);
  return out;
}

inline ParameterSet perturbed(ParameterSet p, std::uint64_t seed, double amplitude = 1.0) {
  return jitter_parameters(std::move(p), seed, amplitude);
}

inline double max_norm_diff(const Tensor& a, const Tensor& b) { return max_abs_diff(a, b); }

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("hgnn_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace hgnn::testing
