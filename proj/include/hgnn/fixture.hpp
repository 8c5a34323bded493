#pragma once

// Small hand-built dataset used by the gradient checker and the tests.

#include <vector>

#include "hgnn/graph.hpp"
#include "hgnn/nn.hpp"
#include "hgnn/parameters.hpp"

namespace hgnn {

// Twelve nodes of three types (paper, author, venue), two modalities; venues
// have no vision features. Labels live on papers.
inline Dataset gradient_fixture(std::uint64_t seed = 3, bool venue_missing_vision = true) {
  std::vector<std::size_t> types = {0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2};
  std::vector<Edge> edges;
  auto both = [&](std::size_t a, std::size_t b, std::size_t ab, std::size_t ba) {
    edges.push_back({a, b, ab});
    edges.push_back({b, a, ba});
  };
  // 0 writes, 1 written-by, 2 published-in, 3 publishes, 4 cites
  both(0, 5, 1, 0);
  both(1, 5, 1, 0);
  both(1, 6, 1, 0);
  both(2, 7, 1, 0);
  both(3, 7, 1, 0);
  both(4, 8, 1, 0);
  both(3, 6, 1, 0);
  both(0, 9, 2, 3);
  both(1, 9, 2, 3);
  both(2, 10, 2, 3);
  both(3, 10, 2, 3);
  both(4, 11, 2, 3);
  edges.push_back({0, 1, 4});
  edges.push_back({2, 3, 4});
  edges.push_back({4, 3, 4});
  edges.push_back({1, 2, 4});
  MmhnGraph g({"paper", "author", "venue"}, {"writes", "written-by", "published-in", "publishes", "cites"}, types,
              edges);

  ModalitySchema s;
  s.modality_names = {"text", "vision"};
  s.input_dim = {4, 3};
  s.native = {{true, true}, {true, true}, {true, !venue_missing_vision}};
  s.target_type = 0;
  s.categories = {"a", "b"};

  FeatureStore f;
  Rng rng(seed);
  for (std::size_t m = 0; m < 2; ++m) {
    Tensor x = Tensor::zeros(12, s.input_dim[m]);
    for (std::size_t i = 0; i < 12; ++i) {
      if (!s.native[types[i]][m]) continue;
      for (std::size_t c = 0; c < x.cols(); ++c) x(i, c) = standard_normal(rng);
    }
    f.features.push_back(x);
  }
  f.presence = FeatureStore::presence_for(g, s);

  DatasetSplit split;
  split.labels = {{0, 0}, {1, 1}, {2, 0}, {3, 1}, {4, 0}};
  split.train = {0, 1, 2, 3, 4};
  return Dataset{std::move(g), std::move(s), std::move(f), std::move(split)};
}

/// Adds uniform noise in [-amplitude/2, amplitude/2) to every parameter so
/// attention scores sit away from their uniform starting point.
inline ParameterSet jitter_parameters(ParameterSet p, std::uint64_t seed, double amplitude = 1.0) {
  Rng rng(seed);
  for (auto& [name, t] : p)
    for (double& v : t.values()) v += amplitude * (uniform01(rng) - 0.5);
  return p;
}

}  // namespace hgnn
