#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "hgnn/error.hpp"
#include "hgnn/graph.hpp"
#include "hgnn/nn.hpp"

namespace hgnn {

using SplitRatios = std::array<double, 3>;

namespace detail {

// Largest-remainder apportionment of `total` units over groups with ideal
// shares `exact`, never exceeding `cap`. Ties go to the lower group index.
inline std::vector<std::size_t> apportion(const std::vector<double>& exact, const std::vector<std::size_t>& cap,
                                          std::size_t total) {
  std::vector<std::size_t> out(exact.size());
  std::size_t used = 0;
  for (std::size_t c = 0; c < exact.size(); ++c) {
    out[c] = std::min(cap[c], static_cast<std::size_t>(std::floor(exact[c])));
    used += out[c];
  }
  std::vector<std::size_t> order(exact.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return exact[a] - std::floor(exact[a]) > exact[b] - std::floor(exact[b]);
  });
  for (std::size_t pass = 0; pass < 2 && used < total; ++pass)
    for (std::size_t c : order) {
      if (used >= total) break;
      if (out[c] < cap[c] && (pass == 1 || out[c] < std::ceil(exact[c]))) {
        ++out[c];
        ++used;
      }
    }
  return out;
}

}  // namespace detail

/// Stratified shuffle split. Global part sizes follow the ratios (rounded);
/// each category's share deviates from its exact ratio by less than one node.
inline DatasetSplit split_dataset(const std::map<std::size_t, std::size_t>& labels, SplitRatios ratios,
                                  std::uint64_t seed, std::size_t category_count = 0) {
  for (double r : ratios)
    if (!(r > 0.0)) throw Error(ErrorCode::Precondition, "split ratios must be positive");
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    throw Error(ErrorCode::Precondition, "ratios must sum to 1");
  }
  for (const auto& [_, c] : labels) category_count = std::max(category_count, c + 1);
  std::vector<std::vector<std::size_t>> members(category_count);
  for (const auto& [id, c] : labels) members[c].push_back(id);
  std::string too_small;
  for (std::size_t c = 0; c < category_count; ++c)
    if (!members[c].empty() && members[c].size() < 3) too_small += (too_small.empty() ? "" : ",") + std::to_string(c);
  if (!too_small.empty()) {
    throw Error(ErrorCode::Precondition, "categories with fewer labeled nodes than split parts: " + too_small);
  }

  const double n = static_cast<double>(labels.size());
  std::vector<double> exact_train(category_count), exact_val(category_count);
  std::vector<std::size_t> cap(category_count);
  for (std::size_t c = 0; c < category_count; ++c) {
    exact_train[c] = ratios[0] * static_cast<double>(members[c].size());
    exact_val[c] = ratios[1] * static_cast<double>(members[c].size());
    cap[c] = members[c].size();
  }
  const auto train_n = detail::apportion(exact_train, cap, static_cast<std::size_t>(std::llround(ratios[0] * n)));
  for (std::size_t c = 0; c < category_count; ++c) cap[c] -= train_n[c];
  const auto val_n = detail::apportion(exact_val, cap, static_cast<std::size_t>(std::llround(ratios[1] * n)));

  DatasetSplit split;
  split.labels = labels;
  Rng rng(mix_seed(seed, 0x5b1));
  for (std::size_t c = 0; c < category_count; ++c) {
    auto ids = members[c];
    shuffle(ids, rng);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (k < train_n[c]) split.train.push_back(ids[k]);
      else if (k < train_n[c] + val_n[c]) split.val.push_back(ids[k]);
      else split.test.push_back(ids[k]);
    }
  }
  for (auto* part : {&split.train, &split.val, &split.test}) std::sort(part->begin(), part->end());
  return split;
}

}  // namespace hgnn
