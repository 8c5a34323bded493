#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "hgnn/error.hpp"
#include "hgnn/nn.hpp"
#include "hgnn/parameters.hpp"

namespace hgnn {

struct GradCheckOptions {
  double step = 1e-5;
  // Coordinates sampled per block; blocks smaller than this are checked in full.
  std::size_t per_block = 16;
  std::size_t min_total = 200;
  std::uint64_t seed = 0;
  std::vector<std::string> blocks;  // substring filters; empty = all blocks
  // Lower bound on the denominator. Coordinates whose gradient is below the
  // round-off of the loss difference need a larger floor to be meaningful.
  double floor = 1e-8;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::map<std::string, double> per_block;  // max relative error per block
  std::string worst_block;
};

inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
  return std::abs(analytic - numeric) / std::max(floor, std::abs(numeric));
}

/// Compares `analytic` against central differences of `f` on a random sample
/// of coordinates. `f` must be deterministic.
inline GradCheckResult finite_diff_check(const std::function<double(const ParameterSet&)>& f, ParameterSet params,
                                         const GradientMap& analytic, const GradCheckOptions& opts = {}) {
  auto selected = [&](const std::string& name) {
    if (opts.blocks.empty()) return true;
    return std::any_of(opts.blocks.begin(), opts.blocks.end(),
                       [&](const std::string& b) { return name.find(b) != std::string::npos; });
  };
  std::vector<std::pair<std::string, std::size_t>> coords;
  Rng rng(mix_seed(opts.seed, 0x6772));
  std::size_t total = 0;
  for (const auto& [name, t] : params)
    if (selected(name)) total += t.size();
  if (total == 0) throw Error(ErrorCode::Precondition, "gradient check: no parameter matches the block filter");
  std::size_t selected_blocks = 0;
  for (const auto& [name, t] : params) selected_blocks += selected(name) ? 1 : 0;
  const std::size_t per_block = std::max(opts.per_block, (opts.min_total + selected_blocks - 1) / selected_blocks);
  for (const auto& [name, t] : params) {
    if (!selected(name)) continue;
    std::vector<std::size_t> idx(t.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    shuffle(idx, rng);
    idx.resize(std::min(idx.size(), per_block));
    std::sort(idx.begin(), idx.end());
    for (std::size_t i : idx) coords.emplace_back(name, i);
  }

  GradCheckResult result;
  for (const auto& [name, i] : coords) {
    Tensor& p = params.at(name);
    const double saved = p[i];
    p[i] = saved + opts.step;
    const double up = f(params);
    p[i] = saved - opts.step;
    const double down = f(params);
    p[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw Error(ErrorCode::NonFinite, "gradient check: objective is non-finite at " + name);
    }
    const double numeric = (up - down) / (2.0 * opts.step);
    auto it = analytic.find(name);
    if (it == analytic.end()) throw Error(ErrorCode::Precondition, "gradient check: no analytic gradient for " + name);
    const double err = relative_error(it->second[i], numeric, opts.floor);
    double& block = result.per_block[name];
    block = std::max(block, err);
    if (err >= result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_block = name;
    }
    ++result.coordinates;
  }
  return result;
}

}  // namespace hgnn
