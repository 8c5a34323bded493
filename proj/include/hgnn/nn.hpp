#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "hgnn/autodiff.hpp"
#include "hgnn/error.hpp"
#include "hgnn/tensor.hpp"

namespace hgnn {

using Rng = std::mt19937_64;

/// Derives an independent stream seed from a base seed and a salt
/// (splitmix64 finalizer).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double uniform01(Rng& rng) {
  // 53 random mantissa bits; avoids implementation-defined distributions.
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double standard_normal(Rng& rng) {
  // Box-Muller; the second variate is discarded to keep streams simple.
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)) % n;
}

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

/// Max-shifted softmax. Masked entries (mask[i] == false) are 0.
inline std::vector<double> softmax_stable(const std::vector<double>& scores,
                                          const std::optional<std::vector<bool>>& mask = std::nullopt) {
  if (scores.empty()) throw Error(ErrorCode::Precondition, "softmax over an empty vector");
  if (mask && mask->size() != scores.size()) throw Error(ErrorCode::Shape, "softmax mask size mismatch");
  double mx = -INFINITY;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (!mask || (*mask)[i]) mx = std::max(mx, scores[i]);
  if (mx == -INFINITY) throw Error(ErrorCode::Precondition, "softmax: all entries masked");
  std::vector<double> out(scores.size(), 0.0);
  double denom = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (mask && !(*mask)[i]) continue;
    out[i] = std::exp(scores[i] - mx);
    denom += out[i];
  }
  for (double& v : out) v /= denom;
  return out;
}

/// Glorot/Xavier uniform in [-b, b], b = sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_init(std::size_t rows, std::size_t cols, Rng& rng, std::size_t fan_in = 0,
                          std::size_t fan_out = 0) {
  if (fan_in == 0) fan_in = rows;
  if (fan_out == 0) fan_out = cols;
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t = Tensor::zeros(rows, cols);
  for (double& v : t.values()) v = (2.0 * uniform01(rng) - 1.0) * bound;
  return t;
}

inline Tensor glorot_init(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  return glorot_init(rows, cols, rng);
}

/// Inverted-dropout keep mask: kept units carry 1/(1-rate), dropped units 0.
inline Tensor dropout_mask(const std::vector<std::size_t>& shape, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw Error(ErrorCode::Config, "dropout rate must lie in [0, 1)");
  Tensor m(shape);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& v : m.values()) v = uniform01(rng) >= rate ? keep_scale : 0.0;
  return m;
}

inline Var dropout(Var x, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw Error(ErrorCode::Config, "dropout rate must lie in [0, 1)");
  if (!training || rate == 0.0) return x;
  return mul(x, x.tape->constant(dropout_mask(x.value().shape(), rate, rng)));
}

inline Tensor dropout(const Tensor& x, double rate, bool training, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw Error(ErrorCode::Config, "dropout rate must lie in [0, 1)");
  if (!training) return x;
  Rng rng(seed);
  Tensor m = dropout_mask(x.shape(), rate, rng);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= m[i];
  return out;
}

enum class Nonlinearity { Sigmoid, Tanh };

inline Var nonlinearity(Var x, Nonlinearity kind) {
  return kind == Nonlinearity::Sigmoid ? sigmoid(x) : tanh(x);
}

inline double nonlinearity(double x, Nonlinearity kind) {
  return kind == Nonlinearity::Sigmoid ? sigmoid(x) : std::tanh(x);
}

}  // namespace hgnn
