#pragma once

#include <cmath>
#include <vector>

#include "hgnn/error.hpp"

namespace hgnn {

struct F1Scores {
  double micro = 0.0;
  double macro = 0.0;
};

/// Single-label multiclass F1. Micro-F1 equals accuracy here. Macro-F1 is
/// the mean of per-category F1 over categories that occur in the gold labels
/// or the predictions; categories absent from both are left out.
inline F1Scores f1_scores(const std::vector<std::size_t>& gold, const std::vector<std::size_t>& predicted,
                          std::size_t categories) {
  if (gold.empty()) throw Error(ErrorCode::Precondition, "cannot score an empty split");
  if (gold.size() != predicted.size()) throw Error(ErrorCode::Shape, "gold/prediction length mismatch");
  std::vector<double> tp(categories, 0.0), fp(categories, 0.0), fn(categories, 0.0);
  std::size_t correct = 0;
  for (std::size_t k = 0; k < gold.size(); ++k) {
    if (gold[k] >= categories || predicted[k] >= categories) throw Error(ErrorCode::Shape, "category out of range");
    if (gold[k] == predicted[k]) {
      ++correct;
      tp[gold[k]] += 1.0;
    } else {
      fp[predicted[k]] += 1.0;
      fn[gold[k]] += 1.0;
    }
  }
  F1Scores s;
  s.micro = static_cast<double>(correct) / static_cast<double>(gold.size());
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < categories; ++c) {
    const double denom = 2.0 * tp[c] + fp[c] + fn[c];
    if (denom == 0.0) continue;
    sum += 2.0 * tp[c] / denom;
    ++counted;
  }
  s.macro = sum / static_cast<double>(counted);
  return s;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1)
};

inline MeanStd mean_std(const std::vector<double>& xs) {
  if (xs.size() < 2) throw Error(ErrorCode::Precondition, "standard deviation needs at least two values");
  // Shifted by the first value so identical inputs give exactly zero.
  const double shift = xs.front();
  const double n = static_cast<double>(xs.size());
  double mean_d = 0.0;
  for (double x : xs) mean_d += x - shift;
  mean_d /= n;
  double ss = 0.0;
  for (double x : xs) ss += (x - shift - mean_d) * (x - shift - mean_d);
  return MeanStd{shift + mean_d, std::sqrt(ss / (n - 1.0))};
}

}  // namespace hgnn
