#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "hgnn/error.hpp"
#include "hgnn/parameters.hpp"

namespace hgnn {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam. Moments are created lazily with the parameter shape on
/// the first step.
class Adam {
 public:
  explicit Adam(AdamOptions opts = {}) : opts_(opts) {}

  const AdamOptions& options() const { return opts_; }
  std::uint64_t step_count() const { return step_; }
  const Tensor& first_moment(const std::string& name) const { return first_.at(name); }
  const Tensor& second_moment(const std::string& name) const { return second_.at(name); }

  void step(ParameterSet& params, const GradientMap& grads) {
    for (const auto& [name, p] : params) {
      auto g = grads.find(name);
      if (g == grads.end()) throw Error(ErrorCode::Precondition, "adam: no gradient for '" + name + "'");
      if (!g->second.same_shape(p)) {
        throw Error(ErrorCode::Shape, "adam: gradient shape " + g->second.shape_string() + " for '" + name +
                                          "' of shape " + p.shape_string());
      }
    }
    ++step_;
    const double t = static_cast<double>(step_);
    const double c1 = 1.0 - std::pow(opts_.beta1, t);
    const double c2 = 1.0 - std::pow(opts_.beta2, t);
    for (auto& [name, p] : params) {
      const Tensor& g = grads.at(name);
      Tensor& m = first_.try_emplace(name, p.shape()).first->second;
      Tensor& v = second_.try_emplace(name, p.shape()).first->second;
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g[i];
        v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g[i] * g[i];
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        p[i] -= opts_.learning_rate * mhat / (std::sqrt(vhat) + opts_.epsilon);
      }
    }
  }

 private:
  AdamOptions opts_;
  std::uint64_t step_ = 0;
  std::map<std::string, Tensor> first_;
  std::map<std::string, Tensor> second_;
};

}  // namespace hgnn
