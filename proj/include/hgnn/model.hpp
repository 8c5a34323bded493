#pragma once

// Multi-modal heterogeneous propagation with nested inter-modal attention.
//
// Per layer and head, for every in-edge (j -> i) of type e:
//   g[m']      = K_j^{m'} W_node[e] Q_i^{m'} (/ sqrt(dh))      similarity per modality
//   alpha[m']  = softmax over in-edges of i of g[m']
//   s[m']      = K_j^{m'} W_modal[e] Q_i^{m'} (/ sqrt(dh))
//   lambda     = softmax over modalities of s
//   beta       = softmax over in-edges of sum_m' lambda[m'] * alpha[m']
//   r          = sum over ordered modality pairs |g[m1] - g[m2]|
//   beta_bar   = softmax over in-edges of r (or -r)
//   beta_tilde = softmax over in-edges of beta * beta_bar
// and every modality m aggregates
//   h_i^m <- l_A(sigmoid(sum_j beta_tilde * M_j^m W_msg[e])) + h_i^m.
// Attention tensors are [edges x heads]; edges are kept in canonical
// (dst, src, type) order so results do not depend on input edge order.

#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hgnn/autodiff.hpp"
#include "hgnn/config.hpp"
#include "hgnn/error.hpp"
#include "hgnn/graph.hpp"
#include "hgnn/nn.hpp"
#include "hgnn/parameters.hpp"

namespace hgnn {

/// Dataset view the network consumes: completed features of the enabled
/// modalities and edge/node index lists.
struct ModelInputs {
  MmhnGraph graph;
  std::vector<std::size_t> modalities;  // schema indices of enabled modalities
  std::vector<std::string> modality_names;
  std::vector<std::size_t> input_dims;
  std::vector<Tensor> features;              // per enabled modality
  std::vector<std::vector<bool>> native;     // [node][enabled modality]
  std::vector<Edge> edges;                   // canonical order
  Index src, dst;
  std::vector<Index> edges_by_type;
  std::vector<Index> nodes_by_type;
  std::size_t category_count = 0;
  std::string schema_hash;

  std::size_t node_count() const { return graph.node_count(); }
  std::size_t edge_count() const { return edges.size(); }
  std::size_t modality_count() const { return modalities.size(); }
};

inline ModelInputs prepare_inputs(const Dataset& ds, const ModelConfig& cfg) {
  cfg.validate();
  ModelInputs in;
  in.graph = cfg.add_self_loops ? ds.graph.with_self_loops() : ds.graph;
  in.schema_hash = schema_hash(ds.graph, ds.schema);
  in.category_count = ds.schema.categories.size();

  std::size_t reference = 0;
  if (!cfg.reference_modality.empty()) reference = ds.schema.modality_index(cfg.reference_modality);
  FeatureStore completed = ds.features;
  if (ds.schema.any_missing()) {
    CompletionOptions copts;
    copts.zero_fill_without_reference = cfg.zero_fill_without_reference;
    completed = complete_missing_features(ds.features, ds.schema, reference, copts);
  }

  if (cfg.modalities_enabled.empty()) {
    for (std::size_t m = 0; m < ds.schema.modality_count(); ++m) in.modalities.push_back(m);
  } else {
    for (const auto& name : cfg.modalities_enabled) in.modalities.push_back(ds.schema.modality_index(name));
  }
  for (std::size_t m : in.modalities) {
    in.modality_names.push_back(ds.schema.modality_names[m]);
    in.input_dims.push_back(ds.schema.input_dim[m]);
    const Tensor& x = completed.features.at(m);
    if (x.rows() != ds.graph.node_count() || x.cols() != ds.schema.input_dim[m]) {
      throw Error(ErrorCode::Shape, "feature matrix for '" + ds.schema.modality_names[m] + "' has shape " +
                                        x.shape_string());
    }
    in.features.push_back(x);
  }
  in.native.resize(in.node_count());
  for (std::size_t i = 0; i < in.node_count(); ++i)
    for (std::size_t m : in.modalities) in.native[i].push_back(ds.schema.native[ds.graph.node_type(i)][m]);

  in.edges = in.graph.canonical_edges();
  in.edges_by_type.assign(in.graph.edge_type_count(), {});
  for (std::size_t k = 0; k < in.edges.size(); ++k) {
    in.src.push_back(in.edges[k].src);
    in.dst.push_back(in.edges[k].dst);
    in.edges_by_type[in.edges[k].type].push_back(k);
  }
  in.nodes_by_type.assign(in.graph.node_type_count(), {});
  for (std::size_t i = 0; i < in.node_count(); ++i) in.nodes_by_type[in.graph.node_type(i)].push_back(i);
  return in;
}

// ---------------------------------------------------------------------------
// Parameter layout

inline std::string node_key(const ModelInputs& in, const ModelConfig& cfg, std::size_t type) {
  return cfg.node_type_dependent_params ? in.graph.node_type_names()[type] : "shared";
}

inline std::string edge_key(const ModelInputs& in, const ModelConfig& cfg, std::size_t type) {
  return cfg.edge_type_dependent_params ? in.graph.edge_type_names()[type] : "shared";
}

inline const std::vector<std::string>& head_roles() {
  static const std::vector<std::string> roles = {"key_proj", "query_proj", "message_proj", "output_proj"};
  return roles;
}

inline std::string modality_classifier_name(const ModelConfig& cfg, const std::string& modality) {
  return cfg.share_modality_classifiers ? "classifier.modality.weight" : "classifier." + modality + ".weight";
}

/// Glorot-initialized weights and zero biases. Each block draws from its own
/// stream seeded by (seed, name), so the values do not depend on creation order.
inline ParameterSet init_parameters(const ModelInputs& in, const ModelConfig& cfg) {
  cfg.validate();
  ParameterSet p;
  const std::size_t d = cfg.hidden_dim, dh = cfg.head_dim(), H = cfg.heads;
  auto name_seed = [&](const std::string& name) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : name) h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
    return mix_seed(cfg.seed, h);
  };
  auto weight = [&](const std::string& name, std::size_t rows, std::size_t cols, std::size_t fan_in,
                    std::size_t fan_out) {
    if (p.count(name)) return;
    Rng rng(name_seed(name));
    p.emplace(name, glorot_init(rows, cols, rng, fan_in, fan_out));
  };
  auto bias = [&](const std::string& name, std::size_t cols) { p.emplace(name, Tensor::zeros(1, cols)); };

  for (std::size_t o = 0; o < in.graph.node_type_count(); ++o) {
    const std::string nk = node_key(in, cfg, o);
    for (std::size_t m = 0; m < in.modality_count(); ++m) {
      const std::string base = nk + "." + in.modality_names[m];
      if (cfg.nonlinear_projections) {
        weight("input_proj_hidden." + base + ".weight", in.input_dims[m], d, in.input_dims[m], d);
        bias("input_proj_hidden." + base + ".bias", d);
        weight("input_proj." + base + ".weight", d, d, d, d);
      } else {
        weight("input_proj." + base + ".weight", in.input_dims[m], d, in.input_dims[m], d);
      }
      bias("input_proj." + base + ".bias", d);
    }
    for (const auto& role : head_roles()) {
      if (cfg.nonlinear_projections) {
        weight(role + "_hidden." + nk + ".weight", d, dh, dh, dh);
        bias(role + "_hidden." + nk + ".bias", d);
      }
      weight(role + "." + nk + ".weight", d, dh, dh, dh);
      bias(role + "." + nk + ".bias", d);
    }
  }
  for (std::size_t e = 0; e < in.graph.edge_type_count(); ++e) {
    const std::string ek = edge_key(in, cfg, e);
    weight("w_node." + ek + ".weight", d, dh, dh, dh);
    weight("w_msg." + ek + ".weight", d, dh, dh, dh);
    if (cfg.influenced_modality_in_lambda) {
      for (const auto& mn : in.modality_names) weight("w_modal." + ek + "." + mn + ".weight", d, dh, dh, dh);
    } else {
      weight("w_modal." + ek + ".weight", d, dh, dh, dh);
    }
  }
  (void)H;
  const std::size_t df = cfg.fusion_width();
  weight("fusion.hidden.weight", d, df, d, df);
  weight("fusion.score.weight", df, 1, df, 1);
  bias("fusion.score.bias", 1);
  weight("classifier.fused.weight", d, in.category_count, d, in.category_count);
  for (const auto& mn : in.modality_names)
    weight(modality_classifier_name(cfg, mn), d, in.category_count, d, in.category_count);
  return p;
}

// ---------------------------------------------------------------------------
// Cached forward state

struct LayerAttention {
  std::vector<Tensor> g;                   // [modality] similarity scores
  std::vector<Tensor> alpha;               // [modality]
  std::vector<Tensor> s;                   // [modality] (empty when lambda is not learned)
  std::vector<std::vector<Tensor>> lambda; // [stream][modality]
  std::vector<Tensor> beta;                // [stream]
  Tensor discrepancy;                      // r; empty when alignment modulation is off
  Tensor beta_bar;                         // empty when alignment modulation is off
  std::vector<Tensor> beta_tilde;          // [stream]
};

/// Per-layer embeddings and attention. An aggregation "stream" is one set of
/// aggregation weights: one shared stream by default, one per influenced
/// modality under the -cross and +inf variants.
struct LayerState {
  std::vector<std::vector<Tensor>> h;       // [layer 0..K][modality] -> [nodes x d]
  std::vector<LayerAttention> attention;    // [layer 1..K] stored at k-1
  std::vector<Edge> edges;
  std::size_t heads = 0;
  std::size_t streams = 1;
  std::vector<std::string> modality_names;

  std::size_t stream_of(std::size_t modality) const { return streams == 1 ? 0 : modality; }
};

enum class Mode { Train, Eval };

struct ForwardResult {
  Var loss;
  Var classification_loss;
  Var attention_loss;
  Tensor probabilities;                       // fused O, [nodes x categories]
  std::vector<Tensor> modality_probabilities; // O^m
  Tensor fused;                               // Z
  Tensor fusion_weights;                      // delta, [nodes x modalities]
  LayerState state;
};

/// Labeled rows a loss is taken over.
struct LossRows {
  Index rows;
  std::vector<std::size_t> labels;

  static LossRows from(const std::vector<std::size_t>& ids, const std::map<std::size_t, std::size_t>& labels) {
    LossRows r;
    for (std::size_t id : ids) {
      auto it = labels.find(id);
      if (it == labels.end()) throw Error(ErrorCode::Precondition, "node " + std::to_string(id) + " has no label");
      r.rows.push_back(id);
      r.labels.push_back(it->second);
    }
    return r;
  }
};

inline std::vector<double> softmax_row(std::span<const double> z) {
  return softmax_stable(std::vector<double>(z.begin(), z.end()));
}

inline Tensor softmax_rows(const Tensor& logits) {
  Tensor out(logits.shape());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto p = softmax_row(logits.row_span(i));
    std::copy(p.begin(), p.end(), out.row_span(i).begin());
  }
  return out;
}

/// Arg max with the lowest index winning ties.
inline std::size_t predict_row(std::span<const double> probs) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < probs.size(); ++c)
    if (probs[c] > probs[best]) best = c;
  return best;
}

class Network {
 public:
  Network(const ModelInputs& in, const ModelConfig& cfg, const BoundParameters& params)
      : in_(in), cfg_(cfg), p_(params) {}

  ForwardResult forward(Tape& tape, const LossRows& rows, Mode mode, Rng* dropout_rng) const {
    const std::size_t N = in_.node_count(), E = in_.edge_count(), M = in_.modality_count();
    const std::size_t H = cfg_.heads, K = cfg_.layers;
    if (M == 0) throw Error(ErrorCode::Config, "no modality enabled");
    const bool train = mode == Mode::Train;
    if (train && cfg_.dropout > 0.0 && !dropout_rng) throw Error(ErrorCode::Precondition, "training needs a dropout stream");

    ForwardResult out;
    LayerState& st = out.state;
    st.edges = in_.edges;
    st.heads = H;
    st.modality_names = in_.modality_names;
    const bool cross = cfg_.cross_modal_unit;
    const bool learned_lambda = cross && !cfg_.adapt_mean;
    const bool per_influenced = cross && learned_lambda && cfg_.influenced_modality_in_lambda;
    st.streams = (!cross || per_influenced) ? M : 1;

    std::vector<Var> h(M);
    for (std::size_t m = 0; m < M; ++m) h[m] = input_projection(tape, m);
    st.h.push_back(values(h));

    std::vector<Var> att_terms;
    const double score_scale = cfg_.attention_scale ? 1.0 / std::sqrt(static_cast<double>(cfg_.head_dim())) : 1.0;

    for (std::size_t k = 1; k <= K; ++k) {
      LayerAttention la;
      std::vector<Var> beta_tilde(st.streams);
      if (E > 0) {
        std::vector<Var> g(M), alpha(M), kj(M), qi(M);
        for (std::size_t m = 0; m < M; ++m) {
          kj[m] = gather_rows(typed_heads(tape, h[m], "key_proj"), in_.src);
          qi[m] = gather_rows(typed_heads(tape, h[m], "query_proj"), in_.dst);
          g[m] = scale(head_dot(edge_typed(tape, kj[m], "w_node", ""), qi[m], H), score_scale);
          alpha[m] = segment_softmax(g[m], in_.dst, N);
        }
        la.g = values(g);
        la.alpha = values(alpha);

        std::vector<std::vector<Var>> lambda(st.streams);
        if (learned_lambda) {
          for (std::size_t sidx = 0; sidx < (per_influenced ? M : 1); ++sidx) {
            const std::string suffix = per_influenced ? in_.modality_names[sidx] : "";
            std::vector<Var> s(M);
            for (std::size_t m = 0; m < M; ++m) {
              Var keyed = edge_typed(tape, kj[m], "w_modal", suffix);
              if (!cfg_.neighbor_in_lambda) keyed = gather_rows(segment_mean(keyed, in_.dst, N), in_.dst);
              s[m] = scale(head_dot(keyed, qi[m], H), score_scale);
            }
            if (sidx == 0) la.s = values(s);
            lambda[sidx] = softmax_across(s);
          }
        } else if (cross) {
          Var uniform = tape.constant(Tensor({E, H}, 1.0 / static_cast<double>(M)));
          lambda[0] = std::vector<Var>(M, uniform);
        }
        for (const auto& ls : lambda) la.lambda.push_back(values(ls));

        std::vector<Var> beta(st.streams);
        for (std::size_t sidx = 0; sidx < st.streams; ++sidx) {
          if (!cross) {
            beta[sidx] = alpha[sidx];
            continue;
          }
          Var inner = mul(lambda[sidx][0], alpha[0]);
          for (std::size_t m = 1; m < M; ++m) inner = add(inner, mul(lambda[sidx][m], alpha[m]));
          beta[sidx] = segment_softmax(inner, in_.dst, N);
        }
        la.beta = values(beta);

        if (cfg_.alignment_modulation) {
          Var r;
          bool first = true;
          for (std::size_t m1 = 0; m1 < M; ++m1)
            for (std::size_t m2 = 0; m2 < M; ++m2) {
              Var term = abs(sub(g[m1], g[m2]));
              r = first ? term : add(r, term);
              first = false;
            }
          la.discrepancy = r.value();
          Var signed_r = cfg_.alignment_sign == AlignmentSign::AsWritten ? r : scale(r, -1.0);
          Var beta_bar = segment_softmax(signed_r, in_.dst, N);
          la.beta_bar = beta_bar.value();
          for (std::size_t sidx = 0; sidx < st.streams; ++sidx)
            beta_tilde[sidx] = segment_softmax(mul(beta[sidx], beta_bar), in_.dst, N);
        } else {
          beta_tilde = beta;
        }
        la.beta_tilde = values(beta_tilde);

        if (learned_lambda && cfg_.attention_loss) {
          for (std::size_t sidx = 0; sidx < lambda.size(); ++sidx)
            for (std::size_t m = 0; m < M; ++m) {
              Tensor mask({E, H}, 0.0);
              bool any = false;
              for (std::size_t e = 0; e < E; ++e) {
                if (in_.native[in_.src[e]][m]) continue;
                any = true;
                for (std::size_t hh = 0; hh < H; ++hh) mask(e, hh) = 1.0 / static_cast<double>(H);
              }
              if (any) att_terms.push_back(sum(mul(lambda[sidx][m], tape.constant(std::move(mask)))));
            }
        }
      }
      st.attention.push_back(std::move(la));

      std::vector<Var> next(M);
      for (std::size_t m = 0; m < M; ++m) {
        Var agg;
        if (E > 0) {
          Var mj = gather_rows(typed_heads(tape, h[m], "message_proj"), in_.src);
          Var msg = edge_typed(tape, mj, "w_msg", "");
          agg = scatter_rows(scale_groups(msg, beta_tilde[st.stream_of(m)]), in_.dst, N);
        } else {
          agg = tape.constant(Tensor::zeros(N, cfg_.hidden_dim));
        }
        Var update = typed_heads(tape, sigmoid(agg), "output_proj");
        if (train) update = dropout(update, cfg_.dropout, true, *dropout_rng);
        next[m] = add(update, h[m]);
      }
      h = std::move(next);
      st.h.push_back(values(h));
    }

    // Modality fusion.
    std::vector<Var> omega(M);
    for (std::size_t m = 0; m < M; ++m) {
      Var hidden = tanh(matmul(h[m], p_["fusion.hidden.weight"]));
      omega[m] = add_bias(matmul(hidden, p_["fusion.score.weight"]), p_["fusion.score.bias"]);
    }
    std::vector<Var> delta = softmax_across(omega);
    Var z = scale_groups(h[0], delta[0]);
    for (std::size_t m = 1; m < M; ++m) z = add(z, scale_groups(h[m], delta[m]));
    out.fused = z.value();
    out.fusion_weights = Tensor::zeros(N, M);
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t m = 0; m < M; ++m) out.fusion_weights(i, m) = delta[m].value()[i];

    Var logits = matmul(z, p_["classifier.fused.weight"]);
    out.probabilities = softmax_rows(logits.value());
    std::vector<Var> modality_logits(M);
    for (std::size_t m = 0; m < M; ++m) {
      modality_logits[m] = matmul(h[m], p_[modality_classifier_name(cfg_, in_.modality_names[m])]);
      out.modality_probabilities.push_back(softmax_rows(modality_logits[m].value()));
    }

    if (rows.rows.empty()) {
      out.classification_loss = tape.constant(Tensor({1, 1}, 0.0));
    } else {
      Var ce = cross_entropy(logits, rows.rows, rows.labels);
      if (cfg_.individual_modality_loss) {
        for (std::size_t m = 0; m < M; ++m) ce = add(ce, cross_entropy(modality_logits[m], rows.rows, rows.labels));
        ce = scale(ce, 1.0 / static_cast<double>(1 + M));
      }
      out.classification_loss = ce;
    }

    if (att_terms.empty()) {
      out.attention_loss = tape.constant(Tensor({1, 1}, 0.0));
    } else {
      Var total = att_terms.front();
      for (std::size_t t = 1; t < att_terms.size(); ++t) total = add(total, att_terms[t]);
      double denom = static_cast<double>(K * M);
      if (per_influenced) denom *= static_cast<double>(M);
      if (cfg_.normalize_attention_loss_by_pairs && E > 0) denom *= static_cast<double>(E);
      out.attention_loss = scale(total, 1.0 / denom);
    }
    out.loss = add(out.classification_loss, out.attention_loss);
    return out;
  }

 private:
  static std::vector<Tensor> values(const std::vector<Var>& vs) {
    std::vector<Tensor> out;
    out.reserve(vs.size());
    for (const Var& v : vs) out.push_back(v.value());
    return out;
  }

  // Applies a per-node-type map to the rows of x grouped by node type.
  template <class Fn>
  Var by_node_type(Tape& tape, Var x, Fn fn) const {
    (void)tape;
    if (!cfg_.node_type_dependent_params) return fn(x, node_key(in_, cfg_, 0));
    std::vector<Var> parts;
    std::vector<Index> index;
    for (std::size_t o = 0; o < in_.nodes_by_type.size(); ++o) {
      if (in_.nodes_by_type[o].empty()) continue;
      if (in_.nodes_by_type[o].size() == in_.node_count()) return fn(x, node_key(in_, cfg_, o));
      parts.push_back(fn(gather_rows(x, in_.nodes_by_type[o]), node_key(in_, cfg_, o)));
      index.push_back(in_.nodes_by_type[o]);
    }
    return assemble_rows(parts, index, in_.node_count());
  }

  Var input_projection(Tape& tape, std::size_t m) const {
    Var x = tape.constant(in_.features[m]);
    return by_node_type(tape, x, [&](Var rows, const std::string& nk) {
      const std::string base = nk + "." + in_.modality_names[m];
      if (cfg_.nonlinear_projections) {
        rows = tanh(add_bias(matmul(rows, p_["input_proj_hidden." + base + ".weight"]),
                             p_["input_proj_hidden." + base + ".bias"]));
      }
      return add_bias(matmul(rows, p_["input_proj." + base + ".weight"]), p_["input_proj." + base + ".bias"]);
    });
  }

  Var typed_heads(Tape& tape, Var x, const std::string& role) const {
    return by_node_type(tape, x, [&](Var rows, const std::string& nk) {
      if (cfg_.nonlinear_projections) {
        rows = tanh(add_bias(head_linear(rows, p_[role + "_hidden." + nk + ".weight"]), p_[role + "_hidden." + nk + ".bias"]));
      }
      return add_bias(head_linear(rows, p_[role + "." + nk + ".weight"]), p_[role + "." + nk + ".bias"]);
    });
  }

  // Per-edge-type head-wise map over edge rows.
  Var edge_typed(Tape& tape, Var x, const std::string& role, const std::string& suffix) const {
    (void)tape;
    auto name = [&](std::size_t e) {
      return role + "." + edge_key(in_, cfg_, e) + (suffix.empty() ? "" : "." + suffix) + ".weight";
    };
    if (!cfg_.edge_type_dependent_params) return head_linear(x, p_[name(0)]);
    std::vector<Var> parts;
    std::vector<Index> index;
    for (std::size_t e = 0; e < in_.edges_by_type.size(); ++e) {
      if (in_.edges_by_type[e].empty()) continue;
      if (in_.edges_by_type[e].size() == in_.edge_count()) return head_linear(x, p_[name(e)]);
      parts.push_back(head_linear(gather_rows(x, in_.edges_by_type[e]), p_[name(e)]));
      index.push_back(in_.edges_by_type[e]);
    }
    return assemble_rows(parts, index, in_.edge_count());
  }

  const ModelInputs& in_;
  const ModelConfig& cfg_;
  const BoundParameters& p_;
};

/// One full forward pass on a fresh tape.
struct ForwardPass {
  Tape tape;
  std::optional<BoundParameters> bound;
  ForwardResult result;
};

inline std::unique_ptr<ForwardPass> forward_full(const ModelInputs& in, const ModelConfig& cfg, const ParameterSet& params,
                                                 const LossRows& rows, Mode mode, Rng* dropout_rng = nullptr) {
  auto pass = std::make_unique<ForwardPass>();
  pass->bound.emplace(pass->tape, params);
  Network net(in, cfg, *pass->bound);
  pass->result = net.forward(pass->tape, rows, mode, dropout_rng);
  return pass;
}

/// Loss value and gradient map in one call.
inline std::pair<double, GradientMap> loss_and_gradients(const ModelInputs& in, const ModelConfig& cfg,
                                                         const ParameterSet& params, const LossRows& rows, Mode mode,
                                                         Rng* dropout_rng = nullptr) {
  auto pass = forward_full(in, cfg, params, rows, mode, dropout_rng);
  pass->tape.backward(pass->result.loss);
  return {pass->result.loss.value()[0], pass->bound->gradients(pass->tape)};
}

inline double loss_value(const ModelInputs& in, const ModelConfig& cfg, const ParameterSet& params, const LossRows& rows) {
  return forward_full(in, cfg, params, rows, Mode::Eval)->result.loss.value()[0];
}

}  // namespace hgnn
