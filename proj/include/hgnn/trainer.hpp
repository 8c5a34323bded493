#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hgnn/config.hpp"
#include "hgnn/dataset_io.hpp"
#include "hgnn/error.hpp"
#include "hgnn/metrics.hpp"
#include "hgnn/model.hpp"
#include "hgnn/optim.hpp"
#include "hgnn/parameters.hpp"
#include "hgnn/synthetic.hpp"

namespace hgnn {

struct IterationRecord {
  std::size_t iteration = 0;
  double train_loss = 0.0;  // training-mode loss before the update
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double seconds = 0.0;  // wall clock; not part of the JSON report
};

struct TrainReport {
  std::vector<IterationRecord> history;
  std::size_t best_iteration = 0;
  std::size_t stop_iteration = 0;
  bool early_stopped = false;
  double best_val_loss = 0.0;
  double best_val_accuracy = 0.0;
  F1Scores test;
  std::uint64_t seed = 0;
  std::string dataset_hash;
  nlohmann::ordered_json config;
};

/// Deterministic JSON form (wall-clock timings are excluded).
inline nlohmann::ordered_json to_json(const TrainReport& r) {
  nlohmann::ordered_json j;
  j["seed"] = r.seed;
  j["dataset_hash"] = r.dataset_hash;
  j["best_iteration"] = r.best_iteration;
  j["stop_iteration"] = r.stop_iteration;
  j["early_stopped"] = r.early_stopped;
  j["best_val_loss"] = r.best_val_loss;
  j["best_val_accuracy"] = r.best_val_accuracy;
  j["test_micro_f1"] = r.test.micro;
  j["test_macro_f1"] = r.test.macro;
  j["config"] = r.config;
  auto& h = j["history"];
  h = nlohmann::ordered_json::array();
  for (const auto& it : r.history) {
    h.push_back({{"iteration", it.iteration},
                 {"train_loss", it.train_loss},
                 {"train_accuracy", it.train_accuracy},
                 {"val_loss", it.val_loss},
                 {"val_accuracy", it.val_accuracy}});
  }
  return j;
}

struct TrainResult {
  ParameterSet params;
  TrainReport report;
};

inline double accuracy_on(const Tensor& probs, const LossRows& rows) {
  if (rows.rows.empty()) return 0.0;
  std::size_t ok = 0;
  for (std::size_t k = 0; k < rows.rows.size(); ++k) ok += predict_row(probs.row_span(rows.rows[k])) == rows.labels[k];
  return static_cast<double>(ok) / static_cast<double>(rows.rows.size());
}

inline F1Scores evaluate(const ModelInputs& in, const ModelConfig& cfg, const ParameterSet& params,
                         const DatasetSplit& split, const std::vector<std::size_t>& part) {
  if (part.empty()) throw Error(ErrorCode::Precondition, "cannot evaluate an empty split");
  const LossRows rows = LossRows::from(part, split.labels);
  auto pass = forward_full(in, cfg, params, LossRows{}, Mode::Eval);
  std::vector<std::size_t> predicted;
  for (std::size_t id : rows.rows) predicted.push_back(predict_row(pass->result.probabilities.row_span(id)));
  return f1_scores(rows.labels, predicted, in.category_count);
}

inline const std::vector<std::size_t>& split_part(const DatasetSplit& split, const std::string& part) {
  if (part == "train") return split.train;
  if (part == "val") return split.val;
  if (part == "test") return split.test;
  throw Error(ErrorCode::Config, "unknown split part '" + part + "'");
}

/// Full-graph Adam training with early stopping; returns the parameters of
/// the best validation iteration (highest accuracy, then lowest loss).
///
/// An iteration counts toward early stopping when its validation loss
/// exceeds a previously recorded one and its validation accuracy is below the
/// best recorded; training stops once more than `patience` such iterations
/// occur in a row.
inline TrainResult train(const Dataset& ds, const RunConfig& rc) {
  const ModelConfig& cfg = rc.model;
  const ModelInputs in = prepare_inputs(ds, cfg);
  if (ds.split.train.empty()) throw Error(ErrorCode::Precondition, "training split is empty");
  const LossRows train_rows = LossRows::from(ds.split.train, ds.split.labels);
  const LossRows val_rows = LossRows::from(ds.split.val, ds.split.labels);
  const bool has_val = !val_rows.rows.empty();

  ParameterSet params = init_parameters(in, cfg);
  AdamOptions aopts;
  aopts.learning_rate = rc.train.learning_rate;
  Adam adam(aopts);

  TrainResult result;
  TrainReport& rep = result.report;
  rep.seed = cfg.seed;
  rep.dataset_hash = dataset_hash(ds);
  rep.config = to_json(rc);
  result.params = params;

  double min_val_loss = std::numeric_limits<double>::infinity();
  double max_val_acc = -1.0;
  bool have_best = false;
  std::size_t bad_streak = 0;

  for (std::size_t it = 1; it <= rc.train.max_iterations; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    IterationRecord rec;
    rec.iteration = it;
    try {
      Rng drop(mix_seed(cfg.seed, 0xd0 + it));
      auto [loss, grads] = loss_and_gradients(in, cfg, params, train_rows, Mode::Train, &drop);
      rec.train_loss = loss;
      adam.step(params, grads);
      auto eval = forward_full(in, cfg, params, has_val ? val_rows : train_rows, Mode::Eval);
      if (!std::isfinite(eval->result.loss.value()[0])) throw Error(ErrorCode::NonFinite, "validation loss");
      rec.train_accuracy = accuracy_on(eval->result.probabilities, train_rows);
      rec.val_loss = eval->result.loss.value()[0];
      rec.val_accuracy = has_val ? accuracy_on(eval->result.probabilities, val_rows) : rec.train_accuracy;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NonFinite) throw;
      throw Error(ErrorCode::NonFinite, "training diverged at iteration " + std::to_string(it) + ": " + e.what());
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rep.history.push_back(rec);
    rep.stop_iteration = it;

    const bool better = !have_best || rec.val_accuracy > rep.best_val_accuracy ||
                        (rec.val_accuracy == rep.best_val_accuracy && rec.val_loss < rep.best_val_loss);
    if (better) {
      have_best = true;
      rep.best_iteration = it;
      rep.best_val_accuracy = rec.val_accuracy;
      rep.best_val_loss = rec.val_loss;
      result.params = params;
    }

    const bool bad = rec.val_loss > min_val_loss && rec.val_accuracy < max_val_acc;
    bad_streak = bad ? bad_streak + 1 : 0;
    min_val_loss = std::min(min_val_loss, rec.val_loss);
    max_val_acc = std::max(max_val_acc, rec.val_accuracy);
    if (has_val && bad_streak > rc.train.patience) {
      rep.early_stopped = true;
      break;
    }
  }
  if (!ds.split.test.empty()) rep.test = evaluate(in, cfg, result.params, ds.split, ds.split.test);
  return result;
}

struct SeedSummary {
  std::vector<TrainReport> reports;  // in seed order
  MeanStd micro;
  MeanStd macro;
};

inline SeedSummary run_seeds(const Dataset& ds, const RunConfig& rc, const std::vector<std::uint64_t>& seeds) {
  if (seeds.size() < 2) throw Error(ErrorCode::Precondition, "run_seeds needs at least two seeds for a standard deviation");
  std::vector<TrainReport> reports(seeds.size());
  const std::size_t workers = std::max<std::size_t>(1, rc.train.threads);
  for (std::size_t start = 0; start < seeds.size(); start += workers) {
    std::vector<std::future<TrainReport>> jobs;
    for (std::size_t k = start; k < std::min(seeds.size(), start + workers); ++k) {
      RunConfig local = rc;
      local.model.seed = seeds[k];
      jobs.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred,
                                [&ds, local] { return train(ds, local).report; }));
    }
    for (std::size_t k = 0; k < jobs.size(); ++k) reports[start + k] = jobs[k].get();
  }
  SeedSummary s;
  std::vector<double> micro, macro;
  for (const auto& r : reports) {
    micro.push_back(r.test.micro);
    macro.push_back(r.test.macro);
  }
  s.micro = mean_std(micro);
  s.macro = mean_std(macro);
  s.reports = std::move(reports);
  return s;
}

// ---------------------------------------------------------------------------
// Attention export
//
// CSV columns:
//   layer, head, target, source, edge_type,
//   alpha_<m> per modality,
//   lambda_<m> per modality            (shared lambda), or
//   lambda_<m>@<n> per modality pair   (lambda computed per influenced modality n),
//   beta or beta_<n> per stream, beta_bar (when alignment modulation is on),
//   beta_tilde or beta_tilde_<n> per stream,
//   same_label: 1 / 0 when both endpoints are labeled, empty otherwise.
// Floats use 17 significant digits. Nodes without in-edges contribute no rows.

struct PairAnalysis {
  std::size_t positive_pairs = 0;
  std::size_t negative_pairs = 0;
  std::size_t positive_beta_larger = 0;  // beta > alpha of the reference modality
  std::size_t negative_beta_smaller = 0;
  double positive_fraction() const {
    return positive_pairs ? static_cast<double>(positive_beta_larger) / static_cast<double>(positive_pairs) : 0.0;
  }
  double negative_fraction() const {
    return negative_pairs ? static_cast<double>(negative_beta_smaller) / static_cast<double>(negative_pairs) : 0.0;
  }
  friend bool operator==(const PairAnalysis&, const PairAnalysis&) = default;
};

inline void check_layer(const LayerState& st, std::size_t layer) {
  if (layer < 1 || layer > st.attention.size()) {
    throw Error(ErrorCode::Precondition, "layer " + std::to_string(layer) + " out of range 1.." +
                                             std::to_string(st.attention.size()));
  }
}

inline std::string export_attention_csv(const LayerState& st, const MmhnGraph& g, const DatasetSplit& split,
                                        std::size_t layer) {
  check_layer(st, layer);
  const LayerAttention& la = st.attention[layer - 1];
  const std::size_t M = st.modality_names.size();
  auto f = io_detail::format_double;
  std::ostringstream os;
  os << "layer,head,target,source,edge_type";
  for (const auto& m : st.modality_names) os << ",alpha_" << m;
  if (la.lambda.size() == 1) {
    for (const auto& m : st.modality_names) os << ",lambda_" << m;
  } else {
    for (std::size_t s = 0; s < la.lambda.size(); ++s)
      for (const auto& m : st.modality_names) os << ",lambda_" << m << "@" << st.modality_names[s];
  }
  if (st.streams == 1) os << ",beta";
  else
    for (const auto& m : st.modality_names) os << ",beta_" << m;
  if (!la.beta_bar.empty()) os << ",beta_bar";
  if (st.streams == 1) os << ",beta_tilde";
  else
    for (const auto& m : st.modality_names) os << ",beta_tilde_" << m;
  os << ",same_label\n";
  if (la.alpha.empty()) return os.str();

  for (std::size_t e = 0; e < st.edges.size(); ++e) {
    const Edge& ed = st.edges[e];
    std::string same;
    auto li = split.labels.find(ed.dst), lj = split.labels.find(ed.src);
    if (li != split.labels.end() && lj != split.labels.end()) same = li->second == lj->second ? "1" : "0";
    for (std::size_t h = 0; h < st.heads; ++h) {
      os << layer << ',' << h << ',' << ed.dst << ',' << ed.src << ',' << g.edge_type_names()[ed.type];
      for (std::size_t m = 0; m < M; ++m) os << ',' << f(la.alpha[m](e, h));
      for (const auto& ls : la.lambda)
        for (std::size_t m = 0; m < M; ++m) os << ',' << f(ls[m](e, h));
      for (const auto& b : la.beta) os << ',' << f(b(e, h));
      if (!la.beta_bar.empty()) os << ',' << f(la.beta_bar(e, h));
      for (const auto& b : la.beta_tilde) os << ',' << f(b(e, h));
      os << ',' << same << '\n';
    }
  }
  return os.str();
}

inline void export_attention(const LayerState& st, const MmhnGraph& g, const DatasetSplit& split, std::size_t layer,
                             const std::string& out_path) {
  const std::string csv = export_attention_csv(st, g, split, layer);
  std::ofstream out(out_path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + out_path);
  out << csv;
}

/// Positive/negative labeled-pair comparison of beta (stream of the reference
/// modality) against alpha of the reference modality, over all heads.
inline PairAnalysis analyze_pairs(const LayerState& st, const DatasetSplit& split, std::size_t layer,
                                  std::size_t reference_modality = 0) {
  check_layer(st, layer);
  const LayerAttention& la = st.attention[layer - 1];
  PairAnalysis pa;
  if (la.alpha.empty()) return pa;
  const Tensor& alpha = la.alpha.at(reference_modality);
  const Tensor& beta = la.beta.at(st.stream_of(reference_modality));
  for (std::size_t e = 0; e < st.edges.size(); ++e) {
    auto li = split.labels.find(st.edges[e].dst), lj = split.labels.find(st.edges[e].src);
    if (li == split.labels.end() || lj == split.labels.end()) continue;
    const bool positive = li->second == lj->second;
    for (std::size_t h = 0; h < st.heads; ++h) {
      if (positive) {
        ++pa.positive_pairs;
        pa.positive_beta_larger += beta(e, h) > alpha(e, h);
      } else {
        ++pa.negative_pairs;
        pa.negative_beta_smaller += beta(e, h) < alpha(e, h);
      }
    }
  }
  return pa;
}

/// Same analysis, recomputed from an exported CSV.
inline PairAnalysis analyze_pairs_csv(const std::string& csv, const std::string& reference_modality) {
  std::istringstream is(csv);
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorCode::Format, "empty attention export");
  const auto header = io_detail::split_fields(line, ',');
  auto col = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(ErrorCode::Format, "attention export lacks column " + name);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ca = col("alpha_" + reference_modality);
  const bool shared = std::find(header.begin(), header.end(), "beta") != header.end();
  const std::size_t cb = shared ? col("beta") : col("beta_" + reference_modality);
  const std::size_t cs = col("same_label");
  PairAnalysis pa;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    const auto fields = io_detail::split_fields(line, ',');
    if (fields.size() != header.size()) throw Error(ErrorCode::Format, "attention export row " + std::to_string(row));
    if (fields[cs].empty()) continue;
    const double a = io_detail::parse_double(fields[ca], "attention export", row);
    const double b = io_detail::parse_double(fields[cb], "attention export", row);
    if (fields[cs] == "1") {
      ++pa.positive_pairs;
      pa.positive_beta_larger += b > a;
    } else {
      ++pa.negative_pairs;
      pa.negative_beta_smaller += b < a;
    }
  }
  return pa;
}

// ---------------------------------------------------------------------------
// Complexity probe

struct ProbeRow {
  std::size_t nodes = 0;
  std::size_t edges = 0;
  std::size_t modalities = 0;
  double seconds_per_iteration = 0.0;
};

struct ProbeOptions {
  std::size_t warmup = 1;
  std::size_t repeats = 5;  // the median is reported
};

/// Times one training-mode forward+backward pass per repeat.
inline ProbeRow probe_one(const Dataset& ds, const ModelConfig& cfg, const ProbeOptions& opts = {}) {
  const ModelInputs in = prepare_inputs(ds, cfg);
  const ParameterSet params = init_parameters(in, cfg);
  const LossRows rows = LossRows::from(ds.split.train, ds.split.labels);
  std::vector<double> times;
  for (std::size_t r = 0; r < opts.warmup + opts.repeats; ++r) {
    Rng drop(mix_seed(cfg.seed, r));
    const auto t0 = std::chrono::steady_clock::now();
    auto res = loss_and_gradients(in, cfg, params, rows, Mode::Train, &drop);
    (void)res;
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (r >= opts.warmup) times.push_back(dt);
  }
  std::sort(times.begin(), times.end());
  ProbeRow row;
  row.nodes = ds.graph.node_count();
  row.edges = in.edge_count();
  row.modalities = in.modality_count();
  row.seconds_per_iteration = times[times.size() / 2];
  return row;
}

inline std::vector<ProbeRow> complexity_probe(const std::vector<SyntheticSpec>& specs, const ModelConfig& cfg,
                                              std::uint64_t seed, const ProbeOptions& opts = {}) {
  std::vector<ProbeRow> rows;
  for (const auto& spec : specs) rows.push_back(probe_one(generate_synthetic_mmhn(spec, seed), cfg, opts));
  return rows;
}

/// Least-squares slope of log(y) against log(x).
inline double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(ErrorCode::Precondition, "slope needs >= 2 points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace hgnn
