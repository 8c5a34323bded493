// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Thresholds are fixed here; nothing is read from the environment.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hgnn/config.hpp"
#include "hgnn/fixture.hpp"
#include "hgnn/gradcheck.hpp"
#include "hgnn/model.hpp"
#include "hgnn/optim.hpp"
#include "hgnn/synthetic.hpp"
#include "hgnn/trainer.hpp"

using namespace hgnn;

namespace {

// Gradient oracle
constexpr double kGradTolerance = 1e-4;
constexpr double kGradSeconds = 60.0;
// Simplex suite
constexpr int kSimplexPasses = 1000;
constexpr double kSimplexTolerance = 1e-9;
// Planted benchmark
constexpr double kBenchMinMacro = 0.90;
constexpr double kBenchMinGap = 0.05;
constexpr double kBenchSeconds = 600.0;
constexpr double kBenchMaxStd = 0.05;
// Missing-modality suppression: relative reduction of lambda mass
constexpr double kSuppression = 0.20;
// Complexity probe
constexpr double kEdgeExponentLo = 0.8, kEdgeExponentHi = 1.3;
constexpr double kModalityRatioLo = 1.7, kModalityRatioHi = 3.2;
// Ablation reachability
constexpr double kReachable = 1e-6;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

ModelConfig fixture_config() {
  ModelConfig c;
  c.layers = 2;
  c.hidden_dim = 8;
  c.heads = 2;
  c.dropout = 0.0;
  c.seed = 11;
  return c;
}

// ---------------------------------------------------------------------------

void gradient_oracle() {
  const auto t0 = Clock::now();
  const Dataset ds = gradient_fixture();
  const ModelConfig cfg = fixture_config();
  const ModelInputs in = prepare_inputs(ds, cfg);
  const ParameterSet p = jitter_parameters(init_parameters(in, cfg), 77, 0.5);
  const LossRows rows = LossRows::from(ds.split.train, ds.split.labels);
  auto [loss, grads] = loss_and_gradients(in, cfg, p, rows, Mode::Eval);
  const GradCheckResult r =
      finite_diff_check([&](const ParameterSet& q) { return loss_value(in, cfg, q, rows); }, p, grads);
  bool all_families = true;
  for (const char* family : {"input_proj.", "key_proj.", "query_proj.", "message_proj.", "output_proj.", "w_node.",
                             "w_modal.", "w_msg.", "fusion.", "classifier."}) {
    bool seen = false;
    for (const auto& [name, _] : r.per_block) seen = seen || name.rfind(family, 0) == 0;
    all_families = all_families && seen;
  }
  const bool every_block = r.per_block.size() == p.size();
  const double dt = seconds_since(t0);
  report(r.max_rel_error <= kGradTolerance && dt < kGradSeconds && all_families && every_block && r.coordinates >= 200,
         "gradient-oracle",
         "max_rel_error=" + fmt("%.3g", r.max_rel_error) + " (<= 1e-4) worst=" + r.worst_block +
             " coordinates=" + std::to_string(r.coordinates) + " blocks=" + std::to_string(r.per_block.size()) + "/" +
             std::to_string(p.size()) + " seconds=" + fmt("%.2f", dt));
}

// ---------------------------------------------------------------------------

bool simplex_rows(const Tensor& t, const std::vector<Edge>& edges, std::size_t nodes, std::size_t& bad) {
  for (std::size_t h = 0; h < t.cols(); ++h) {
    std::vector<double> sum(nodes, 0.0);
    std::vector<bool> any(nodes, false);
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const double v = t(e, h);
      if (!(v >= 0.0)) ++bad;
      sum[edges[e].dst] += v;
      any[edges[e].dst] = true;
    }
    for (std::size_t i = 0; i < nodes; ++i)
      if (any[i] && std::abs(sum[i] - 1.0) > kSimplexTolerance) ++bad;
  }
  return bad == 0;
}

void simplex_suite() {
  const std::vector<std::string> variants = {"full", "+inf", "-cross", "-nei", "-adapt", "nonlinear"};
  std::size_t bad = 0, checked = 0;
  for (int t = 0; t < kSimplexPasses; ++t) {
    const Dataset ds = gradient_fixture(1000 + static_cast<std::uint64_t>(t), t % 2 == 0);
    RunConfig rc;
    rc.model = fixture_config();
    rc.model.seed = static_cast<std::uint64_t>(t);
    rc = apply_variant(rc, variants[static_cast<std::size_t>(t) % variants.size()]);
    const ModelInputs in = prepare_inputs(ds, rc.model);
    const ParameterSet p = jitter_parameters(init_parameters(in, rc.model), 5000 + static_cast<std::uint64_t>(t), 2.0);
    auto pass = forward_full(in, rc.model, p, LossRows{}, Mode::Eval);
    const LayerState& st = pass->result.state;
    const std::size_t N = in.node_count();
    for (const auto& la : st.attention) {
      for (const auto& a : la.alpha) simplex_rows(a, st.edges, N, bad);
      for (const auto& b : la.beta) simplex_rows(b, st.edges, N, bad);
      if (la.beta_bar.size()) simplex_rows(la.beta_bar, st.edges, N, bad);
      for (const auto& b : la.beta_tilde) simplex_rows(b, st.edges, N, bad);
      for (const auto& stream : la.lambda) {
        if (stream.empty()) continue;  // no lambda under -cross
        for (std::size_t e = 0; e < st.edges.size(); ++e)
          for (std::size_t h = 0; h < st.heads; ++h) {
            double s = 0.0;
            for (const auto& l : stream) {
              if (!(l(e, h) >= 0.0)) ++bad;
              s += l(e, h);
            }
            if (std::abs(s - 1.0) > kSimplexTolerance) ++bad;
          }
      }
      ++checked;
    }
  }
  report(bad == 0, "simplex-suite",
         std::to_string(kSimplexPasses) + " passes, " + std::to_string(checked) + " layers, violations=" +
             std::to_string(bad));
}

// ---------------------------------------------------------------------------

void single_modality_reduction() {
  Dataset ds = gradient_fixture();
  ds.schema.modality_names = {"text"};
  ds.schema.input_dim = {ds.schema.input_dim[0]};
  for (auto& row : ds.schema.native) row = {true};
  ds.features.features = {ds.features.features[0]};
  ds.features.presence = FeatureStore::presence_for(ds.graph, ds.schema);
  const ModelConfig cfg = fixture_config();
  const ModelInputs in = prepare_inputs(ds, cfg);
  auto pass = forward_full(in, cfg, jitter_parameters(init_parameters(in, cfg), 3), LossRows{}, Mode::Eval);
  const LayerState& st = pass->result.state;
  std::size_t lambda_bad = 0, r_bad = 0, bar_bad = 0, beta_bad = 0;
  for (const auto& la : st.attention) {
    for (double v : la.lambda[0][0].values()) lambda_bad += v != 1.0;
    for (double v : la.discrepancy.values()) r_bad += v != 0.0;
    for (std::size_t e = 0; e < st.edges.size(); ++e) {
      const double uniform = 1.0 / static_cast<double>(ds.graph.in_neighbors(st.edges[e].dst).size());
      for (std::size_t h = 0; h < st.heads; ++h) bar_bad += la.beta_bar(e, h) != uniform;
    }
    Tape tape;
    const Tensor expected = segment_softmax(tape.constant(la.alpha[0]), in.dst, in.node_count()).value();
    for (std::size_t k = 0; k < expected.size(); ++k) beta_bad += la.beta[0][k] != expected[k];
  }
  report(lambda_bad + r_bad + bar_bad + beta_bad == 0, "single-modality-reduction",
         "lambda!=1: " + std::to_string(lambda_bad) + ", r!=0: " + std::to_string(r_bad) +
             ", beta_bar non-uniform: " + std::to_string(bar_bad) + ", beta!=softmax(alpha) bitwise: " +
             std::to_string(beta_bad));
}

// ---------------------------------------------------------------------------
// Planted benchmark, stability, determinism and export fidelity share one
// dataset and configuration.

SyntheticSpec benchmark_spec() {
  SyntheticSpec s;
  s.target_nodes = 200;
  s.aux_nodes = 100;
  s.planting = PlantingMode::CrossModal;
  s.signal = 1.5;
  s.homophily = 0.95;
  return s;
}

RunConfig benchmark_config() {
  RunConfig rc;
  // Smaller and faster than the defaults so ten runs fit the time budget on one core.
  rc.model.hidden_dim = 32;
  rc.model.heads = 8;
  rc.train.learning_rate = 0.005;
  return rc;
}

void planted_benchmark() {
  const auto t0 = Clock::now();
  const Dataset ds = generate_synthetic_mmhn(benchmark_spec(), 1);
  const std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  const RunConfig full = benchmark_config();
  const SeedSummary a = run_seeds(ds, full, seeds);
  const SeedSummary b = run_seeds(ds, apply_variant(full, "-cross"), seeds);
  const double dt = seconds_since(t0);
  const double gap = a.macro.mean - b.macro.mean;
  std::string per_seed;
  for (std::size_t k = 0; k < seeds.size(); ++k)
    per_seed += fmt(" %.4f", a.reports[k].test.macro) + "/" + fmt("%.4f", b.reports[k].test.macro);
  report(a.macro.mean >= kBenchMinMacro && gap >= kBenchMinGap && dt < kBenchSeconds, "planted-benchmark",
         "full macro-F1 " + fmt("%.4f", a.macro.mean) + " (>= 0.90), -cross " + fmt("%.4f", b.macro.mean) + ", gap " +
             fmt("%.4f", gap) + " (>= 0.05), seconds " + fmt("%.1f", dt) + " (< 600); per seed full/-cross:" + per_seed);

  // Stability and determinism.
  const TrainResult again = train(ds, [&] {
    RunConfig rc = full;
    rc.model.seed = seeds[0];
    return rc;
  }());
  const bool identical = to_json(again.report).dump() == to_json(a.reports[0]).dump();
  report(a.macro.std <= kBenchMaxStd && identical, "determinism-stability",
         "macro-F1 std over 5 seeds " + fmt("%.4f", a.macro.std) + " (<= 0.05); identical seed reproduces report: " +
             (identical ? "yes" : "no"));

  // Export fidelity on the same trained model.
  const ModelInputs in = prepare_inputs(ds, full.model);
  auto pass = forward_full(in, full.model, again.params, LossRows{}, Mode::Eval);
  const auto dir = std::filesystem::temp_directory_path() / ("hgnn_acceptance_" + std::to_string(std::random_device{}()));
  std::filesystem::create_directories(dir);
  bool equal = true;
  std::string detail;
  for (std::size_t layer = 1; layer <= pass->result.state.attention.size(); ++layer) {
    const auto path = dir / ("attention_" + std::to_string(layer) + ".csv");
    export_attention(pass->result.state, ds.graph, ds.split, layer, path.string());
    std::ifstream f(path);
    const std::string text((std::istreambuf_iterator<char>(f)), {});
    const PairAnalysis mem = analyze_pairs(pass->result.state, ds.split, layer);
    const PairAnalysis csv = analyze_pairs_csv(text, "text");
    equal = equal && mem == csv && mem.positive_fraction() == csv.positive_fraction() &&
            mem.negative_fraction() == csv.negative_fraction() && mem.positive_pairs > 0;
    detail += " layer " + std::to_string(layer) + ": positive " + fmt("%.4f", mem.positive_fraction()) + " negative " +
              fmt("%.4f", mem.negative_fraction()) + ";";
  }
  std::filesystem::remove_all(dir);
  report(equal, "export-fidelity", std::string("csv recomputation equals in-memory:") + detail);
}

// ---------------------------------------------------------------------------

double missing_lambda_mass(const Dataset& ds, const RunConfig& rc, const ParameterSet& p) {
  const ModelInputs in = prepare_inputs(ds, rc.model);
  auto pass = forward_full(in, rc.model, p, LossRows{}, Mode::Eval);
  const LayerState& st = pass->result.state;
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& la : st.attention)
    for (std::size_t m = 0; m < in.modality_count(); ++m)
      for (std::size_t e = 0; e < st.edges.size(); ++e) {
        if (in.native[st.edges[e].src][m]) continue;
        for (std::size_t h = 0; h < st.heads; ++h) {
          sum += la.lambda[0][m](e, h);
          ++count;
        }
      }
  return count ? sum / static_cast<double>(count) : 0.0;
}

void missing_modality_suppression() {
  SyntheticSpec spec;
  spec.target_nodes = 100;
  spec.aux_nodes = 50;
  spec.aux_missing_last_modality = true;
  const Dataset ds = generate_synthetic_mmhn(spec, 2);
  double with = 0.0, without = 0.0;
  const std::vector<std::uint64_t> seeds = {0, 1, 2};
  for (std::uint64_t seed : seeds) {
    RunConfig rc;
    rc.model.layers = 2;
    rc.model.hidden_dim = 16;
    rc.model.heads = 2;
    rc.model.seed = seed;
    rc.train.learning_rate = 0.01;
    rc.train.max_iterations = 100;
    rc.train.patience = rc.train.max_iterations;
    with += missing_lambda_mass(ds, rc, train(ds, rc).params);
    const RunConfig off = apply_variant(rc, "-Latt");
    without += missing_lambda_mass(ds, off, train(ds, off).params);
  }
  with /= static_cast<double>(seeds.size());
  without /= static_cast<double>(seeds.size());
  const double reduction = without > 0 ? (without - with) / without : 0.0;
  report(with < without && reduction >= kSuppression, "missing-modality-suppression",
         "mean lambda on missing slots with L_att " + fmt("%.4f", with) + ", without " + fmt("%.4f", without) +
             ", relative reduction " + fmt("%.3f", reduction) + " (>= 0.20)");
}

// ---------------------------------------------------------------------------

void overfit_sanity() {
  SyntheticSpec spec;
  spec.target_nodes = 25;
  spec.aux_nodes = 10;
  spec.ratios = {0.8, 0.1, 0.1};
  const Dataset ds = generate_synthetic_mmhn(spec, 3);
  RunConfig rc;
  rc.model = fixture_config();
  rc.train.learning_rate = 0.05;
  rc.train.max_iterations = 300;
  rc.train.patience = 300;
  const TrainResult r = train(ds, rc);
  std::size_t first = 0;
  for (const auto& h : r.report.history)
    if (h.train_accuracy == 1.0) {
      first = h.iteration;
      break;
    }
  report(ds.split.train.size() == 20 && first > 0, "overfit-sanity",
         std::to_string(ds.split.train.size()) + " labeled train nodes; first iteration at 100% train accuracy: " +
             (first ? std::to_string(first) : std::string("never")) + " (<= 300)");
}

// ---------------------------------------------------------------------------

void complexity_probe_check() {
  const ModelConfig cfg;  // default model
  ProbeOptions opts;
  opts.warmup = 1;
  opts.repeats = 5;
  std::vector<double> edges, times;
  std::string table;
  for (std::size_t targets : {200u, 400u, 800u, 1600u}) {
    SyntheticSpec s;
    s.target_nodes = targets;
    s.aux_nodes = targets / 2;
    const ProbeRow row = probe_one(generate_synthetic_mmhn(s, 1), cfg, opts);
    edges.push_back(static_cast<double>(row.edges));
    times.push_back(row.seconds_per_iteration);
    table += " |E|=" + std::to_string(row.edges) + ":" + fmt("%.4fs", row.seconds_per_iteration);
  }
  const double slope = log_log_slope(edges, times);
  SyntheticSpec two, three;
  two.target_nodes = three.target_nodes = 800;
  two.aux_nodes = three.aux_nodes = 400;
  two.dims = {8, 8};
  three.dims = {8, 8, 8};
  const ProbeRow r2 = probe_one(generate_synthetic_mmhn(two, 1), cfg, opts);
  const ProbeRow r3 = probe_one(generate_synthetic_mmhn(three, 1), cfg, opts);
  const double ratio = r3.seconds_per_iteration / r2.seconds_per_iteration;
  const bool same_edges = r2.edges == r3.edges;
  report(slope >= kEdgeExponentLo && slope <= kEdgeExponentHi && ratio >= kModalityRatioLo &&
             ratio <= kModalityRatioHi && same_edges,
         "complexity-probe",
         "edge exponent " + fmt("%.3f", slope) + " (0.8-1.3)," + table + "; M 2->3 at |E|=" + std::to_string(r2.edges) +
             (same_edges ? "" : "/" + std::to_string(r3.edges)) + " ratio " + fmt("%.4f", ratio) + " (1.7-3.2)");
}

// ---------------------------------------------------------------------------

Tensor outputs_after_steps(const Dataset& ds, const ModelConfig& cfg, std::size_t steps) {
  const ModelInputs in = prepare_inputs(ds, cfg);
  ParameterSet p = init_parameters(in, cfg);
  Adam adam(AdamOptions{0.05});
  const LossRows rows = LossRows::from(ds.split.train, ds.split.labels);
  for (std::size_t t = 0; t < steps; ++t) adam.step(p, loss_and_gradients(in, cfg, p, rows, Mode::Eval).second);
  return forward_full(in, cfg, p, rows, Mode::Eval)->result.probabilities;
}

void ablation_reachability() {
  const Dataset missing = gradient_fixture(3, true);
  const Dataset complete = gradient_fixture(3, false);
  RunConfig base;
  base.model = fixture_config();
  const Tensor ref_missing = outputs_after_steps(missing, base.model, 5);
  const Tensor ref_complete = outputs_after_steps(complete, base.model, 5);
  std::string detail;
  bool ok = true;
  std::size_t reached = 0;
  for (const auto& name : variant_names()) {
    if (name == "full") continue;
    const ModelConfig v = apply_variant(base, name).model;
    const double diff = max_abs_diff(ref_missing, outputs_after_steps(missing, v, 5));
    const bool hit = diff > kReachable;
    reached += hit;
    ok = ok && hit;
    detail += " " + name + "=" + fmt("%.2g", diff);
  }
  const double latt_complete =
      max_abs_diff(ref_complete, outputs_after_steps(complete, apply_variant(base, "-Latt").model, 5));
  ok = ok && latt_complete == 0.0;
  report(ok, "ablation-reachability",
         std::to_string(reached) + "/12 variants differ by > 1e-6 after 5 steps;" + detail +
             "; -Latt on full-modality data diff=" + fmt("%.2g", latt_complete) + " (== 0)");
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<void()>>> checks = {
      {"gradient-oracle", gradient_oracle},
      {"simplex-suite", simplex_suite},
      {"single-modality-reduction", single_modality_reduction},
      {"ablation-reachability", ablation_reachability},
      {"overfit-sanity", overfit_sanity},
      {"missing-modality-suppression", missing_modality_suppression},
      {"complexity-probe", complexity_probe_check},
      {"planted-benchmark", planted_benchmark},
  };
  for (const auto& [name, fn] : checks) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(false, name, std::string("exception: ") + e.what());
    }
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
