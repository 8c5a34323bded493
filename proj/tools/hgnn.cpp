// hgnn command-line driver: train, eval, ablate, synth, gradcheck,
// export-attention, probe.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "hgnn/config.hpp"
#include "hgnn/dataset_io.hpp"
#include "hgnn/fixture.hpp"
#include "hgnn/gradcheck.hpp"
#include "hgnn/model.hpp"
#include "hgnn/synthetic.hpp"
#include "hgnn/trainer.hpp"

namespace fs = std::filesystem;
using namespace hgnn;

namespace {

struct Common {
  std::string data, config, out, checkpoint;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + p.string());
  out << text;
}

RunConfig effective_config(const Common& c) {
  RunConfig rc;
  if (!c.config.empty()) {
    std::ifstream in(c.config);
    if (!in) throw Error(ErrorCode::Io, "missing config " + c.config);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Config, c.config + ": " + e.what());
    }
    rc = run_config_from_json(j);
  }
  for (const auto& s : c.sets) rc = apply_override(rc, s);
  if (c.seed) rc.model.seed = *c.seed;
  return rc;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(s)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::Config, "bad seed '" + item + "'");
    }
  }
  return out;
}

std::string tsv_metrics(const std::string& label, const F1Scores& s) {
  return label + "\t" + io_detail::format_double(s.micro) + "\t" + io_detail::format_double(s.macro) + "\n";
}

std::string model_card(const Dataset& ds, const RunConfig& rc, const TrainReport& rep, std::size_t params) {
  std::ostringstream os;
  os << "# hgnn model card\n\n";
  os << "- dataset hash: " << rep.dataset_hash << "\n";
  os << "- schema hash: " << schema_hash(ds.graph, ds.schema) << "\n";
  os << "- nodes: " << ds.graph.node_count() << ", edges: " << ds.graph.edge_count()
     << ", modalities: " << ds.schema.modality_count() << ", categories: " << ds.schema.categories.size() << "\n";
  os << "- parameters: " << params << "\n";
  os << "- layers " << rc.model.layers << ", hidden " << rc.model.hidden_dim << ", heads " << rc.model.heads
     << ", seed " << rc.model.seed << "\n";
  os << "- best iteration: " << rep.best_iteration << " of " << rep.stop_iteration
     << (rep.early_stopped ? " (early stop)" : "") << "\n";
  os << "- test micro-F1 " << io_detail::format_double(rep.test.micro) << ", macro-F1 "
     << io_detail::format_double(rep.test.macro) << "\n";
  return os.str();
}

struct Loaded {
  ParameterSet params;
  RunConfig rc;
  std::string schema;
};

Loaded load_run(const std::string& checkpoint) {
  nlohmann::json meta;
  Loaded l;
  l.params = load_checkpoint(checkpoint, &meta);
  if (!meta.contains("config") || !meta.contains("schema_hash"))
    throw Error(ErrorCode::Format, "checkpoint " + checkpoint + " lacks run metadata");
  l.rc = run_config_from_json(meta.at("config"));
  l.schema = meta.at("schema_hash").get<std::string>();
  return l;
}

void check_schema(const Loaded& l, const Dataset& ds) {
  const std::string h = schema_hash(ds.graph, ds.schema);
  if (h != l.schema)
    throw Error(ErrorCode::Config, "checkpoint schema " + l.schema + " does not match dataset schema " + h);
}

int cmd_train(const Common& c) {
  const RunConfig rc = effective_config(c);
  const Dataset ds = load_dataset(c.data);
  const TrainResult r = train(ds, rc);
  const fs::path out(c.out);
  nlohmann::json meta;
  meta["config"] = to_json(rc);
  meta["schema_hash"] = schema_hash(ds.graph, ds.schema);
  meta["dataset_hash"] = r.report.dataset_hash;
  fs::create_directories(out);
  save_checkpoint((out / "checkpoint.json").string(), r.params, meta);
  write_file(out / "report.json", to_json(r.report).dump(2) + "\n");
  write_file(out / "config.json", to_json(rc).dump(2) + "\n");
  write_file(out / "dataset_hash.txt", r.report.dataset_hash + "\n");
  write_file(out / "model_card.md", model_card(ds, rc, r.report, parameter_count(r.params)));
  std::ostringstream log;
  log << "iteration\ttrain_loss\tval_loss\tval_accuracy\tseconds\n";
  for (const auto& h : r.report.history)
    log << h.iteration << "\t" << h.train_loss << "\t" << h.val_loss << "\t" << h.val_accuracy << "\t" << h.seconds << "\n";
  write_file(out / "train.log", log.str());
  std::cout << "split\tmicro_f1\tmacro_f1\n" << tsv_metrics("test", r.report.test);
  return 0;
}

int cmd_eval(const Common& c, const std::string& part) {
  const Loaded l = load_run(c.checkpoint);
  const Dataset ds = load_dataset(c.data);
  check_schema(l, ds);
  const ModelInputs in = prepare_inputs(ds, l.rc.model);
  const F1Scores s = evaluate(in, l.rc.model, l.params, ds.split, split_part(ds.split, part));
  const std::string tsv = "split\tmicro_f1\tmacro_f1\n" + tsv_metrics(part, s);
  if (!c.out.empty()) write_file(fs::path(c.out) / "metrics.tsv", tsv);
  std::cout << tsv;
  return 0;
}

int cmd_ablate(const Common& c, std::vector<std::string> variants, const std::string& seeds_arg) {
  if (variants.empty()) variants = variant_names();
  const RunConfig base = effective_config(c);
  for (const auto& v : variants) apply_variant(base, v);  // reject unknown names before any work
  const std::vector<std::uint64_t> seeds = parse_seeds(seeds_arg);
  const Dataset ds = load_dataset(c.data);
  std::ostringstream tsv;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  tsv << "variant\tmacro_f1_mean\tmacro_f1_std\tmicro_f1_mean\tmicro_f1_std\n";
  std::cout << tsv.str() << std::flush;
  for (const auto& v : variants) {
    const RunConfig rc = apply_variant(base, v);
    const SeedSummary s = run_seeds(ds, rc, seeds);
    std::ostringstream row;
    row << v << "\t" << io_detail::format_double(s.macro.mean) << "\t" << io_detail::format_double(s.macro.std) << "\t"
        << io_detail::format_double(s.micro.mean) << "\t" << io_detail::format_double(s.micro.std) << "\n";
    tsv << row.str();
    std::cout << row.str() << std::flush;
    nlohmann::ordered_json j;
    j["variant"] = v;
    j["config"] = to_json(rc);
    j["seeds"] = seeds;
    j["macro_f1"] = {s.macro.mean, s.macro.std};
    j["micro_f1"] = {s.micro.mean, s.micro.std};
    rows.push_back(j);
  }
  if (!c.out.empty()) {
    write_file(fs::path(c.out) / "ablation.tsv", tsv.str());
    nlohmann::ordered_json doc;
    doc["dataset_hash"] = dataset_hash(ds);
    doc["variants"] = rows;
    write_file(fs::path(c.out) / "ablation.json", doc.dump(2) + "\n");
  }
  return 0;
}

struct SynthArgs {
  std::string planting = "cross-modal";
  std::size_t targets = 200, aux = 100, categories = 2, modalities = 2, dim = 8;
  double signal = 4.0, noise = 1.0, homophily = 0.8;
  bool missing = false;
};

SyntheticSpec to_spec(const SynthArgs& a) {
  SyntheticSpec s;
  s.planting = planting_from_string(a.planting);
  s.target_nodes = a.targets;
  s.aux_nodes = a.aux;
  s.categories = a.categories;
  s.dims.assign(a.modalities, a.dim);
  s.signal = a.signal;
  s.noise = a.noise;
  s.homophily = a.homophily;
  s.aux_missing_last_modality = a.missing;
  return s;
}

int cmd_synth(const Common& c, const SynthArgs& a) {
  const Dataset ds = generate_synthetic_mmhn(to_spec(a), c.seed.value_or(0));
  const fs::path manifest = save_dataset(ds, c.out);
  std::cout << manifest.string() << "\n";
  return 0;
}

int cmd_gradcheck(const Common& c, bool inject_fault, const std::vector<std::string>& blocks) {
  const Dataset ds = gradient_fixture();
  ModelConfig cfg;
  cfg.layers = 2;
  cfg.hidden_dim = 8;
  cfg.heads = 2;
  cfg.dropout = 0.0;
  cfg.seed = c.seed.value_or(11);
  const ModelInputs in = prepare_inputs(ds, cfg);
  const ParameterSet params = jitter_parameters(init_parameters(in, cfg), 77, 0.5);
  const LossRows rows = LossRows::from(ds.split.train, ds.split.labels);
  auto [loss, grads] = loss_and_gradients(in, cfg, params, rows, Mode::Eval);
  GradCheckOptions opts;
  for (const auto& b : blocks)
    for (const auto& part : split_list(b)) opts.blocks.push_back(part);
  if (inject_fault) {
    // Corrupt every analytic gradient entry; the check must notice.
    for (auto& [name, g] : grads)
      for (double& v : g.values()) v = v * 1.5 + 1e-3;
  }
  const GradCheckResult r =
      finite_diff_check([&](const ParameterSet& p) { return loss_value(in, cfg, p, rows); }, params, grads, opts);
  std::cout << "block\tmax_rel_error\n";
  for (const auto& [name, err] : r.per_block) std::cout << name << "\t" << err << "\n";
  const bool pass = r.max_rel_error <= 1e-4;
  std::cout << (pass ? "PASS" : "FAIL") << " max_rel_error=" << r.max_rel_error << " coordinates=" << r.coordinates
            << " worst=" << r.worst_block << "\n";
  return pass ? 0 : 1;
}

int cmd_export(const Common& c, std::optional<std::size_t> layer_arg, const std::string& reference) {
  const Loaded l = load_run(c.checkpoint);
  const Dataset ds = load_dataset(c.data);
  check_schema(l, ds);
  const ModelInputs in = prepare_inputs(ds, l.rc.model);
  auto pass = forward_full(in, l.rc.model, l.params, LossRows{}, Mode::Eval);
  const LayerState& st = pass->result.state;
  const std::size_t layer = layer_arg.value_or(st.attention.size());
  std::size_t ref = 0;
  if (!reference.empty()) {
    auto it = std::find(st.modality_names.begin(), st.modality_names.end(), reference);
    if (it == st.modality_names.end()) throw Error(ErrorCode::Config, "modality '" + reference + "' is not enabled");
    ref = static_cast<std::size_t>(it - st.modality_names.begin());
  }
  const fs::path csv = fs::path(c.out) / ("attention_layer" + std::to_string(layer) + ".csv");
  fs::create_directories(c.out);
  export_attention(st, ds.graph, ds.split, layer, csv.string());
  const PairAnalysis pa = analyze_pairs(st, ds.split, layer, ref);
  std::ostringstream tsv;
  tsv << "pairs\ttotal\tmatching\tfraction\n";
  tsv << "positive_beta_larger\t" << pa.positive_pairs << "\t" << pa.positive_beta_larger << "\t"
      << io_detail::format_double(pa.positive_fraction()) << "\n";
  tsv << "negative_beta_smaller\t" << pa.negative_pairs << "\t" << pa.negative_beta_smaller << "\t"
      << io_detail::format_double(pa.negative_fraction()) << "\n";
  write_file(fs::path(c.out) / "pairs.tsv", tsv.str());
  std::cout << csv.string() << "\n" << tsv.str();
  return 0;
}

SyntheticSpec size_preset(const std::string& name, std::size_t modalities) {
  SyntheticSpec s;
  if (name == "small") {
    s.target_nodes = 100;
    s.aux_nodes = 50;
  } else if (name == "medium") {
    s.target_nodes = 200;
    s.aux_nodes = 100;
  } else if (name == "large") {
    s.target_nodes = 400;
    s.aux_nodes = 200;
  } else {
    throw Error(ErrorCode::Config, "unknown probe size '" + name + "' (small, medium, large)");
  }
  s.dims.assign(modalities, 8);
  return s;
}

int cmd_probe(const Common& c, const std::string& sizes_arg, const std::string& modalities_arg, std::size_t repeats) {
  const RunConfig rc = effective_config(c);
  const auto sizes = split_list(sizes_arg);
  if (sizes.empty()) throw Error(ErrorCode::Config, "--sizes is empty");
  std::vector<std::size_t> mods;
  for (const auto& m : split_list(modalities_arg)) {
    try {
      mods.push_back(std::stoul(m));
    } catch (const std::exception&) {
      throw Error(ErrorCode::Config, "bad modality count '" + m + "'");
    }
  }
  ProbeOptions opts;
  opts.repeats = repeats;
  std::ostringstream tsv;
  tsv << "size\tnodes\tedges\tmodalities\tseconds_per_iteration\n";
  for (std::size_t m : mods) {
    std::vector<double> e, t;
    for (const auto& name : sizes) {
      const ProbeRow row = probe_one(generate_synthetic_mmhn(size_preset(name, m), c.seed.value_or(0)), rc.model, opts);
      tsv << name << "\t" << row.nodes << "\t" << row.edges << "\t" << row.modalities << "\t" << row.seconds_per_iteration
          << "\n";
      e.push_back(static_cast<double>(row.edges));
      t.push_back(row.seconds_per_iteration);
    }
    if (e.size() >= 2) tsv << "# edge exponent (M=" << m << "): " << log_log_slope(e, t) << "\n";
  }
  if (!c.out.empty()) write_file(fs::path(c.out) / "probe.tsv", tsv.str());
  std::cout << tsv.str();
  return 0;
}

std::string one_line(std::string s) {
  for (char& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

int exit_code_for(ErrorCode code) {
  return code == ErrorCode::Config || code == ErrorCode::Io ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-modal heterogeneous graph network with nested inter-modal attention"};
  app.require_subcommand(1);
  Common c;

  auto add_common = [&](CLI::App* sub, bool data, bool config) {
    if (data) sub->add_option("--data", c.data, "dataset manifest")->required();
    if (config) {
      sub->add_option("--config", c.config, "JSON config file");
      sub->add_option("--set", c.sets, "key=value override (repeatable)");
    }
  };
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", c.seed, "seed");
  };

  auto* train_cmd = app.add_subcommand("train", "train one model");
  add_common(train_cmd, true, true);
  add_seed(train_cmd);
  train_cmd->add_option("--out", c.out, "output directory")->required();

  std::string part = "test";
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval_cmd, true, false);
  eval_cmd->add_option("--checkpoint", c.checkpoint)->required();
  eval_cmd->add_option("--split", part, "train, val or test");
  eval_cmd->add_option("--out", c.out);

  std::vector<std::string> variants, positional;
  std::string seeds = "0,1,2,3,4";
  auto* ablate_cmd = app.add_subcommand("ablate", "per-variant macro/micro F1 over seeds");
  add_common(ablate_cmd, true, true);
  // Variant names such as -cross look like flags to the parser; collect them as extras.
  ablate_cmd->allow_extras();
  ablate_cmd->add_option("--variant", variants, "variant name (repeatable)");
  ablate_cmd->add_option("--seeds", seeds, "comma-separated seeds");
  ablate_cmd->add_option("--out", c.out);

  SynthArgs sa;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic dataset");
  add_seed(synth_cmd);
  synth_cmd->add_option("--spec", sa.planting, "cross-modal, aligned or none");
  synth_cmd->add_option("--targets", sa.targets);
  synth_cmd->add_option("--aux", sa.aux);
  synth_cmd->add_option("--categories", sa.categories);
  synth_cmd->add_option("--modalities", sa.modalities);
  synth_cmd->add_option("--dim", sa.dim);
  synth_cmd->add_option("--signal", sa.signal);
  synth_cmd->add_option("--noise", sa.noise);
  synth_cmd->add_option("--homophily", sa.homophily);
  synth_cmd->add_flag("--missing-aux-modality", sa.missing, "auxiliary nodes lack the last modality");
  synth_cmd->add_option("--out", c.out)->required();

  bool inject = false;
  std::vector<std::string> blocks;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check on the built-in fixture");
  add_seed(grad_cmd);
  grad_cmd->add_flag("--inject-fault", inject, "corrupt the analytic gradient (self-test)");
  grad_cmd->add_option("--blocks", blocks, "parameter name substrings to check");

  std::optional<std::size_t> layer;
  std::string reference;
  auto* export_cmd = app.add_subcommand("export-attention", "write per-edge attention CSV");
  add_common(export_cmd, true, false);
  export_cmd->add_option("--checkpoint", c.checkpoint)->required();
  export_cmd->add_option("--layer", layer, "layer 1..K (default K)");
  export_cmd->add_option("--reference", reference, "modality compared against beta");
  export_cmd->add_option("--out", c.out)->required();

  std::string sizes = "small,medium", mods = "2";
  std::size_t repeats = 3;
  auto* probe_cmd = app.add_subcommand("probe", "time one training iteration across graph sizes");
  add_common(probe_cmd, false, true);
  add_seed(probe_cmd);
  probe_cmd->add_option("--sizes", sizes, "small, medium, large");
  probe_cmd->add_option("--modalities", mods, "comma-separated modality counts");
  probe_cmd->add_option("--repeats", repeats);
  probe_cmd->add_option("--out", c.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "ERROR usage: " << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    if (*train_cmd) return cmd_train(c);
    if (*eval_cmd) return cmd_eval(c, part);
    if (*ablate_cmd) {
      positional = ablate_cmd->remaining();
      positional.insert(positional.end(), variants.begin(), variants.end());
      return cmd_ablate(c, positional, seeds);
    }
    if (*synth_cmd) return cmd_synth(c, sa);
    if (*grad_cmd) return cmd_gradcheck(c, inject, blocks);
    if (*export_cmd) return cmd_export(c, layer, reference);
    if (*probe_cmd) return cmd_probe(c, sizes, mods, repeats);
  } catch (const Error& e) {
    std::cerr << "ERROR " << to_string(e.code()) << ": " << one_line(e.what()) << "\n";
    return exit_code_for(e.code());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "ERROR format: " << one_line(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "ERROR internal: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 2;
}
