#pragma once

// On-disk dataset format.
//
// manifest.json:
//   {
//     "node_types": ["item", {"name": "review", "modalities": ["text"]}],
//     "edge_types": ["item-review", "review-item"],
//     "modalities": [{"name": "text", "dim": 8}, {"name": "vision", "dim": 8}],
//     "target_type": "item",
//     "categories": ["a", "b"],
//     "files": {"nodes": "nodes.tsv", "edges": "edges.tsv",
//               "features": {"text": "text.csv", "vision": "vision.csv"},
//               "labels": "labels.tsv", "split": "split.tsv"},
//     "split_ratios": [0.2, 0.1, 0.7], "split_seed": 0
//   }
// A node type given as a bare string carries every modality. Paths are
// relative to the manifest. Without a split file the split is drawn from
// split_ratios/split_seed (defaults 0.2/0.1/0.7, seed 0).
//
// nodes.tsv   node_id \t type_name
// edges.tsv   src \t dst \t edge_type_name
// <m>.csv     row i = node i, comma-separated floats; a blank row marks a
//             node without that modality
// labels.tsv  node_id \t category_name
// split.tsv   node_id \t train|val|test

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hgnn/error.hpp"
#include "hgnn/graph.hpp"
#include "hgnn/split.hpp"

namespace hgnn {

namespace io_detail {

inline std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

[[noreturn]] inline void fail(const std::string& file, std::size_t row, const std::string& msg) {
  throw Error(ErrorCode::Format, file + ":" + std::to_string(row) + ": " + msg);
}

inline std::size_t parse_id(const std::string& s, const std::string& file, std::size_t row) {
  try {
    std::size_t pos = 0;
    long long v = std::stoll(s, &pos);
    if (pos != s.size() || v < 0) fail(file, row, "invalid node id '" + s + "'");
    return static_cast<std::size_t>(v);
  } catch (const std::logic_error&) {
    fail(file, row, "invalid node id '" + s + "'");
  }
}

inline double parse_double(const std::string& s, const std::string& file, std::size_t row) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) fail(file, row, "invalid number '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    fail(file, row, "invalid number '" + s + "'");
  }
}

inline std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::Io, "missing file " + p.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(strip_cr(line));
  return lines;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace io_detail

inline Dataset load_dataset(const std::filesystem::path& manifest_path) {
  using namespace io_detail;
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorCode::Io, "missing manifest " + manifest_path.string());
  nlohmann::json m;
  try {
    in >> m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, manifest_path.string() + ": " + e.what());
  }
  const auto base = manifest_path.parent_path();
  const std::string mname = manifest_path.string();

  try {
    ModalitySchema schema;
    for (const auto& mod : m.at("modalities")) {
      schema.modality_names.push_back(mod.at("name").get<std::string>());
      const long long dim = mod.at("dim").get<long long>();
      if (dim <= 0) throw Error(ErrorCode::Format, mname + ": modality dim must be positive");
      schema.input_dim.push_back(static_cast<std::size_t>(dim));
    }
    std::vector<std::string> node_types;
    for (const auto& nt : m.at("node_types")) {
      std::vector<bool> row(schema.modality_count(), true);
      if (nt.is_string()) {
        node_types.push_back(nt.get<std::string>());
      } else {
        node_types.push_back(nt.at("name").get<std::string>());
        std::fill(row.begin(), row.end(), false);
        for (const auto& mm : nt.at("modalities")) row[schema.modality_index(mm.get<std::string>())] = true;
      }
      schema.native.push_back(row);
    }
    auto edge_types = m.at("edge_types").get<std::vector<std::string>>();
    schema.target_type = index_of(node_types, m.at("target_type").get<std::string>(), "node type");
    schema.categories = m.at("categories").get<std::vector<std::string>>();
    const auto& files = m.at("files");

    const auto nodes_file = (base / files.at("nodes").get<std::string>()).string();
    std::vector<std::size_t> type_of;
    {
      auto lines = read_lines(nodes_file);
      for (std::size_t r = 0; r < lines.size(); ++r) {
        if (lines[r].empty()) continue;
        auto f = split_fields(lines[r], '\t');
        if (f.size() != 2) fail(nodes_file, r + 1, "expected 'node_id<TAB>type'");
        const std::size_t id = parse_id(f[0], nodes_file, r + 1);
        if (id != type_of.size()) fail(nodes_file, r + 1, "node ids must be 0-based and contiguous");
        auto it = std::find(node_types.begin(), node_types.end(), f[1]);
        if (it == node_types.end()) fail(nodes_file, r + 1, "unknown node type '" + f[1] + "'");
        type_of.push_back(static_cast<std::size_t>(it - node_types.begin()));
      }
    }
    const std::size_t n = type_of.size();

    const auto edges_file = (base / files.at("edges").get<std::string>()).string();
    std::vector<Edge> edges;
    {
      auto lines = read_lines(edges_file);
      for (std::size_t r = 0; r < lines.size(); ++r) {
        if (lines[r].empty()) continue;
        auto f = split_fields(lines[r], '\t');
        if (f.size() != 3) fail(edges_file, r + 1, "expected 'src<TAB>dst<TAB>edge_type'");
        Edge e{parse_id(f[0], edges_file, r + 1), parse_id(f[1], edges_file, r + 1), 0};
        if (e.src >= n || e.dst >= n) fail(edges_file, r + 1, "invalid endpoint");
        auto it = std::find(edge_types.begin(), edge_types.end(), f[2]);
        if (it == edge_types.end()) fail(edges_file, r + 1, "unknown edge type '" + f[2] + "'");
        e.type = static_cast<std::size_t>(it - edge_types.begin());
        edges.push_back(e);
      }
    }
    MmhnGraph graph(node_types, edge_types, type_of, std::move(edges));
    schema.validate(graph);

    FeatureStore store;
    store.presence = FeatureStore::presence_for(graph, schema);
    for (std::size_t mi = 0; mi < schema.modality_count(); ++mi) {
      const auto& fmap = files.at("features");
      if (!fmap.contains(schema.modality_names[mi])) {
        throw Error(ErrorCode::Format, mname + ": no feature file for modality '" + schema.modality_names[mi] + "'");
      }
      const auto ffile = (base / fmap.at(schema.modality_names[mi]).get<std::string>()).string();
      auto lines = read_lines(ffile);
      if (lines.size() < n) fail(ffile, lines.size() + 1, "expected " + std::to_string(n) + " rows");
      const std::size_t dim = schema.input_dim[mi];
      Tensor x = Tensor::zeros(n, dim);
      for (std::size_t r = 0; r < lines.size(); ++r) {
        if (lines[r].empty()) {
          if (r < n && store.presence[r][mi]) fail(ffile, r + 1, "missing features for a node that has this modality");
          continue;
        }
        if (r >= n) fail(ffile, r + 1, "more feature rows than nodes");
        auto f = split_fields(lines[r], ',');
        if (f.size() != dim) {
          fail(ffile, r + 1, "dimension mismatch: " + std::to_string(f.size()) + " values, declared dim " + std::to_string(dim));
        }
        for (std::size_t c = 0; c < dim; ++c) x(r, c) = parse_double(f[c], ffile, r + 1);
      }
      store.features.push_back(std::move(x));
    }

    const auto labels_file = (base / files.at("labels").get<std::string>()).string();
    std::map<std::size_t, std::size_t> labels;
    {
      auto lines = read_lines(labels_file);
      for (std::size_t r = 0; r < lines.size(); ++r) {
        if (lines[r].empty()) continue;
        auto f = split_fields(lines[r], '\t');
        if (f.size() != 2) fail(labels_file, r + 1, "expected 'node_id<TAB>category'");
        const std::size_t id = parse_id(f[0], labels_file, r + 1);
        if (id >= n) fail(labels_file, r + 1, "invalid node id");
        if (type_of[id] != schema.target_type) fail(labels_file, r + 1, "label on a non-target node");
        auto it = std::find(schema.categories.begin(), schema.categories.end(), f[1]);
        if (it == schema.categories.end()) fail(labels_file, r + 1, "label outside categories: '" + f[1] + "'");
        labels[id] = static_cast<std::size_t>(it - schema.categories.begin());
      }
    }

    DatasetSplit split;
    if (files.contains("split")) {
      const auto split_file = (base / files.at("split").get<std::string>()).string();
      split.labels = labels;
      std::vector<int> seen(n, 0);
      auto lines = read_lines(split_file);
      for (std::size_t r = 0; r < lines.size(); ++r) {
        if (lines[r].empty()) continue;
        auto f = split_fields(lines[r], '\t');
        if (f.size() != 2) fail(split_file, r + 1, "expected 'node_id<TAB>train|val|test'");
        const std::size_t id = parse_id(f[0], split_file, r + 1);
        if (id >= n) fail(split_file, r + 1, "invalid node id");
        if (seen[id]++) fail(split_file, r + 1, "overlapping splits for node " + f[0]);
        if (!labels.count(id)) fail(split_file, r + 1, "node " + f[0] + " has no label");
        if (f[1] == "train") split.train.push_back(id);
        else if (f[1] == "val") split.val.push_back(id);
        else if (f[1] == "test") split.test.push_back(id);
        else fail(split_file, r + 1, "unknown split part '" + f[1] + "'");
      }
    } else {
      auto ratios = m.value("split_ratios", std::vector<double>{0.2, 0.1, 0.7});
      if (ratios.size() != 3) throw Error(ErrorCode::Format, mname + ": split_ratios needs 3 entries");
      split = split_dataset(labels, {ratios[0], ratios[1], ratios[2]}, m.value("split_seed", 0ULL),
                            schema.categories.size());
    }
    split.validate(graph, schema);
    return Dataset{std::move(graph), std::move(schema), std::move(store), std::move(split)};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, mname + ": " + e.what());
  }
}

/// Writes `ds` as manifest.json plus data files under `dir`; returns the
/// manifest path. Output is a pure function of `ds`.
inline std::filesystem::path save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  using io_detail::format_double;
  std::filesystem::create_directories(dir);
  const auto& g = ds.graph;
  const auto& s = ds.schema;
  auto open = [&](const std::string& name) {
    std::ofstream out(dir / name);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + (dir / name).string());
    return out;
  };

  nlohmann::ordered_json m;
  m["node_types"] = nlohmann::ordered_json::array();
  for (std::size_t o = 0; o < g.node_type_count(); ++o) {
    nlohmann::ordered_json mods = nlohmann::ordered_json::array();
    for (std::size_t mi = 0; mi < s.modality_count(); ++mi)
      if (s.native[o][mi]) mods.push_back(s.modality_names[mi]);
    m["node_types"].push_back({{"name", g.node_type_names()[o]}, {"modalities", mods}});
  }
  m["edge_types"] = g.edge_type_names();
  m["modalities"] = nlohmann::ordered_json::array();
  for (std::size_t mi = 0; mi < s.modality_count(); ++mi)
    m["modalities"].push_back({{"name", s.modality_names[mi]}, {"dim", s.input_dim[mi]}});
  m["target_type"] = g.node_type_names()[s.target_type];
  m["categories"] = s.categories;
  nlohmann::ordered_json files;
  files["nodes"] = "nodes.tsv";
  files["edges"] = "edges.tsv";
  for (const auto& name : s.modality_names) files["features"][name] = name + ".csv";
  files["labels"] = "labels.tsv";
  files["split"] = "split.tsv";
  m["files"] = files;
  open("manifest.json") << m.dump(2) << '\n';

  {
    auto out = open("nodes.tsv");
    for (std::size_t i = 0; i < g.node_count(); ++i) out << i << '\t' << g.node_type_names()[g.node_type(i)] << '\n';
  }
  {
    auto out = open("edges.tsv");
    for (const Edge& e : g.edges()) out << e.src << '\t' << e.dst << '\t' << g.edge_type_names()[e.type] << '\n';
  }
  for (std::size_t mi = 0; mi < s.modality_count(); ++mi) {
    auto out = open(s.modality_names[mi] + ".csv");
    const Tensor& x = ds.features.features[mi];
    for (std::size_t i = 0; i < g.node_count(); ++i) {
      if (ds.features.presence[i][mi]) {
        for (std::size_t c = 0; c < x.cols(); ++c) out << (c ? "," : "") << format_double(x(i, c));
      }
      out << '\n';
    }
  }
  {
    auto out = open("labels.tsv");
    for (const auto& [id, c] : ds.split.labels) out << id << '\t' << s.categories[c] << '\n';
  }
  {
    auto out = open("split.tsv");
    for (std::size_t id : ds.split.train) out << id << "\ttrain\n";
    for (std::size_t id : ds.split.val) out << id << "\tval\n";
    for (std::size_t id : ds.split.test) out << id << "\ttest\n";
  }
  return dir / "manifest.json";
}

}  // namespace hgnn
