#include <gtest/gtest.h>

#include <fstream>

#include "fixtures.hpp"
#include "hgnn/dataset_io.hpp"

using namespace hgnn;
using hgnn::testing::TempDir;

namespace {

void write(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

// Three nodes (two items, one review), two modalities; reviews lack vision.
std::filesystem::path write_small_manifest(const std::filesystem::path& dir) {
  write(dir / "manifest.json", R"({
    "node_types": ["item", {"name": "review", "modalities": ["text"]}],
    "edge_types": ["item-review", "review-item"],
    "modalities": [{"name": "text", "dim": 4}, {"name": "vision", "dim": 2}],
    "target_type": "item",
    "categories": ["good", "bad"],
    "files": {"nodes": "nodes.tsv", "edges": "edges.tsv",
              "features": {"text": "text.csv", "vision": "vision.csv"},
              "labels": "labels.tsv", "split": "split.tsv"}
  })");
  write(dir / "nodes.tsv", "0\titem\n1\titem\n2\treview\n");
  write(dir / "edges.tsv", "0\t2\titem-review\n2\t0\treview-item\n2\t1\treview-item\n");
  write(dir / "text.csv", "1,2,3,4\n0.5,0.25,0,1\n-1,-2,-3,-4\n");
  write(dir / "vision.csv", "9,8\n7,6\n\n");
  write(dir / "labels.tsv", "0\tgood\n1\tbad\n");
  write(dir / "split.tsv", "0\ttrain\n1\ttest\n");
  return dir / "manifest.json";
}

std::string error_of(const std::filesystem::path& manifest) {
  try {
    load_dataset(manifest);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(LoadDataset, SmallManifest) {
  TempDir tmp("load");
  Dataset ds = load_dataset(write_small_manifest(tmp.path));
  EXPECT_EQ(ds.graph.node_count(), 3u);
  EXPECT_EQ(ds.schema.modality_count(), 2u);
  EXPECT_EQ(ds.schema.native[1], (std::vector<bool>{true, false}));
  EXPECT_EQ(ds.features.features[0](2, 3), -4.0);
  EXPECT_EQ(ds.features.presence[2], (std::vector<bool>{true, false}));
  EXPECT_EQ(ds.graph.in_neighbors(0).size(), 1u);
  EXPECT_EQ(ds.split.train, (std::vector<std::size_t>{0}));
  EXPECT_EQ(ds.split.labels.at(1), 1u);
}

TEST(LoadDataset, InvalidEndpointNamesFileAndRow) {
  TempDir tmp("endpoint");
  auto m = write_small_manifest(tmp.path);
  write(tmp.path / "edges.tsv", "0\t2\titem-review\n2\t99\treview-item\n");
  const std::string msg = error_of(m);
  EXPECT_NE(msg.find("invalid endpoint"), std::string::npos) << msg;
  EXPECT_NE(msg.find("edges.tsv:2"), std::string::npos) << msg;
}

TEST(LoadDataset, DimensionMismatch) {
  TempDir tmp("dim");
  auto m = write_small_manifest(tmp.path);
  write(tmp.path / "text.csv", "1,2,3,4\n1,2,3,4,5\n1,2,3,4\n");
  const std::string msg = error_of(m);
  EXPECT_NE(msg.find("dimension mismatch"), std::string::npos) << msg;
  EXPECT_NE(msg.find("text.csv:2"), std::string::npos) << msg;
}

TEST(LoadDataset, OtherErrors) {
  {
    TempDir tmp("missing");
    EXPECT_NE(error_of(tmp.path / "nope.json").find("missing"), std::string::npos);
  }
  {
    TempDir tmp("type");
    auto m = write_small_manifest(tmp.path);
    write(tmp.path / "nodes.tsv", "0\titem\n1\tuser\n2\treview\n");
    EXPECT_NE(error_of(m).find("nodes.tsv:2: unknown node type"), std::string::npos);
  }
  {
    TempDir tmp("label");
    auto m = write_small_manifest(tmp.path);
    write(tmp.path / "labels.tsv", "0\tgood\n1\tugly\n");
    EXPECT_NE(error_of(m).find("labels.tsv:2: label outside categories"), std::string::npos);
  }
  {
    TempDir tmp("overlap");
    auto m = write_small_manifest(tmp.path);
    write(tmp.path / "split.tsv", "0\ttrain\n1\ttest\n0\tval\n");
    EXPECT_NE(error_of(m).find("split.tsv:3: overlapping splits"), std::string::npos);
  }
  {
    TempDir tmp("blank");
    auto m = write_small_manifest(tmp.path);
    write(tmp.path / "vision.csv", "9,8\n\n\n");
    EXPECT_NE(error_of(m).find("vision.csv:2"), std::string::npos);
  }
}

TEST(SaveDataset, RoundTripIsExact) {
  TempDir tmp("roundtrip");
  Dataset ds = hgnn::testing::small_fixture();
  // Split parts need distinct labeled nodes.
  ds.split.train = {0, 1};
  ds.split.val = {2};
  ds.split.test = {3, 4};
  auto manifest = save_dataset(ds, tmp.path / "d");
  Dataset back = load_dataset(manifest);
  EXPECT_EQ(back.graph, ds.graph);
  EXPECT_EQ(back.schema, ds.schema);
  EXPECT_EQ(back.features, ds.features);
  EXPECT_EQ(back.split, ds.split);
  // Writing the loaded copy again gives byte-identical files.
  auto again = save_dataset(back, tmp.path / "e");
  for (const char* f : {"manifest.json", "edges.tsv", "text.csv", "vision.csv", "split.tsv"}) {
    std::ifstream a(manifest.parent_path() / f), b(again.parent_path() / f);
    std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
    EXPECT_EQ(sa, sb) << f;
  }
}

TEST(Graph, InvariantsAndErrors) {
  EXPECT_THROW(MmhnGraph({"a"}, {"x"}, {0, 0}, {{0, 1, 0}}), Error);  // not heterogeneous
  EXPECT_THROW(MmhnGraph({"a", "b"}, {"x"}, {0, 1}, {{0, 5, 0}}), Error);
  EXPECT_THROW(MmhnGraph({"a", "b"}, {"x"}, {0, 2}, {}), Error);
  MmhnGraph g({"a", "b"}, {"x", "y"}, {0, 1, 0}, {{2, 1, 1}, {0, 1, 0}, {2, 1, 0}, {1, 0, 1}});
  const auto& in1 = g.in_neighbors(1);
  ASSERT_EQ(in1.size(), 3u);
  EXPECT_EQ(in1[0], (InEdge{0, 0}));
  EXPECT_EQ(in1[1], (InEdge{2, 0}));
  EXPECT_EQ(in1[2], (InEdge{2, 1}));
  EXPECT_TRUE(g.in_neighbors(2).empty());
}

TEST(Graph, EdgePermutationGivesSameCanonicalOrder) {
  std::vector<Edge> edges = {{2, 1, 1}, {0, 1, 0}, {2, 1, 0}, {1, 0, 1}, {0, 2, 0}};
  MmhnGraph a({"a", "b"}, {"x", "y"}, {0, 1, 0}, edges);
  std::reverse(edges.begin(), edges.end());
  MmhnGraph b({"a", "b"}, {"x", "y"}, {0, 1, 0}, edges);
  EXPECT_EQ(a.canonical_edges(), b.canonical_edges());
  EXPECT_EQ(a, b);
}

TEST(Schema, PresenceFollowsTypes) {
  Dataset ds = hgnn::testing::small_fixture();
  EXPECT_EQ(ds.features.presence, FeatureStore::presence_for(ds.graph, ds.schema));
  ModalitySchema bad = ds.schema;
  bad.categories = {"only"};
  EXPECT_THROW(bad.validate(ds.graph), Error);
  bad = ds.schema;
  bad.native[2] = {false, false};
  EXPECT_THROW(bad.validate(ds.graph), Error);
}

TEST(Completion, CopiesReferenceWhenDimsMatch) {
  ModalitySchema s;
  s.modality_names = {"text", "vision"};
  s.input_dim = {3, 3};
  FeatureStore f;
  f.features = {Tensor::from_rows({{1, 2, 3}, {4, 5, 6}}), Tensor::from_rows({{7, 8, 9}, {0, 0, 0}})};
  f.presence = {{true, true}, {true, false}};
  FeatureStore out = complete_missing_features(f, s, 0);
  EXPECT_EQ(out.features[1], Tensor::from_rows({{7, 8, 9}, {4, 5, 6}}));
  EXPECT_EQ(out.features[0], f.features[0]);
  EXPECT_EQ(out.presence, f.presence);
}

TEST(Completion, PadAndTruncate) {
  ModalitySchema s;
  s.modality_names = {"text", "vision", "audio"};
  s.input_dim = {4, 6, 2};
  FeatureStore f;
  f.features = {Tensor::from_rows({{1, 2, 3, 4}}), Tensor::zeros(1, 6), Tensor::zeros(1, 2)};
  f.presence = {{true, false, false}};
  FeatureStore out = complete_missing_features(f, s, 0);
  EXPECT_EQ(out.features[1], Tensor::from_rows({{1, 2, 3, 4, 0, 0}}));
  EXPECT_EQ(out.features[2], Tensor::from_rows({{1, 2}}));
}

TEST(Completion, IdempotentAndUnchangedForFullNodes) {
  Dataset ds = hgnn::testing::small_fixture();
  FeatureStore once = complete_missing_features(ds.features, ds.schema, 0);
  EXPECT_EQ(complete_missing_features(once, ds.schema, 0), once);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(once.features[1](i, c), ds.features.features[1](i, c));
  for (std::size_t i = 9; i < 12; ++i)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(once.features[1](i, c), ds.features.features[0](i, c));
}

TEST(Completion, MissingReferenceIsAnErrorUnlessZeroFill) {
  Dataset ds = hgnn::testing::small_fixture();
  // Reference is vision; node 9 has neither modality, so its text slot has
  // nothing to copy from.
  ModalitySchema s = ds.schema;
  FeatureStore f = ds.features;
  for (std::size_t i = 9; i < 12; ++i) f.presence[i] = {false, true};
  f.presence[9] = {false, false};
  try {
    complete_missing_features(f, s, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Config);
  }
  CompletionOptions zero;
  zero.zero_fill_without_reference = true;
  FeatureStore out = complete_missing_features(f, s, 1, zero);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(out.features[0](9, c), 0.0);
}
