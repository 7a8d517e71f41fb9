#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "samwalker/corpus.hpp"

namespace fs = std::filesystem;
using namespace samwalker;

namespace {

fs::path temp_file(const std::string& name, const std::string& body) {
  auto dir = fs::temp_directory_path() / "samwalker_corpus_test";
  fs::create_directories(dir);
  auto p = dir / name;
  std::ofstream(p) << body;
  return p;
}

InteractionMatrix random_matrix(std::size_t n, std::size_t m, double density, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(density);
  std::vector<std::pair<Index, Index>> pairs;
  for (Index u = 0; u < n; ++u)
    for (Index i = 0; i < m; ++i)
      if (coin(rng)) pairs.emplace_back(u, i);
  return InteractionMatrix::from_pairs(n, m, pairs);
}

}  // namespace

TEST(LoadInteractions, CommaSeparatedPairsAreRemapped) {
  auto p = temp_file("three.csv", "u1,i1\nu1,i2\nu2,i1\n");
  auto log = load_interactions(p.string());
  EXPECT_EQ(log.rows.size(), 3u);
  EXPECT_EQ(log.users.size(), 2u);
  EXPECT_EQ(log.items.size(), 2u);
  EXPECT_EQ(log.rows[2].user, 1u);
  EXPECT_EQ(log.rows[2].item, 0u);
}

TEST(LoadInteractions, TabsCommentsAndWeights) {
  auto p = temp_file("weights.tsv", "# header\nalice\tbook\t4.5\n\nbob\tbook\n");
  auto log = load_interactions(p.string(), FileFormat::tsv);
  ASSERT_EQ(log.rows.size(), 2u);
  ASSERT_TRUE(log.rows[0].raw_weight.has_value());
  EXPECT_DOUBLE_EQ(*log.rows[0].raw_weight, 4.5);
  EXPECT_FALSE(log.rows[1].raw_weight.has_value());
}

TEST(LoadInteractions, SingleFieldNamesTheLine) {
  auto p = temp_file("bad.csv", "u1\n");
  try {
    load_interactions(p.string());
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
    EXPECT_NE(std::string(e.what()).find(":1:"), std::string::npos);
    EXPECT_EQ(e.exit_code(), 2);
  }
}

TEST(LoadInteractions, EmptyFileIsEmptyDataset) {
  auto p = temp_file("empty.csv", "# nothing here\n");
  EXPECT_THROW(load_interactions(p.string()), EmptyDatasetError);
}

TEST(InteractionMatrixTest, RowAndColumnViewsAgree) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto x = random_matrix(13, 17, 0.2, seed);
    std::vector<std::pair<Index, Index>> by_col;
    for (std::size_t i = 0; i < x.m(); ++i)
      for (Index u : x.col(i)) by_col.emplace_back(u, static_cast<Index>(i));
    std::sort(by_col.begin(), by_col.end());
    EXPECT_EQ(by_col, x.pairs());
    for (auto [u, i] : by_col) EXPECT_TRUE(x.contains(u, i));
  }
}

TEST(BinarizeAndFilter, DefaultsMatchPreprocessingBounds) {
  InteractionLog log;
  for (int u = 0; u < 3; ++u) {
    log.users.intern("u" + std::to_string(u));
  }
  log.items.intern("kept");
  log.items.intern("rare");
  for (Index u = 0; u < 3; ++u) log.rows.push_back({u, 0, std::nullopt});
  log.rows.push_back({0, 1, std::nullopt});
  log.rows.push_back({1, 1, std::nullopt});
  auto c = binarize_and_filter(log);
  EXPECT_EQ(c.matrix.m(), 1u);  // three consumers are enough, two are not
  EXPECT_EQ(c.matrix.n(), 3u);
  EXPECT_EQ(c.items.raw(0), "kept");
}

TEST(BinarizeAndFilter, DuplicatePairsCollapse) {
  auto x = InteractionMatrix::from_pairs(2, 1, {{0, 0}, {0, 0}, {1, 0}});
  EXPECT_EQ(x.nnz(), 2u);
  auto f = binarize_and_filter(x, 1, 100);
  EXPECT_EQ(f.matrix.nnz(), 2u);
}

TEST(BinarizeAndFilter, UpperBoundAndUserRemoval) {
  // item 0 has 4 consumers (> max 3), item 1 has 3; user 3 only had item 0.
  auto x = InteractionMatrix::from_pairs(4, 2, {{0, 0}, {1, 0}, {2, 0}, {3, 0}, {0, 1}, {1, 1}, {2, 1}});
  auto f = binarize_and_filter(x, 1, 3);
  EXPECT_EQ(f.matrix.m(), 1u);
  EXPECT_EQ(f.matrix.n(), 3u);
  EXPECT_EQ(f.item_origin, (std::vector<Index>{1}));
  EXPECT_EQ(f.user_origin, (std::vector<Index>{0, 1, 2}));
}

TEST(BinarizeAndFilter, IsAFixpoint) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto x = random_matrix(40, 30, 0.15, seed);
    auto once = binarize_and_filter(x, 3, 8).matrix;
    auto twice = binarize_and_filter(once, 3, 8).matrix;
    EXPECT_TRUE(once == twice);
  }
}

TEST(BinarizeAndFilter, EverythingRemovedIsEmptyDataset) {
  auto x = InteractionMatrix::from_pairs(2, 1, {{0, 0}});
  EXPECT_THROW(binarize_and_filter(x, 3, 100), EmptyDatasetError);
}

TEST(SplitTrainTest, ZeroFractionKeepsEverything) {
  auto x = random_matrix(10, 10, 0.3, 3);
  auto s = split_train_test(x, {0.0, std::nullopt, 0, 1});
  EXPECT_EQ(s.test.nnz(), 0u);
  EXPECT_TRUE(s.train == x);
}

TEST(SplitTrainTest, FloorRuleOnTenPositives) {
  std::vector<std::pair<Index, Index>> pairs;
  for (Index i = 0; i < 10; ++i) pairs.emplace_back(0, i);
  auto x = InteractionMatrix::from_pairs(1, 10, pairs);
  auto s = split_train_test(x, {0.2, std::nullopt, 0, 42});
  EXPECT_EQ(s.test.row(0).size(), 2u);
  EXPECT_EQ(s.train.row(0).size(), 8u);
}

TEST(SplitTrainTest, AtLeastOneTrainPositive) {
  auto x = InteractionMatrix::from_pairs(1, 2, {{0, 0}, {0, 1}});
  auto s = split_train_test(x, {0.99, std::nullopt, 0, 1});
  EXPECT_EQ(s.train.row(0).size(), 1u);
}

TEST(SplitTrainTest, SameSeedSameSplit) {
  auto x = random_matrix(30, 40, 0.2, 9);
  auto a = split_train_test(x, {0.3, std::nullopt, 0, 5});
  auto b = split_train_test(x, {0.3, std::nullopt, 0, 5});
  EXPECT_TRUE(a.train == b.train);
  EXPECT_TRUE(a.test == b.test);
  auto c = split_train_test(x, {0.3, std::nullopt, 0, 6});
  EXPECT_FALSE(a.test == c.test);
}

TEST(SplitTrainTest, FoldsPartitionThePositives) {
  auto x = random_matrix(20, 30, 0.3, 11);
  std::size_t held = 0;
  for (int k = 0; k < 5; ++k) {
    auto s = split_train_test(x, {0.0, 5, k, 3});
    EXPECT_EQ(s.train.nnz() + s.test.nnz(), x.nnz());
    held += s.test.nnz();
  }
  EXPECT_LE(held, x.nnz());
  EXPECT_GT(held, x.nnz() / 2);
}

TEST(SocialEdgesTest, SelfLoopsDroppedAndSymmetrize) {
  auto s = SocialEdges::from_pairs(3, {{0, 1}, {1, 1}, {2, 0}});
  EXPECT_EQ(s.edge_count(), 2u);
  auto sym = SocialEdges::from_pairs(3, {{0, 1}, {1, 1}, {2, 0}}, true);
  EXPECT_EQ(sym.edge_count(), 4u);
  EXPECT_EQ(sym.neighbors[0], (std::vector<Index>{1, 2}));
}

TEST(SocialEdgesTest, UnknownUsersAreSkipped) {
  auto users = IdMap::from_raw({"a", "b"});
  auto p = temp_file("social.tsv", "a\tb\nb\tzed\n");
  auto s = load_social(p.string(), users);
  EXPECT_EQ(s.edge_count(), 1u);
}

TEST(DenseFiles, RoundTrip) {
  auto x = random_matrix(12, 9, 0.3, 2);
  auto dir = fs::temp_directory_path() / "samwalker_corpus_test";
  write_pairs((dir / "x.tsv").string(), x);
  EXPECT_TRUE(read_pairs((dir / "x.tsv").string(), x.n(), x.m()) == x);

  auto social = SocialEdges::from_pairs(4, {{0, 1}, {3, 2}});
  write_social((dir / "s.tsv").string(), social);
  EXPECT_EQ(read_social((dir / "s.tsv").string(), 4).neighbors, social.neighbors);

  auto ids = IdMap::from_raw({"x9", "a1", "q"});
  write_id_map((dir / "ids.tsv").string(), ids);
  EXPECT_EQ(read_id_map((dir / "ids.tsv").string()).raw_ids(), ids.raw_ids());
}
