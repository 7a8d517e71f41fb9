#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "samwalker/graphnet.hpp"

using namespace samwalker;

namespace {

InteractionMatrix random_matrix(std::size_t n, std::size_t m, double density, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(density);
  std::vector<std::pair<Index, Index>> pairs;
  for (Index u = 0; u < n; ++u) {
    pairs.emplace_back(u, static_cast<Index>(u % m));  // every user has a positive
    for (Index i = 0; i < m; ++i)
      if (coin(rng)) pairs.emplace_back(u, i);
  }
  return InteractionMatrix::from_pairs(n, m, pairs);
}

SocialEdges random_social(std::size_t n, double density, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(density);
  std::vector<std::pair<Index, Index>> edges;
  for (Index u = 0; u < n; ++u)
    for (Index v = 0; v < n; ++v)
      if (coin(rng)) edges.emplace_back(u, v);
  return SocialEdges::from_pairs(n, edges);
}

double row_sum(const TransitionRow& row) {
  double s = 0.0;
  for (auto [v, w] : row) s += w;
  return s;
}

void set_logits(PseudoGraph& g, double value) {
  std::fill(g.params().logits.begin(), g.params().logits.end(), value);
  g.refresh();
}

}  // namespace

TEST(Softmax, UniformLogits) {
  std::vector<double> out(3);
  softmax(std::vector<double>{0, 0, 0}, out);
  for (double w : out) EXPECT_NEAR(w, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LogTwoOffsetGivesOneToTwo) {
  std::vector<double> out(2);
  softmax(std::vector<double>{0.7, 0.7 + std::log(2.0)}, out);
  EXPECT_NEAR(out[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(out[1], 2.0 / 3.0, 1e-15);
}

TEST(Softmax, ShiftInvariance) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z(0.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> l(1 + trial % 9), shifted, a(l.size()), b(l.size());
    for (auto& v : l) v = z(rng);
    const double c = z(rng) * 10;
    for (double v : l) shifted.push_back(v + c);
    softmax(l, a);
    softmax(shifted, b);
    for (std::size_t k = 0; k < l.size(); ++k) EXPECT_LT(std::abs(a[k] - b[k]), 1e-12);
  }
}

TEST(Softmax, HugeLogitsStayFinite) {
  std::vector<double> out(2);
  softmax(std::vector<double>{1000.0, 999.0}, out);
  EXPECT_NEAR(out[0] + out[1], 1.0, 1e-15);
  EXPECT_GT(out[0], out[1]);
}

TEST(SocialGraphTest, SingleFriendGetsAllMass) {
  Rng rng(1);
  SocialGraph g(SocialEdges::from_pairs(3, {{0, 2}, {1, 0}, {1, 2}}), rng, 5.0);
  auto row = g.transition_row(0);
  ASSERT_EQ(row.size(), 1u);
  EXPECT_EQ(row[0].first, 2u);
  EXPECT_DOUBLE_EQ(row[0].second, 1.0);
}

TEST(SocialGraphTest, IsolatedUserGetsSelfLoop) {
  Rng rng(1);
  SocialGraph g(SocialEdges::from_pairs(2, {{0, 1}}), rng);
  auto row = g.transition_row(1);
  ASSERT_EQ(row.size(), 1u);
  EXPECT_EQ(row[0].first, 1u);
  EXPECT_DOUBLE_EQ(row[0].second, 1.0);
}

TEST(SocialGraphTest, RowsAreStochastic) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    SocialGraph g(random_social(25, 0.15, seed), rng, 1.0);
    for (std::size_t u = 0; u < g.n(); ++u) EXPECT_LT(std::abs(row_sum(g.transition_row(u)) - 1.0), 1e-8);
  }
}

TEST(PseudoGraphTest, EdgeCountFormula) {
  auto x = random_matrix(12, 9, 0.2, 3);
  Rng rng(2);
  PseudoGraph g(x, 4, rng);
  EXPECT_EQ(g.edge_count(), 2 * x.nnz() + 12 * 4 + 4 * 12);
  EXPECT_EQ(g.params().size(), 2 * x.nnz() + 2 * 12 * 4 + 12);
}

TEST(PseudoGraphTest, SingleCommunityHasUnitWeight) {
  auto x = random_matrix(6, 5, 0.3, 1);
  Rng rng(2);
  PseudoGraph g(x, 1, rng, 1.0);
  for (std::size_t u = 0; u < 6; ++u) EXPECT_DOUBLE_EQ(g.user_community_weights(u)[0], 1.0);
}

TEST(PseudoGraphTest, ItemSoftmaxSpansTheUsersPositives) {
  auto x = InteractionMatrix::from_pairs(2, 5, {{0, 0}, {0, 2}, {0, 4}, {1, 1}});
  Rng rng(2);
  PseudoGraph g(x, 2, rng, 1.0);
  auto w = g.user_item_weights(0);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_NEAR(w[0] + w[1] + w[2], 1.0, 1e-15);
}

TEST(PseudoGraphTest, SharedItemHandExample) {
  auto x = InteractionMatrix::from_pairs(2, 1, {{0, 0}, {1, 0}});
  Rng rng(2);
  PseudoGraph g(x, 3, rng);
  set_logits(g, 0.0);
  g.set_bridges(BridgeMode::items_only);
  auto row = g.transition_row(0);
  ASSERT_EQ(row.size(), 2u);
  EXPECT_DOUBLE_EQ(row[0].second, 0.5);
  EXPECT_DOUBLE_EQ(row[1].second, 0.5);
}

TEST(PseudoGraphTest, ZeroMixLogitIsOneHalf) {
  auto x = random_matrix(5, 4, 0.3, 7);
  Rng rng(2);
  PseudoGraph g(x, 2, rng);
  set_logits(g, 0.0);
  for (std::size_t u = 0; u < 5; ++u) EXPECT_DOUBLE_EQ(g.mixing(u), 0.5);
}

TEST(PseudoGraphTest, BridgeAblationsPinTheMixing) {
  auto x = random_matrix(5, 4, 0.3, 7);
  Rng rng(2);
  PseudoGraph g(x, 2, rng, 1.0);
  g.set_bridges(BridgeMode::items_only);
  for (std::size_t u = 0; u < 5; ++u) EXPECT_EQ(g.mixing(u), 1.0);
  g.set_bridges(BridgeMode::communities_only);
  for (std::size_t u = 0; u < 5; ++u) EXPECT_EQ(g.mixing(u), 0.0);
  g.set_bridges(BridgeMode::both);
  for (std::size_t u = 0; u < 5; ++u) EXPECT_GT(g.mixing(u), 0.0);
}

TEST(PseudoGraphTest, UserWithoutPositivesUsesCommunities) {
  auto x = InteractionMatrix::from_pairs(3, 2, {{0, 0}, {1, 1}});
  Rng rng(2);
  PseudoGraph g(x, 2, rng, 1.0);
  EXPECT_EQ(g.mixing(2), 0.0);
  EXPECT_LT(std::abs(row_sum(g.transition_row(2)) - 1.0), 1e-12);
}

TEST(PseudoGraphTest, RowsAreStochastic) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto x = random_matrix(20, 15, 0.15, seed);
    Rng rng(seed);
    PseudoGraph g(x, 1 + seed % 4, rng, 1.5);
    for (std::size_t u = 0; u < g.n(); ++u) EXPECT_LT(std::abs(row_sum(g.transition_row(u)) - 1.0), 1e-8);
  }
}

TEST(PseudoGraphTest, MultiplyMatchesTransitionRows) {
  auto x = random_matrix(15, 10, 0.2, 5);
  Rng rng(5);
  PseudoGraph g(x, 3, rng, 1.0);
  std::vector<double> in(15), out(15);
  for (std::size_t u = 0; u < 15; ++u) in[u] = uniform01(rng);
  PseudoGraph::Messages msg;
  g.multiply(in, out, msg);
  for (std::size_t u = 0; u < 15; ++u) {
    double expect = 0.0;
    for (auto [v, w] : g.transition_row(u)) expect += w * in[v];
    EXPECT_NEAR(out[u], expect, 1e-12);
  }
}

TEST(WalkStep, EmpiricalStepMatchesTheRow) {
  auto x = random_matrix(8, 6, 0.25, 9);
  Rng rng(9);
  PseudoGraph g(x, 2, rng, 1.0);
  GroupedAlias alias(g.params().weights, g.params().groups);
  const int draws = 200000;
  for (std::size_t v : {0u, 3u}) {
    std::vector<double> freq(8, 0.0);
    for (int k = 0; k < draws; ++k) freq[g.next_user(v, alias, rng)] += 1.0 / draws;
    std::vector<double> expect(8, 0.0);
    for (auto [u, w] : g.transition_row(v)) expect[u] = w;
    for (std::size_t u = 0; u < 8; ++u) EXPECT_NEAR(freq[u], expect[u], 5 * std::sqrt(expect[u] / draws) + 1e-9);
  }
}

TEST(GraphCheckpoint, RoundTripRestoresLogits) {
  auto x = random_matrix(10, 8, 0.2, 2);
  Rng rng(3);
  GraphModel a{PseudoGraph(x, 3, rng, 1.0)};
  Rng other(4);
  GraphModel b{PseudoGraph(x, 3, other, 1.0)};
  std::stringstream buf;
  write_graph(buf, a, x.m());
  read_graph_into(buf, b);
  EXPECT_EQ(std::get<PseudoGraph>(a).params().logits, std::get<PseudoGraph>(b).params().logits);
  EXPECT_EQ(std::get<PseudoGraph>(a).params().weights, std::get<PseudoGraph>(b).params().weights);
}

TEST(GraphCheckpoint, StructureMismatchIsRejected) {
  Rng rng(3);
  GraphModel a{SocialGraph(random_social(6, 0.3, 1), rng)};
  GraphModel b{SocialGraph(random_social(6, 0.3, 2), rng)};
  std::stringstream buf;
  write_graph(buf, a, 0);
  EXPECT_THROW(read_graph_into(buf, b), Error);
}
