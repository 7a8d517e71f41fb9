#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "samwalker/metrics.hpp"
#include "samwalker/oracle.hpp"

using namespace samwalker;

namespace {

/// One user; item i scores 10 - i, so the ranking is by ascending id.
PreferenceFactors descending_scores(std::size_t m) {
  PreferenceFactors f;
  f.P = RowMatrix::Constant(1, 1, 1.0);
  f.Q.resize(static_cast<Eigen::Index>(m), 1);
  for (std::size_t i = 0; i < m; ++i) f.Q(static_cast<Eigen::Index>(i), 0) = 10.0 - static_cast<double>(i);
  return f;
}

InteractionMatrix random_matrix(std::size_t n, std::size_t m, double density, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(density);
  std::vector<std::pair<Index, Index>> pairs;
  for (Index u = 0; u < n; ++u) {
    pairs.emplace_back(u, static_cast<Index>((u * 5) % m));
    for (Index i = 0; i < m; ++i)
      if (coin(rng)) pairs.emplace_back(u, i);
  }
  return InteractionMatrix::from_pairs(n, m, pairs);
}

}  // namespace

TEST(Evaluate, HandDerivedExample) {
  auto f = descending_scores(7);
  auto train = InteractionMatrix::from_pairs(1, 7, {{0, 6}});
  auto test = InteractionMatrix::from_pairs(1, 7, {{0, 0}, {0, 4}});
  auto rep = evaluate(f, train, test, {5});
  EXPECT_NEAR(rep.recall_at(5), 1.0, 1e-9);
  EXPECT_NEAR(rep.precision_at(5), 0.4, 1e-9);
  EXPECT_NEAR(rep.ndcg, (1 + 1 / std::log2(6.0)) / (1 + 1 / std::log2(3.0)), 1e-9);
  EXPECT_NEAR(rep.ndcg, 0.8503449, 1e-6);
  EXPECT_NEAR(rep.mrr, 1.2, 1e-9);
  EXPECT_EQ(rep.users, 1u);
}

TEST(Evaluate, PerfectRankingHasUnitNdcg) {
  auto f = descending_scores(6);
  auto train = InteractionMatrix::from_pairs(1, 6, {{0, 5}});
  auto test = InteractionMatrix::from_pairs(1, 6, {{0, 0}, {0, 1}, {0, 2}});
  EXPECT_NEAR(evaluate(f, train, test, {5}).ndcg, 1.0, 1e-15);
}

TEST(Evaluate, NoHitsInTopK) {
  auto f = descending_scores(8);
  auto train = InteractionMatrix::from_pairs(1, 8, {{0, 0}});
  auto test = InteractionMatrix::from_pairs(1, 8, {{0, 7}});
  auto rep = evaluate(f, train, test, {5});
  EXPECT_EQ(rep.recall_at(5), 0.0);
  EXPECT_EQ(rep.precision_at(5), 0.0);
}

TEST(Evaluate, TrainingPositivesAreNotCandidates) {
  auto f = descending_scores(6);
  auto train = InteractionMatrix::from_pairs(1, 6, {{0, 0}, {0, 1}});
  auto test = InteractionMatrix::from_pairs(1, 6, {{0, 2}});
  auto rep = evaluate(f, train, test, {1});
  EXPECT_EQ(rep.recall_at(1), 1.0);
  EXPECT_EQ(rep.mrr, 1.0);
}

TEST(Evaluate, TiesBreakByAscendingItemId) {
  PreferenceFactors f;
  f.P = RowMatrix::Zero(1, 2);
  f.Q = RowMatrix::Zero(5, 2);
  auto train = InteractionMatrix::from_pairs(1, 5, {{0, 1}});
  auto ranked = rank_items(f, train, 0);
  EXPECT_EQ(ranked.items, (std::vector<Index>{0, 2, 3, 4}));
}

TEST(Evaluate, EmptyTestSetIsAnError) {
  auto f = descending_scores(3);
  auto train = InteractionMatrix::from_pairs(1, 3, {{0, 0}});
  EXPECT_THROW(evaluate(f, train, InteractionMatrix::from_pairs(1, 3, {}), {5}), EmptyDatasetError);
}

TEST(Evaluate, MatchesBruteForceReranking) {
  auto x = random_matrix(100, 40, 0.15, 3);
  auto split = split_train_test(x, {0.3, std::nullopt, 0, 4});
  Rng rng(5);
  auto f = PreferenceFactors::random(100, 40, 4, rng, 1.0);
  const std::vector<int> ks{1, 5, 10};
  auto rep = evaluate(f, split.train, split.test, ks);
  std::vector<double> pre(3, 0), rec(3, 0);
  double ndcg = 0, mrr = 0;
  std::size_t users = 0;
  for (std::size_t u = 0; u < 100; ++u) {
    if (split.test.row(u).empty()) continue;
    ++users;
    std::vector<std::pair<double, Index>> cand;
    for (Index i = 0; i < 40; ++i)
      if (!split.train.contains(u, i)) cand.emplace_back(-f.score(u, i), i);
    std::sort(cand.begin(), cand.end());
    std::vector<std::size_t> ranks;
    for (std::size_t p = 0; p < cand.size(); ++p)
      if (split.test.contains(u, cand[p].second)) ranks.push_back(p + 1);
    for (std::size_t k = 0; k < ks.size(); ++k) {
      double hits = 0;
      for (auto r : ranks) hits += r <= static_cast<std::size_t>(ks[k]);
      pre[k] += hits / ks[k];
      rec[k] += hits / ranks.size();
    }
    double dcg = 0, idcg = 0;
    for (std::size_t p = 0; p < ranks.size(); ++p) {
      dcg += 1 / std::log2(ranks[p] + 1.0);
      idcg += 1 / std::log2(p + 2.0);
      mrr += 1.0 / ranks[p];
    }
    ndcg += dcg / idcg;
  }
  EXPECT_EQ(rep.users, users);
  for (std::size_t k = 0; k < ks.size(); ++k) {
    EXPECT_NEAR(rep.precision[k], pre[k] / users, 1e-12);
    EXPECT_NEAR(rep.recall[k], rec[k] / users, 1e-12);
  }
  EXPECT_NEAR(rep.ndcg, ndcg / users, 1e-12);
  EXPECT_NEAR(rep.mrr, mrr / users, 1e-12);
}

TEST(ScoreRanks, NdcgBoundedAndMonotone) {
  std::mt19937_64 rng(8);
  const std::vector<int> ks{5};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::size_t> ranks;
    std::size_t r = 0;
    for (int k = 0; k < 1 + trial % 5; ++k) ranks.push_back(r += 1 + rng() % 6);
    auto base = score_ranks(ranks, ks);
    EXPECT_LE(base.ndcg, 1.0 + 1e-15);
    // move one positive up by one place where the slot is free
    for (std::size_t p = 0; p < ranks.size(); ++p) {
      if (ranks[p] == 1 || (p > 0 && ranks[p - 1] == ranks[p] - 1)) continue;
      auto moved = ranks;
      --moved[p];
      auto better = score_ranks(moved, ks);
      EXPECT_GE(better.ndcg, base.ndcg);
      EXPECT_GE(better.mrr, base.mrr);
    }
  }
}

TEST(EvalReportTest, CsvAndJsonLayout) {
  auto f = descending_scores(7);
  auto train = InteractionMatrix::from_pairs(1, 7, {{0, 6}});
  auto test = InteractionMatrix::from_pairs(1, 7, {{0, 0}, {0, 4}});
  auto rep = evaluate(f, train, test, {5, 10});
  EXPECT_EQ(rep.to_csv(),
            "metric,K,value\npre,5,0.4\npre,10,0.2\nrec,5,1\nrec,10,1\nndcg,all,0.8503449055\nmrr,all,1.2\n");
  auto j = rep.to_json();
  EXPECT_DOUBLE_EQ(j["rec@5"].get<double>(), 1.0);
  EXPECT_THROW(rep.recall_at(3), ConfigError);
}

TEST(Estimators, SupportCheckFlagsMissingMass) {
  auto x = InteractionMatrix::from_pairs(2, 2, {{0, 0}});
  BaselineSampler itempop(BaselineKind::itempop, x);
  RowMatrix gamma = RowMatrix::Zero(2, 2);
  gamma(1, 0) = 0.3;
  EXPECT_NO_THROW(require_support(itempop, gamma));
  gamma(1, 1) = 0.3;  // item 1 has no consumers, so itempop never draws it
  EXPECT_THROW(require_support(itempop, gamma), EstimatorError);
}

TEST(Estimators, SingleEntryWalkEstimate) {
  Rng rng(2);
  auto f = PreferenceFactors::random(2, 3, 2, rng, 0.5);
  SampleBatch b;
  b.entries = {{1, 2, 1}};
  b.expected_scale = 0.25;
  auto g = walk_estimate(b, f);
  auto pair = grad_theta_pair(f, 1, 2, 1);
  EXPECT_NEAR(g[1 * 2 + 0], 0.25 * pair.grad_pu(0), 1e-15);
  EXPECT_NEAR(g[(2 + 2) * 2 + 1], 0.25 * pair.grad_qi(1), 1e-15);
}

TEST(VarianceBench, UniformLawMakesWalkAndAllunionAgree) {
  // One user who has consumed everything: the walk law is constant, so the
  // walk sampler and allunion target the same pairs with equal probability.
  std::vector<std::pair<Index, Index>> pairs;
  for (Index i = 0; i < 60; ++i) pairs.emplace_back(0, i);
  auto x = InteractionMatrix::from_pairs(1, 60, pairs);
  Rng rng(4);
  SocialGraph g(SocialEdges::from_pairs(1, {}), rng);
  auto f = PreferenceFactors::random(1, 60, 3, rng, 0.5);
  SamplerConfig cfg{400, 200, 0.9, 5, 1};
  VarianceBenchConfig bench;
  bench.samplers = {"allunion", "walk"};
  bench.repeats = 2000;
  for (std::size_t k = 3; k < theta_size(f); ++k) bench.coords.push_back(k);  // item coordinates
  auto rows = variance_bench(g, f, x, cfg, bench);
  ASSERT_EQ(rows.size(), 2u);
  const double ratio = rows[1].average_variance / rows[0].average_variance;
  // sample variances over 2000 repeats: relative standard error ~ sqrt(2/2000) ~ 3%
  EXPECT_NEAR(ratio, 1.0, 0.15);
  EXPECT_NEAR(rows[1].batch_size, rows[0].batch_size, 0.05 * rows[0].batch_size);
}

TEST(VarianceBench, RowsFollowTheRequestedOrder) {
  auto x = random_matrix(8, 10, 0.25, 2);
  Rng rng(3);
  PseudoGraph g(x, 2, rng, 1.0);
  auto f = PreferenceFactors::random(8, 10, 2, rng, 0.3);
  VarianceBenchConfig bench;
  bench.repeats = 20;
  auto rows = variance_bench(g, f, x, SamplerConfig{}, bench);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0].sampler, "allunion");
  EXPECT_EQ(rows[4].sampler, "walk");
  for (const auto& r : rows) EXPECT_GT(r.average_variance, 0.0);
  bench.repeats = 1;
  EXPECT_THROW(variance_bench(g, f, x, SamplerConfig{}, bench), ConfigError);
}
