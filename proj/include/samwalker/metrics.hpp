#pragma once

// Top-K ranking metrics and the sampler gradient-variance benchmark.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "samwalker/corpus.hpp"
#include "samwalker/error.hpp"
#include "samwalker/exposure.hpp"
#include "samwalker/factors.hpp"
#include "samwalker/graphnet.hpp"
#include "samwalker/walker.hpp"

namespace samwalker {

/// Candidate items for `u` (training positives removed) ordered by descending
/// score, ties by ascending item id.
struct RankedList {
  Index user = 0;
  std::vector<Index> items;
};

inline RankedList rank_items(const PreferenceFactors& f, const InteractionMatrix& train, std::size_t u) {
  RankedList out;
  out.user = static_cast<Index>(u);
  const Vector scores = f.Q * f.P.row(static_cast<Eigen::Index>(u)).transpose();
  auto seen = train.row(u);
  out.items.reserve(train.m() - seen.size());
  for (std::size_t i = 0, k = 0; i < train.m(); ++i) {
    if (k < seen.size() && seen[k] == i) {
      ++k;
      continue;
    }
    out.items.push_back(static_cast<Index>(i));
  }
  std::sort(out.items.begin(), out.items.end(), [&](Index a, Index b) {
    return scores(a) > scores(b) || (scores(a) == scores(b) && a < b);
  });
  return out;
}

struct UserMetrics {
  std::vector<double> precision;  // per K
  std::vector<double> recall;     // per K
  double ndcg = 0.0;
  double mrr = 0.0;
};

/// Metrics for one user from the 1-based ranks of its test positives.
/// MRR sums the reciprocal ranks of all test positives.
inline UserMetrics score_ranks(std::span<const std::size_t> ranks, std::span<const int> ks) {
  UserMetrics um;
  const double con = static_cast<double>(ranks.size());
  for (int k : ks) {
    const double hits = static_cast<double>(std::count_if(ranks.begin(), ranks.end(), [&](std::size_t r) {
      return r <= static_cast<std::size_t>(k);
    }));
    um.precision.push_back(hits / static_cast<double>(k));
    um.recall.push_back(con > 0 ? hits / con : 0.0);
  }
  double dcg = 0.0, idcg = 0.0;
  for (std::size_t p = 0; p < ranks.size(); ++p) {
    dcg += 1.0 / std::log2(static_cast<double>(ranks[p]) + 1.0);
    idcg += 1.0 / std::log2(static_cast<double>(p + 1) + 1.0);
    um.mrr += 1.0 / static_cast<double>(ranks[p]);
  }
  um.ndcg = idcg > 0 ? dcg / idcg : 0.0;
  return um;
}

struct EvalReport {
  std::vector<int> ks;
  std::vector<double> precision;
  std::vector<double> recall;
  double ndcg = 0.0;
  double mrr = 0.0;
  std::size_t users = 0;  // users with at least one test positive

  double recall_at(int k) const { return recall.at(index_of(k)); }
  double precision_at(int k) const { return precision.at(index_of(k)); }

  /// `metric,K,value`; full-list metrics use K = all.
  std::string to_csv() const {
    std::string s = "metric,K,value\n";
    auto fmt = [](double v) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.10g", v);
      return std::string(buf);
    };
    for (std::size_t k = 0; k < ks.size(); ++k) s += "pre," + std::to_string(ks[k]) + "," + fmt(precision[k]) + "\n";
    for (std::size_t k = 0; k < ks.size(); ++k) s += "rec," + std::to_string(ks[k]) + "," + fmt(recall[k]) + "\n";
    s += "ndcg,all," + fmt(ndcg) + "\n";
    s += "mrr,all," + fmt(mrr) + "\n";
    return s;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["users"] = users;
    for (std::size_t k = 0; k < ks.size(); ++k) {
      j["pre@" + std::to_string(ks[k])] = precision[k];
      j["rec@" + std::to_string(ks[k])] = recall[k];
    }
    j["ndcg"] = ndcg;
    j["mrr"] = mrr;
    return j;
  }

 private:
  std::size_t index_of(int k) const {
    auto it = std::find(ks.begin(), ks.end(), k);
    if (it == ks.end()) throw ConfigError("K=" + std::to_string(k) + " was not evaluated");
    return static_cast<std::size_t>(it - ks.begin());
  }
};

/// Macro-averages over users with at least one test positive.
inline EvalReport evaluate(const PreferenceFactors& f, const InteractionMatrix& train, const InteractionMatrix& test,
                           std::vector<int> ks = {5}) {
  if (test.nnz() == 0) throw EmptyDatasetError("test split has no positives");
  for (int k : ks)
    if (k < 1) throw ConfigError("K must be >= 1");
  EvalReport rep;
  rep.ks = ks;
  rep.precision.assign(ks.size(), 0.0);
  rep.recall.assign(ks.size(), 0.0);
  std::vector<std::size_t> position(train.m());
  for (std::size_t u = 0; u < train.n(); ++u) {
    auto con = test.row(u);
    if (con.empty()) continue;
    auto ranked = rank_items(f, train, u);
    for (std::size_t p = 0; p < ranked.items.size(); ++p) position[ranked.items[p]] = p + 1;
    std::vector<std::size_t> ranks;
    for (Index j : con)
      if (!train.contains(u, j)) ranks.push_back(position[j]);
    std::sort(ranks.begin(), ranks.end());
    auto um = score_ranks(ranks, ks);
    for (std::size_t k = 0; k < ks.size(); ++k) {
      rep.precision[k] += um.precision[k];
      rep.recall[k] += um.recall[k];
    }
    rep.ndcg += um.ndcg;
    rep.mrr += um.mrr;
    ++rep.users;
  }
  const double denom = rep.users ? static_cast<double>(rep.users) : 1.0;
  for (auto& v : rep.precision) v /= denom;
  for (auto& v : rep.recall) v /= denom;
  rep.ndcg /= denom;
  rep.mrr /= denom;
  return rep;
}

// ---- gradient estimators ----------------------------------------------------

/// Flat theta layout: P row-major then Q row-major.
inline std::size_t theta_size(const PreferenceFactors& f) {
  return (f.n() + f.m()) * static_cast<std::size_t>(f.d());
}

namespace detail {
inline void add_pair_gradient(const PreferenceFactors& f, const SampleEntry& e, double weight, std::vector<double>& out) {
  const auto d = static_cast<std::size_t>(f.d());
  auto pu = f.P.row(e.user);
  auto qi = f.Q.row(e.item);
  const double r = weight * (static_cast<double>(e.x) - sigmoid(pu.dot(qi)));
  double* gp = out.data() + static_cast<std::size_t>(e.user) * d;
  double* gq = out.data() + (f.n() + e.item) * d;
  for (std::size_t k = 0; k < d; ++k) {
    gp[k] += r * qi(static_cast<Eigen::Index>(k));
    gq[k] += r * pu(static_cast<Eigen::Index>(k));
  }
}
}  // namespace detail

/// (beta/alpha) sum over the batch of the unweighted pair gradient.
inline std::vector<double> walk_estimate(const SampleBatch& batch, const PreferenceFactors& f) {
  std::vector<double> g(theta_size(f), 0.0);
  for (const auto& e : batch.entries) detail::add_pair_gradient(f, e, batch.expected_scale, g);
  return g;
}

/// (1/B) sum over the batch of (gamma/p) times the pair gradient.
inline std::vector<double> importance_estimate(const SampleBatch& batch, const BaselineSampler& sampler,
                                               const RowMatrix& gamma, const PreferenceFactors& f) {
  std::vector<double> g(theta_size(f), 0.0);
  for (const auto& e : batch.entries) {
    const double w = gamma(e.user, e.item) / sampler.probability(e.user, e.item);
    detail::add_pair_gradient(f, e, w * batch.expected_scale, g);
  }
  return g;
}

/// Throws if `sampler` gives zero probability to a pair with positive weight.
inline void require_support(const BaselineSampler& sampler, const RowMatrix& gamma) {
  for (Eigen::Index u = 0; u < gamma.rows(); ++u)
    for (Eigen::Index i = 0; i < gamma.cols(); ++i)
      if (gamma(u, i) > 0.0 && !(sampler.probability(static_cast<std::size_t>(u), static_cast<std::size_t>(i)) > 0.0))
        throw EstimatorError(std::string(to_string(sampler.kind())) + " has p=0 at (" + std::to_string(u) + "," +
                             std::to_string(i) + ") where the confidence is positive");
}

struct VarianceRow {
  std::string sampler;
  double average_variance = 0.0;
  double batch_size = 0.0;  // mean entries per batch
};

struct VarianceBenchConfig {
  std::vector<std::string> samplers{"allunion", "balunion", "itempop", "cobias", "walk"};
  int repeats = 1000;
  std::vector<std::size_t> coords;  // empty: every theta coordinate
  std::uint64_t seed = 0;
};

/// Per-sampler variance of the unbiased estimator of
///   sum_{u,i} walk_law(u,i) * grad l_ui,
/// averaged over the coordinate sample. Baselines draw as many pairs per batch
/// as the walk sampler emits on average.
template <PropagationGraph G>
std::vector<VarianceRow> variance_bench(const G& graph, const PreferenceFactors& f, const InteractionMatrix& x,
                                        const SamplerConfig& cfg, const VarianceBenchConfig& bench) {
  if (bench.repeats < 2) throw ConfigError("variance bench needs repeats >= 2");
  if (static_cast<double>(x.n()) * static_cast<double>(x.m()) > 1e7) throw GuardError("variance bench refuses n*m > 1e7");
  const RowMatrix gamma = walk_law(graph, x, cfg.t_m, cfg.c);
  const double expected_batch = static_cast<double>(cfg.alpha) / static_cast<double>(cfg.beta) * gamma.sum();
  const auto batch_size = static_cast<std::size_t>(std::max(1.0, std::round(expected_batch)));
  std::vector<std::size_t> coords = bench.coords;
  if (coords.empty()) {
    coords.resize(theta_size(f));
    std::iota(coords.begin(), coords.end(), 0);
  }
  std::vector<VarianceRow> rows;
  for (const auto& name : bench.samplers) {
    std::vector<double> mean(coords.size(), 0.0), m2(coords.size(), 0.0);
    double entries = 0.0;
    std::optional<BaselineSampler> baseline;
    if (name != "walk") {
      baseline.emplace(parse_baseline(name), x);
      require_support(*baseline, gamma);
    }
    Rng rng = stream_rng(bench.seed, 0xba5e, std::hash<std::string>{}(name));
    for (int r = 0; r < bench.repeats; ++r) {
      std::vector<double> est;
      if (baseline) {
        auto batch = baseline->sample(batch_size, rng);
        entries += static_cast<double>(batch.entries.size());
        est = importance_estimate(batch, *baseline, gamma, f);
      } else {
        SamplerConfig c = cfg;
        c.seed = mix64(bench.seed ^ 0x3a1c);
        auto batch = sample_batch(graph, x, c, static_cast<std::uint64_t>(r));
        entries += static_cast<double>(batch.entries.size());
        est = walk_estimate(batch, f);
      }
      for (std::size_t k = 0; k < coords.size(); ++k) {
        const double v = est[coords[k]];
        const double delta = v - mean[k];
        mean[k] += delta / (r + 1);
        m2[k] += delta * (v - mean[k]);
      }
    }
    double avg = 0.0;
    for (double s : m2) avg += s / (bench.repeats - 1);
    rows.push_back({name, avg / static_cast<double>(coords.size()), entries / bench.repeats});
  }
  return rows;
}

}  // namespace samwalker
