#pragma once

// Training-batch samplers.
//
// The walk sampler starts alpha walks at each user u. At user v a walk stops
// with probability 1 - c and emits (u, i, X[u,i]) for each positive item i
// of v independently with probability 1/beta; otherwise it moves one step
// along W (or W+). A walk that has already made t_m moves jumps to a uniform
// random user instead and stops there. The expected multiplicity of (u, i)
// per walk is therefore walk_law(u, i) / beta, which is proportional to the
// exposure, so a plain batch sum scaled by beta/alpha is an unbiased
// estimate of the confidence-weighted full gradient.
//
// Baselines draw i.i.d. pairs from closed-form distributions and expose the
// exact probability of every pair for importance weighting.

#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "samwalker/alias.hpp"
#include "samwalker/corpus.hpp"
#include "samwalker/error.hpp"
#include "samwalker/graphnet.hpp"
#include "samwalker/rng.hpp"

namespace samwalker {

struct SamplerConfig {
  int alpha = 100;
  int beta = 20;
  double c = 0.9;
  int t_m = 5;
  std::uint64_t seed = 0;

  void validate() const {
    if (alpha < 1) throw ConfigError("alpha must be >= 1");
    if (beta < 1) throw ConfigError("beta must be >= 1");
    if (!(c >= 0.0 && c < 1.0)) throw ConfigError("c must be in [0,1)");
    if (t_m < 0) throw ConfigError("t_m must be >= 0");
  }
};

struct SampleEntry {
  Index user = 0;
  Index item = 0;
  int x = 0;
  friend bool operator==(const SampleEntry&, const SampleEntry&) = default;
};

struct SampleBatch {
  std::vector<SampleEntry> entries;
  std::string sampler_tag;
  /// Factor turning a batch sum of per-entry terms into an unbiased estimate
  /// of the target sum (beta/alpha for walks, 1/size for i.i.d. baselines
  /// once importance weights are applied).
  double expected_scale = 1.0;
  std::uint64_t transition_steps = 0;
};

/// Alias tables for one frozen snapshot of graph weights.
class WalkKernel {
 public:
  template <PropagationGraph G>
  explicit WalkKernel(const G& graph) : alias_(graph.params().weights, graph.params().groups) {}
  const GroupedAlias& alias() const noexcept { return alias_; }

 private:
  GroupedAlias alias_;
};

/// One walk from `u`; appends emitted entries and returns the number of
/// transition steps taken.
template <PropagationGraph G, class R>
std::uint64_t walk_sample_user(const G& graph, const WalkKernel& kernel, const InteractionMatrix& x, std::size_t u,
                               const SamplerConfig& cfg, R& rng, std::vector<SampleEntry>& out) {
  std::size_t v = u;
  std::uint64_t steps = 0;
  for (int depth = 0;; ++depth) {
    if (uniform01(rng) < 1.0 - cfg.c) break;
    if (depth == cfg.t_m) {
      v = static_cast<std::size_t>(uniform_index(rng, graph.n()));
      break;
    }
    v = graph.next_user(v, kernel.alias(), rng);
    ++steps;
  }
  const double keep = 1.0 / static_cast<double>(cfg.beta);
  const auto own = x.row(u);
  for (Index i : x.row(v)) {
    if (cfg.beta > 1 && uniform01(rng) >= keep) continue;
    const bool positive = std::binary_search(own.begin(), own.end(), i);
    out.push_back({static_cast<Index>(u), i, positive ? 1 : 0});
  }
  return steps;
}

/// Convenience overload building the kernel on the fly.
template <PropagationGraph G, class R>
std::vector<SampleEntry> walk_sample_user(const G& graph, const InteractionMatrix& x, std::size_t u,
                                          const SamplerConfig& cfg, R& rng) {
  WalkKernel kernel(graph);
  std::vector<SampleEntry> out;
  walk_sample_user(graph, kernel, x, u, cfg, rng, out);
  return out;
}

/// alpha walks per user. User u draws from stream (seed, epoch, u), and the
/// batch is the in-order concatenation, so the result does not depend on the
/// thread count.
template <PropagationGraph G>
SampleBatch sample_batch(const G& graph, const InteractionMatrix& x, const SamplerConfig& cfg,
                         std::uint64_t epoch = 0, int threads = 1) {
  cfg.validate();
  const WalkKernel kernel(graph);
  const std::size_t n = graph.n();
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, std::max<std::size_t>(n, 1));
  std::vector<std::vector<SampleEntry>> parts(workers);
  std::vector<std::uint64_t> steps(workers, 0);
  auto work = [&](std::size_t w) {
    const std::size_t lo = n * w / workers, hi = n * (w + 1) / workers;
    for (std::size_t u = lo; u < hi; ++u) {
      auto rng = stream_rng(cfg.seed, epoch, u);
      for (int a = 0; a < cfg.alpha; ++a) steps[w] += walk_sample_user(graph, kernel, x, u, cfg, rng, parts[w]);
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }
  SampleBatch batch;
  batch.sampler_tag = "walk";
  batch.expected_scale = static_cast<double>(cfg.beta) / static_cast<double>(cfg.alpha);
  std::size_t total = 0;
  for (auto& p : parts) total += p.size();
  batch.entries.reserve(total);
  for (std::size_t w = 0; w < workers; ++w) {
    batch.entries.insert(batch.entries.end(), parts[w].begin(), parts[w].end());
    batch.transition_steps += steps[w];
  }
  return batch;
}

inline SampleBatch sample_batch(const GraphModel& graph, const InteractionMatrix& x, const SamplerConfig& cfg,
                                std::uint64_t epoch = 0, int threads = 1) {
  return std::visit([&](const auto& g) { return sample_batch(g, x, cfg, epoch, threads); }, graph);
}

/// Debug dump: `<u>\t<i>\t<x>` per entry.
inline void write_batch(const std::string& path, const SampleBatch& batch) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  for (const auto& e : batch.entries) out << e.user << '\t' << e.item << '\t' << e.x << '\n';
}

// ---- baselines --------------------------------------------------------------

enum class BaselineKind { allunion, balunion, itempop, cobias };

inline std::string_view to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::allunion: return "allunion";
    case BaselineKind::balunion: return "balunion";
    case BaselineKind::itempop: return "itempop";
    case BaselineKind::cobias: return "cobias";
  }
  return "?";
}

inline BaselineKind parse_baseline(std::string_view s) {
  if (s == "allunion") return BaselineKind::allunion;
  if (s == "balunion") return BaselineKind::balunion;
  if (s == "itempop") return BaselineKind::itempop;
  if (s == "cobias") return BaselineKind::cobias;
  throw ConfigError("unknown baseline sampler '" + std::string(s) + "'");
}

/// I.i.d. pair sampler with an exact probability accessor. Half of the mass
/// goes to ones and half to zeros for every kind except allunion:
///   balunion  p = 1/(2|X1|) on ones, 1/(2|X0|) on zeros
///   itempop   p = 1/(2|X1|) on ones, proportional to c1_i on zeros
///   cobias    p proportional to r0_u c0_i on ones, r1_u c1_i on zeros
class BaselineSampler {
 public:
  BaselineSampler(BaselineKind kind, const InteractionMatrix& x) : kind_(kind), x_(&x) {
    const std::size_t n = x.n(), m = x.m();
    n_ones_ = static_cast<double>(x.nnz());
    n_zeros_ = static_cast<double>(n) * static_cast<double>(m) - n_ones_;
    if (n == 0 || m == 0) throw EstimatorError("baseline sampler on an empty n x m matrix");
    r1_.resize(n);
    c1_.resize(m);
    for (std::size_t u = 0; u < n; ++u) r1_[u] = static_cast<double>(x.row(u).size());
    for (std::size_t i = 0; i < m; ++i) c1_[i] = static_cast<double>(x.col(i).size());
    positives_ = x.pairs();
    auto need_halves = [&] {
      if (n_ones_ == 0 || n_zeros_ == 0) throw EstimatorError(std::string(to_string(kind)) + " needs both ones and zeros");
    };
    switch (kind) {
      case BaselineKind::allunion:
        break;
      case BaselineKind::balunion:
        need_halves();
        break;
      case BaselineKind::itempop: {
        need_halves();
        // sum over zero cells of c1_i
        zero_norm_ = 0.0;
        for (std::size_t i = 0; i < m; ++i) zero_norm_ += c1_[i] * (static_cast<double>(n) - c1_[i]);
        if (!(zero_norm_ > 0)) throw EstimatorError("itempop: no zero cell has positive popularity");
        item_alias_ = AliasTable(c1_);
        break;
      }
      case BaselineKind::cobias: {
        need_halves();
        std::vector<double> w(positives_.size());
        one_norm_ = 0.0;
        double ones_r1c1 = 0.0;
        for (std::size_t k = 0; k < positives_.size(); ++k) {
          auto [u, i] = positives_[k];
          w[k] = (static_cast<double>(m) - r1_[u]) * (static_cast<double>(n) - c1_[i]);
          one_norm_ += w[k];
          ones_r1c1 += r1_[u] * c1_[i];
        }
        zero_norm_ = n_ones_ * n_ones_ - ones_r1c1;
        if (!(one_norm_ > 0)) throw EstimatorError("cobias: every positive lies in a full row or column");
        if (!(zero_norm_ > 0)) throw EstimatorError("cobias: zero cells carry no mass");
        positive_alias_ = AliasTable(w);
        user_alias_ = AliasTable(r1_);
        item_alias_ = AliasTable(c1_);
        break;
      }
    }
  }

  BaselineKind kind() const noexcept { return kind_; }

  double probability(std::size_t u, std::size_t i) const {
    const bool one = x_->contains(u, i);
    switch (kind_) {
      case BaselineKind::allunion:
        return 1.0 / (static_cast<double>(x_->n()) * static_cast<double>(x_->m()));
      case BaselineKind::balunion:
        return one ? 0.5 / n_ones_ : 0.5 / n_zeros_;
      case BaselineKind::itempop:
        return one ? 0.5 / n_ones_ : 0.5 * c1_[i] / zero_norm_;
      case BaselineKind::cobias:
        return one ? 0.5 * (static_cast<double>(x_->m()) - r1_[u]) * (static_cast<double>(x_->n()) - c1_[i]) / one_norm_
                   : 0.5 * r1_[u] * c1_[i] / zero_norm_;
    }
    return 0.0;
  }

  template <class R>
  SampleEntry draw(R& rng) const {
    const std::size_t n = x_->n(), m = x_->m();
    auto entry = [&](std::size_t u, std::size_t i) {
      return SampleEntry{static_cast<Index>(u), static_cast<Index>(i), x_->contains(u, i) ? 1 : 0};
    };
    if (kind_ == BaselineKind::allunion) return entry(uniform_index(rng, n), uniform_index(rng, m));
    const bool want_one = uniform01(rng) < 0.5;
    if (want_one) {
      std::size_t k = kind_ == BaselineKind::cobias ? positive_alias_.sample(rng) : uniform_index(rng, positives_.size());
      return entry(positives_[k].first, positives_[k].second);
    }
    // Zero half: exact by rejection from a proposal with the right shape.
    for (;;) {
      std::size_t u, i;
      switch (kind_) {
        case BaselineKind::balunion:
          u = uniform_index(rng, n);
          i = uniform_index(rng, m);
          break;
        case BaselineKind::itempop:
          i = item_alias_.sample(rng);
          u = uniform_index(rng, n);
          break;
        default:
          u = user_alias_.sample(rng);
          i = item_alias_.sample(rng);
          break;
      }
      if (!x_->contains(u, i)) return entry(u, i);
    }
  }

  template <class R>
  SampleBatch sample(std::size_t batch_size, R& rng) const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    SampleBatch b;
    b.sampler_tag = std::string(to_string(kind_));
    b.expected_scale = 1.0 / static_cast<double>(batch_size);
    b.entries.reserve(batch_size);
    for (std::size_t k = 0; k < batch_size; ++k) b.entries.push_back(draw(rng));
    return b;
  }

 private:
  BaselineKind kind_;
  const InteractionMatrix* x_;
  double n_ones_ = 0, n_zeros_ = 0, one_norm_ = 0, zero_norm_ = 0;
  std::vector<double> r1_, c1_;
  std::vector<std::pair<Index, Index>> positives_;
  AliasTable item_alias_, user_alias_, positive_alias_;
};

template <class R>
SampleBatch baseline_sample(BaselineKind kind, const InteractionMatrix& x, std::size_t batch_size, R& rng) {
  return BaselineSampler(kind, x).sample(batch_size, rng);
}

}  // namespace samwalker
