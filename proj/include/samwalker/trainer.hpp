#pragma once

// Alternating training: each epoch draws walk batches and takes absorbed-weight
// SGD steps on theta, then takes one gradient step on the graph logits using
// N_SI uniformly chosen item columns.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "samwalker/binary_io.hpp"
#include "samwalker/corpus.hpp"
#include "samwalker/error.hpp"
#include "samwalker/exposure.hpp"
#include "samwalker/factors.hpp"
#include "samwalker/graphnet.hpp"
#include "samwalker/metrics.hpp"
#include "samwalker/walker.hpp"

namespace samwalker {

/// uniform_mf is the fixed-confidence ablation: every pair has the same
/// weight, so theta is trained on allunion batches with no graph.
enum class TrainMode { samwalker, samwalker_pp, exmf_dense, uniform_mf };

inline std::string_view to_string(TrainMode m) {
  switch (m) {
    case TrainMode::samwalker: return "samwalker";
    case TrainMode::samwalker_pp: return "samwalker_pp";
    case TrainMode::exmf_dense: return "exmf_dense";
    case TrainMode::uniform_mf: return "uniform_mf";
  }
  return "?";
}

inline TrainMode parse_train_mode(std::string_view s) {
  if (s == "samwalker") return TrainMode::samwalker;
  if (s == "samwalker_pp") return TrainMode::samwalker_pp;
  if (s == "exmf_dense") return TrainMode::exmf_dense;
  if (s == "uniform_mf") return TrainMode::uniform_mf;
  throw ConfigError("unknown mode '" + std::string(s) + "'");
}

inline BridgeMode parse_bridges(std::string_view s) {
  if (s == "both" || s == "none") return BridgeMode::both;
  if (s == "community" || s == "communities") return BridgeMode::items_only;
  if (s == "item" || s == "items") return BridgeMode::communities_only;
  throw ConfigError("unknown bridge ablation '" + std::string(s) + "' (expected none|community|item)");
}

inline constexpr double kExmfMaxPairs = 1e7;

struct TrainConfig {
  int epochs = 200;
  int n_si = 100;
  int theta_steps_per_epoch = 1;
  SamplerConfig sampler;
  ModelConfig model;
  TrainMode mode = TrainMode::samwalker_pp;
  int eval_every = 10;
  std::uint64_t seed = 1;
  std::size_t communities = 32;
  BridgeMode bridges = BridgeMode::both;
  int threads = 1;
  int early_stop_patience = 0;  // 0 disables early stopping
  std::vector<int> ks{5};

  void validate() const {
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (n_si < 1) throw ConfigError("N_SI must be >= 1");
    if (theta_steps_per_epoch < 1) throw ConfigError("theta_steps_per_epoch must be >= 1");
    if (communities < 1) throw ConfigError("K must be >= 1");
    sampler.validate();
    model.validate();
  }

  ExposureParams exposure() const { return {sampler.t_m, sampler.c, model.eta, model.epsilon}; }
};

struct TrainState {
  PreferenceFactors factors;
  std::optional<GraphModel> graph;
  std::uint64_t epoch = 0;
  double running_objective = 0.0;
  Rng rng;
};

/// One metric record, emitted as a JSON line {epoch, metric, value}.
struct MetricRecord {
  std::uint64_t epoch = 0;
  std::string metric;
  double value = 0.0;
  nlohmann::json to_json() const { return {{"epoch", epoch}, {"metric", metric}, {"value", value}}; }
};

using MetricSink = std::function<void(const MetricRecord&)>;

inline TrainState init_state(const InteractionMatrix& train, const SocialEdges* social, const TrainConfig& cfg) {
  cfg.validate();
  TrainState s;
  s.rng = Rng(mix64(cfg.seed));
  s.factors = PreferenceFactors::random(train.n(), train.m(), cfg.model.d, s.rng, 0.1);
  switch (cfg.mode) {
    case TrainMode::samwalker:
      if (!social) throw ConfigError("mode samwalker requires a social graph (--social)");
      if (social->n != train.n()) throw ConfigError("social graph user count does not match the interactions");
      s.graph.emplace(SocialGraph(*social, s.rng));
      break;
    case TrainMode::samwalker_pp:
      s.graph.emplace(PseudoGraph(train, cfg.communities, s.rng, 0.01, cfg.bridges));
      break;
    case TrainMode::exmf_dense:
      if (static_cast<double>(train.n()) * static_cast<double>(train.m()) > kExmfMaxPairs)
        throw GuardError("exmf_dense refuses n*m > 1e7");
      break;
    case TrainMode::uniform_mf:
      break;
  }
  return s;
}

/// Sum of unweighted pair gradients over the batch, applied once. Returns
/// false (and leaves theta untouched) on an empty batch.
inline bool update_theta_from_batch(PreferenceFactors& f, const SampleBatch& batch, const ModelConfig& model) {
  if (batch.entries.empty()) return false;
  RowMatrix dP = RowMatrix::Zero(f.P.rows(), f.P.cols());
  RowMatrix dQ = RowMatrix::Zero(f.Q.rows(), f.Q.cols());
  for (const auto& e : batch.entries) {
    auto pu = f.P.row(e.user);
    auto qi = f.Q.row(e.item);
    const double r = static_cast<double>(e.x) - sigmoid(pu.dot(qi));
    dP.row(e.user) += r * qi - model.l2_theta * pu;
    dQ.row(e.item) += r * pu - model.l2_theta * qi;
  }
  f.P += model.learning_rate_theta * dP;
  f.Q += model.learning_rate_theta * dQ;
  return true;
}

inline bool update_theta_from_batch(TrainState& s, const SampleBatch& batch, const ModelConfig& model) {
  return update_theta_from_batch(s.factors, batch, model);
}

/// `count` distinct items uniformly at random, or all items when m <= count.
inline std::vector<Index> choose_items(std::size_t m, std::size_t count, Rng& rng) {
  std::vector<Index> items(m);
  for (std::size_t j = 0; j < m; ++j) items[j] = static_cast<Index>(j);
  if (count >= m) return items;
  for (std::size_t k = 0; k < count; ++k) std::swap(items[k], items[k + uniform_index(rng, m - k)]);
  items.resize(count);
  return items;
}

/// One ascent step on the graph logits. Returns the objective on the chosen
/// columns before the step.
inline double update_phi_step(TrainState& s, const InteractionMatrix& train, const TrainConfig& cfg) {
  if (!s.graph) return 0.0;
  auto items = choose_items(train.m(), static_cast<std::size_t>(cfg.n_si), s.rng);
  const double lr = cfg.model.learning_rate_phi;
  return std::visit(
      [&](auto& g) {
        auto res = phi_objective_and_backward(g, s.factors, train, items, cfg.exposure(), cfg.threads);
        if (lr != 0.0) {
          auto& logits = g.params().logits;
          for (std::size_t k = 0; k < logits.size(); ++k) logits[k] += lr * res.logit_grad[k];
          g.refresh();
        }
        return res.objective;
      },
      *s.graph);
}

/// Dense EXMF epoch: closed-form update of every free gamma, then one full
/// gradient step on theta.
inline void exmf_dense_epoch(TrainState& s, const InteractionMatrix& train, const ModelConfig& model) {
  auto& f = s.factors;
  const RowMatrix scores = f.P * f.Q.transpose();
  RowMatrix residual(scores.rows(), scores.cols());
  for (Eigen::Index u = 0; u < scores.rows(); ++u)
    for (Eigen::Index i = 0; i < scores.cols(); ++i) {
      const int x = train.contains(static_cast<std::size_t>(u), static_cast<std::size_t>(i)) ? 1 : 0;
      const double b = clamp_probability(sigmoid(scores(u, i)));
      const double gamma = optimal_free_gamma(x, b, model.eta, model.epsilon);
      residual(u, i) = gamma * (x - sigmoid(scores(u, i)));
    }
  const RowMatrix dP = residual * f.Q - model.l2_theta * f.P;
  const RowMatrix dQ = residual.transpose() * f.P - model.l2_theta * f.Q;
  f.P += model.learning_rate_theta * dP;
  f.Q += model.learning_rate_theta * dQ;
}

/// Batch size for the uniform ablation: the walk sampler's nominal size.
inline std::size_t uniform_batch_size(const InteractionMatrix& train, const SamplerConfig& cfg) {
  return static_cast<std::size_t>(
      std::max(1.0, std::round(static_cast<double>(cfg.alpha) / cfg.beta * static_cast<double>(train.nnz()))));
}

/// Runs one epoch of the configured mode.
inline void train_epoch(TrainState& s, const InteractionMatrix& train, const TrainConfig& cfg) {
  switch (cfg.mode) {
    case TrainMode::exmf_dense:
      exmf_dense_epoch(s, train, cfg.model);
      break;
    case TrainMode::uniform_mf: {
      const BaselineSampler sampler(BaselineKind::allunion, train);
      for (int k = 0; k < cfg.theta_steps_per_epoch; ++k) {
        auto rng = stream_rng(cfg.seed, s.epoch * cfg.theta_steps_per_epoch + k, 0x0f1a7);
        update_theta_from_batch(s, sampler.sample(uniform_batch_size(train, cfg.sampler), rng), cfg.model);
      }
      break;
    }
    case TrainMode::samwalker:
    case TrainMode::samwalker_pp: {
      SamplerConfig sc = cfg.sampler;
      sc.seed = cfg.seed;
      for (int k = 0; k < cfg.theta_steps_per_epoch; ++k) {
        auto batch = sample_batch(*s.graph, train, sc, s.epoch * cfg.theta_steps_per_epoch + k, cfg.threads);
        if (!update_theta_from_batch(s, batch, cfg.model)) std::cerr << "warning: empty batch at epoch " << s.epoch << "\n";
      }
      s.running_objective = update_phi_step(s, train, cfg);
      break;
    }
  }
  ++s.epoch;
}

/// Trains until `cfg.epochs` total epochs have run (a resumed state continues
/// from its epoch). With a test split, metrics are emitted every eval_every
/// epochs and early stopping on NDCG is available.
inline TrainState fit(TrainState state, const InteractionMatrix& train, const TrainConfig& cfg,
                      const InteractionMatrix* test = nullptr, const MetricSink& sink = {}) {
  double best = -std::numeric_limits<double>::infinity();
  int stale = 0;
  while (state.epoch < static_cast<std::uint64_t>(cfg.epochs)) {
    train_epoch(state, train, cfg);
    if (sink && state.graph) sink({state.epoch, "phi_objective", state.running_objective});
    if (test && test->nnz() > 0 && cfg.eval_every > 0 && state.epoch % static_cast<std::uint64_t>(cfg.eval_every) == 0) {
      auto rep = evaluate(state.factors, train, *test, cfg.ks);
      if (sink) {
        for (std::size_t k = 0; k < rep.ks.size(); ++k) {
          sink({state.epoch, "pre@" + std::to_string(rep.ks[k]), rep.precision[k]});
          sink({state.epoch, "rec@" + std::to_string(rep.ks[k]), rep.recall[k]});
        }
        sink({state.epoch, "ndcg", rep.ndcg});
        sink({state.epoch, "mrr", rep.mrr});
      }
      if (cfg.early_stop_patience > 0) {
        if (rep.ndcg > best) {
          best = rep.ndcg;
          stale = 0;
        } else if (++stale >= cfg.early_stop_patience) {
          break;
        }
      }
    }
  }
  return state;
}

inline TrainState fit(const InteractionMatrix& train, const SocialEdges* social, const TrainConfig& cfg,
                      const InteractionMatrix* test = nullptr, const MetricSink& sink = {}) {
  return fit(init_state(train, social, cfg), train, cfg, test, sink);
}

// ---- checkpoints ------------------------------------------------------------

inline constexpr std::uint64_t kStateMagic = 0x53575354'41544531ULL;  // "SWSTATE1"

/// Writes factors.bin, graph.bin (graph modes) and state.bin into `dir`.
inline void save_checkpoint(const std::filesystem::path& dir, const TrainState& s) {
  std::filesystem::create_directories(dir);
  save_factors((dir / "factors.bin").string(), s.factors);
  if (s.graph) {
    std::ofstream g(dir / "graph.bin", std::ios::binary);
    if (!g) throw Error("cannot write " + (dir / "graph.bin").string());
    write_graph(g, *s.graph, s.factors.m());
  }
  std::ofstream out(dir / "state.bin", std::ios::binary);
  if (!out) throw Error("cannot write " + (dir / "state.bin").string());
  io::put_u64(out, kStateMagic);
  io::put_u64(out, s.epoch);
  io::put_f64(out, s.running_objective);
  std::ostringstream rng;
  rng << s.rng;
  io::put_string(out, rng.str());
}

/// Rebuilds the graph structure from the data and restores every parameter.
inline TrainState load_checkpoint(const std::filesystem::path& dir, const InteractionMatrix& train,
                                  const SocialEdges* social, const TrainConfig& cfg) {
  if (!std::filesystem::exists(dir / "factors.bin")) throw ConfigError("no checkpoint at " + dir.string());
  TrainState s = init_state(train, social, cfg);
  s.factors = load_factors((dir / "factors.bin").string());
  if (s.factors.n() != train.n() || s.factors.m() != train.m())
    throw ConfigError("checkpoint dimensions do not match the training data");
  if (s.graph) {
    std::ifstream g(dir / "graph.bin", std::ios::binary);
    if (!g) throw ConfigError("checkpoint is missing graph.bin");
    read_graph_into(g, *s.graph);
  }
  std::ifstream in(dir / "state.bin", std::ios::binary);
  if (!in) throw ConfigError("checkpoint is missing state.bin");
  if (io::get_u64(in) != kStateMagic) throw Error("not a training-state file");
  s.epoch = io::get_u64(in);
  s.running_objective = io::get_f64(in);
  std::istringstream rng(io::get_string(in));
  rng >> s.rng;
  return s;
}

}  // namespace samwalker
