#pragma once

// Propagation graphs over users. Both graph kinds keep every learnable logit
// in one flat array, partitioned into softmax groups (each group is one
// probability distribution) plus an optional block of sigmoid mixing logits.
// The materialized weights live in an array with the same layout, so
// gradients, checkpoints and finite-difference checks are generic.
//
//   SocialGraph:  W_uv = phi_uv, softmax over u's out-edges.
//   PseudoGraph:  W+_uv = a_u sum_i phi(u<-i)_ui phi(i<-u)_iv
//                       + (1 - a_u) sum_c phi(u<-c)_uc phi(c<-u)_cv

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "samwalker/alias.hpp"
#include "samwalker/binary_io.hpp"
#include "samwalker/corpus.hpp"
#include "samwalker/error.hpp"
#include "samwalker/factors.hpp"
#include "samwalker/rng.hpp"

namespace samwalker {

/// Max-subtracted softmax of `logits` into `out`.
inline void softmax(std::span<const double> logits, std::span<double> out) {
  if (logits.empty()) return;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) z += (out[k] = std::exp(logits[k] - mx));
  for (auto& o : out) o /= z;
}

/// Flat logit storage shared by both graph kinds.
struct EdgeParams {
  std::vector<double> logits;
  std::vector<double> weights;
  std::vector<SoftmaxGroup> groups;
  std::size_t mix_begin = 0;  // [mix_begin, mix_end) are sigmoid logits
  std::size_t mix_end = 0;

  std::size_t size() const noexcept { return logits.size(); }

  /// Materializes weights from logits for every group and the mix block.
  void normalize() {
    weights.assign(logits.size(), 0.0);
    for (auto g : groups)
      softmax(std::span<const double>(logits).subspan(g.offset, g.size),
              std::span<double>(weights).subspan(g.offset, g.size));
    for (std::size_t k = mix_begin; k < mix_end; ++k) weights[k] = sigmoid(logits[k]);
  }

  /// Maps d(objective)/d(weights) to d(objective)/d(logits).
  std::vector<double> chain_to_logits(std::span<const double> weight_grad) const {
    std::vector<double> out(logits.size(), 0.0);
    for (auto g : groups) {
      double dot = 0.0;
      for (std::size_t k = g.offset; k < g.offset + g.size; ++k) dot += weights[k] * weight_grad[k];
      for (std::size_t k = g.offset; k < g.offset + g.size; ++k) out[k] = weights[k] * (weight_grad[k] - dot);
    }
    for (std::size_t k = mix_begin; k < mix_end; ++k) out[k] = weight_grad[k] * weights[k] * (1.0 - weights[k]);
    return out;
  }
};

enum class GraphMode : std::uint64_t { social = 0, pseudo = 1 };

/// Sparse row of a transition matrix.
using TransitionRow = std::vector<std::pair<Index, double>>;

namespace detail {
inline void randomize_logits(std::vector<double>& logits, Rng& rng, double std) {
  for (auto& l : logits) l = std * standard_normal(rng);
}

inline TransitionRow compact_row(const std::vector<double>& dense) {
  TransitionRow row;
  for (std::size_t v = 0; v < dense.size(); ++v)
    if (dense[v] != 0.0) row.emplace_back(static_cast<Index>(v), dense[v]);
  return row;
}
}  // namespace detail

class SocialGraph {
 public:
  /// Per-step forward intermediates; nothing beyond gamma is needed.
  struct Messages {};

  SocialGraph() = default;

  /// Isolated users get a self-loop. Logits start i.i.d. N(0, init_std^2).
  SocialGraph(const SocialEdges& social, Rng& rng, double init_std = 0.01) : n_(social.n) {
    offsets_.assign(n_ + 1, 0);
    for (std::size_t u = 0; u < n_; ++u) {
      const auto& nb = social.neighbors[u];
      if (nb.empty()) {
        targets_.push_back(static_cast<Index>(u));
      } else {
        targets_.insert(targets_.end(), nb.begin(), nb.end());
      }
      offsets_[u + 1] = targets_.size();
    }
    params_.logits.assign(targets_.size(), 0.0);
    for (std::size_t u = 0; u < n_; ++u) params_.groups.push_back({offsets_[u], offsets_[u + 1] - offsets_[u]});
    params_.mix_begin = params_.mix_end = targets_.size();
    detail::randomize_logits(params_.logits, rng, init_std);
    refresh();
  }

  static constexpr GraphMode mode = GraphMode::social;
  std::size_t n() const noexcept { return n_; }
  std::size_t edge_count() const noexcept { return targets_.size(); }
  EdgeParams& params() noexcept { return params_; }
  const EdgeParams& params() const noexcept { return params_; }
  void refresh() { params_.normalize(); }

  std::span<const Index> neighbors(std::size_t u) const {
    return {targets_.data() + offsets_[u], offsets_[u + 1] - offsets_[u]};
  }
  std::span<const double> edge_weights(std::size_t u) const {
    return std::span<const double>(params_.weights).subspan(offsets_[u], offsets_[u + 1] - offsets_[u]);
  }

  /// out = W * in.
  void multiply(std::span<const double> in, std::span<double> out, Messages&) const {
    const auto& w = params_.weights;
    for (std::size_t u = 0; u < n_; ++u) {
      double acc = 0.0;
      for (std::size_t e = offsets_[u]; e < offsets_[u + 1]; ++e) acc += w[e] * in[targets_[e]];
      out[u] = acc;
    }
  }

  /// Reverse of `multiply` for upstream `rho` = d/d(out): accumulates
  /// d/d(weights) into `weight_grad` and adds W^T rho into `lambda`.
  void backward(std::span<const double> in, const Messages&, std::span<const double> rho,
                std::span<double> weight_grad, std::span<double> lambda) const {
    const auto& w = params_.weights;
    for (std::size_t u = 0; u < n_; ++u) {
      if (rho[u] == 0.0) continue;
      for (std::size_t e = offsets_[u]; e < offsets_[u + 1]; ++e) {
        weight_grad[e] += rho[u] * in[targets_[e]];
        lambda[targets_[e]] += rho[u] * w[e];
      }
    }
  }

  TransitionRow transition_row(std::size_t u) const {
    if (u >= n_) throw IndexError("user out of range");
    std::vector<double> dense(n_, 0.0);
    for (std::size_t e = offsets_[u]; e < offsets_[u + 1]; ++e) dense[targets_[e]] += params_.weights[e];
    return detail::compact_row(dense);
  }

  /// Draws the next user of a walk at `v` using alias tables built from the
  /// current weights.
  template <class G>
  Index next_user(std::size_t v, const GroupedAlias& alias, G& rng) const {
    return targets_[alias.sample(params_.groups[v], rng)];
  }

  /// Structural fingerprint checked when loading logits.
  std::uint64_t structure_hash() const {
    std::uint64_t h = mix64(n_);
    for (auto t : targets_) h = mix64(h ^ t);
    for (auto o : offsets_) h = mix64(h ^ o);
    return h;
  }

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<Index> targets_;
  EdgeParams params_;
};

/// Which bridge paths of the pseudo graph are active.
enum class BridgeMode { both, items_only, communities_only };

class PseudoGraph {
 public:
  /// Per-step intermediates: item messages, community messages, and the two
  /// aggregated user messages.
  struct Messages {
    std::vector<double> item_msg;
    std::vector<double> community_msg;
    std::vector<double> via_items;
    std::vector<double> via_communities;
  };

  PseudoGraph() = default;

  PseudoGraph(const InteractionMatrix& train, std::size_t communities, Rng& rng, double init_std = 0.01,
              BridgeMode bridges = BridgeMode::both)
      : n_(train.n()), m_(train.m()), k_(communities), bridges_(bridges) {
    if (k_ < 1) throw ConfigError("community count K must be >= 1");
    const std::size_t nnz = train.nnz();
    row_offsets_.resize(n_ + 1);
    col_offsets_.resize(m_ + 1);
    row_items_.reserve(nnz);
    col_users_.reserve(nnz);
    for (std::size_t u = 0; u < n_; ++u) {
      row_offsets_[u] = train.row_offset(u);
      auto r = train.row(u);
      row_items_.insert(row_items_.end(), r.begin(), r.end());
    }
    row_offsets_[n_] = nnz;
    for (std::size_t i = 0; i < m_; ++i) {
      col_offsets_[i] = train.col_offset(i);
      auto c = train.col(i);
      col_users_.insert(col_users_.end(), c.begin(), c.end());
    }
    col_offsets_[m_] = nnz;
    ui_ = 0;
    iu_ = nnz;
    uc_ = 2 * nnz;
    cu_ = uc_ + n_ * k_;
    mix_ = cu_ + k_ * n_;
    auto& p = params_;
    p.logits.assign(mix_ + n_, 0.0);
    for (std::size_t u = 0; u < n_; ++u)
      if (row_offsets_[u + 1] > row_offsets_[u])
        p.groups.push_back({ui_ + row_offsets_[u], row_offsets_[u + 1] - row_offsets_[u]});
    for (std::size_t i = 0; i < m_; ++i)
      if (col_offsets_[i + 1] > col_offsets_[i])
        p.groups.push_back({iu_ + col_offsets_[i], col_offsets_[i + 1] - col_offsets_[i]});
    for (std::size_t u = 0; u < n_; ++u) p.groups.push_back({uc_ + u * k_, k_});
    for (std::size_t c = 0; c < k_; ++c) p.groups.push_back({cu_ + c * n_, n_});
    p.mix_begin = mix_;
    p.mix_end = mix_ + n_;
    // group index lookup for walks
    user_item_group_.assign(n_, kNoGroup);
    item_user_group_.assign(m_, kNoGroup);
    std::size_t g = 0;
    for (std::size_t u = 0; u < n_; ++u)
      if (row_offsets_[u + 1] > row_offsets_[u]) user_item_group_[u] = g++;
    for (std::size_t i = 0; i < m_; ++i)
      if (col_offsets_[i + 1] > col_offsets_[i]) item_user_group_[i] = g++;
    user_comm_group0_ = g;
    comm_user_group0_ = g + n_;
    detail::randomize_logits(p.logits, rng, init_std);
    refresh();
  }

  static constexpr GraphMode mode = GraphMode::pseudo;
  std::size_t n() const noexcept { return n_; }
  std::size_t m() const noexcept { return m_; }
  std::size_t communities() const noexcept { return k_; }
  /// Directed parameter groups: both item directions plus both community directions.
  std::size_t edge_count() const noexcept { return 2 * row_items_.size() + 2 * n_ * k_; }
  EdgeParams& params() noexcept { return params_; }
  const EdgeParams& params() const noexcept { return params_; }
  BridgeMode bridges() const noexcept { return bridges_; }
  void set_bridges(BridgeMode b) {
    bridges_ = b;
    refresh();
  }

  /// Materializes weights; a_u is overridden for ablations and forced to 0
  /// for users without positives.
  void refresh() {
    params_.normalize();
    for (std::size_t u = 0; u < n_; ++u) {
      double& a = params_.weights[mix_ + u];
      if (row_offsets_[u + 1] == row_offsets_[u] || bridges_ == BridgeMode::communities_only) {
        a = 0.0;
      } else if (bridges_ == BridgeMode::items_only) {
        a = 1.0;
      }
    }
  }

  double mixing(std::size_t u) const { return params_.weights[mix_ + u]; }
  std::span<const Index> user_items(std::size_t u) const {
    return {row_items_.data() + row_offsets_[u], row_offsets_[u + 1] - row_offsets_[u]};
  }
  std::span<const Index> item_users(std::size_t i) const {
    return {col_users_.data() + col_offsets_[i], col_offsets_[i + 1] - col_offsets_[i]};
  }
  /// phi(u<-i) over u's items, aligned with user_items(u).
  std::span<const double> user_item_weights(std::size_t u) const {
    return std::span<const double>(params_.weights).subspan(ui_ + row_offsets_[u], row_offsets_[u + 1] - row_offsets_[u]);
  }
  /// phi(i<-u) over i's consumers, aligned with item_users(i).
  std::span<const double> item_user_weights(std::size_t i) const {
    return std::span<const double>(params_.weights).subspan(iu_ + col_offsets_[i], col_offsets_[i + 1] - col_offsets_[i]);
  }
  /// phi(u<-c), length K.
  std::span<const double> user_community_weights(std::size_t u) const {
    return std::span<const double>(params_.weights).subspan(uc_ + u * k_, k_);
  }
  /// phi(c<-u) over all users, length n.
  std::span<const double> community_user_weights(std::size_t c) const {
    return std::span<const double>(params_.weights).subspan(cu_ + c * n_, n_);
  }

  // Offsets of each block in the flat parameter array.
  std::size_t user_item_block() const noexcept { return ui_; }
  std::size_t item_user_block() const noexcept { return iu_; }
  std::size_t user_community_block() const noexcept { return uc_; }
  std::size_t community_user_block() const noexcept { return cu_; }
  std::size_t mixing_block() const noexcept { return mix_; }

  void multiply(std::span<const double> in, std::span<double> out, Messages& msg) const {
    const auto& w = params_.weights;
    msg.item_msg.assign(m_, 0.0);
    msg.community_msg.assign(k_, 0.0);
    msg.via_items.assign(n_, 0.0);
    msg.via_communities.assign(n_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) {
      double acc = 0.0;
      for (std::size_t e = col_offsets_[i]; e < col_offsets_[i + 1]; ++e) acc += w[iu_ + e] * in[col_users_[e]];
      msg.item_msg[i] = acc;
    }
    for (std::size_t c = 0; c < k_; ++c) {
      const double* wc = w.data() + cu_ + c * n_;
      double acc = 0.0;
      for (std::size_t v = 0; v < n_; ++v) acc += wc[v] * in[v];
      msg.community_msg[c] = acc;
    }
    for (std::size_t u = 0; u < n_; ++u) {
      double items = 0.0;
      for (std::size_t e = row_offsets_[u]; e < row_offsets_[u + 1]; ++e) items += w[ui_ + e] * msg.item_msg[row_items_[e]];
      double comms = 0.0;
      const double* wu = w.data() + uc_ + u * k_;
      for (std::size_t c = 0; c < k_; ++c) comms += wu[c] * msg.community_msg[c];
      msg.via_items[u] = items;
      msg.via_communities[u] = comms;
      const double a = w[mix_ + u];
      out[u] = a * items + (1.0 - a) * comms;
    }
  }

  void backward(std::span<const double> in, const Messages& msg, std::span<const double> rho,
                std::span<double> weight_grad, std::span<double> lambda) const {
    const auto& w = params_.weights;
    std::vector<double> d_item(m_, 0.0), d_comm(k_, 0.0);
    for (std::size_t u = 0; u < n_; ++u) {
      const double r = rho[u];
      if (r == 0.0) continue;
      const double a = w[mix_ + u];
      weight_grad[mix_ + u] += r * (msg.via_items[u] - msg.via_communities[u]);
      const double ri = r * a, rc = r * (1.0 - a);
      for (std::size_t e = row_offsets_[u]; e < row_offsets_[u + 1]; ++e) {
        weight_grad[ui_ + e] += ri * msg.item_msg[row_items_[e]];
        d_item[row_items_[e]] += ri * w[ui_ + e];
      }
      const double* wu = w.data() + uc_ + u * k_;
      double* gu = weight_grad.data() + uc_ + u * k_;
      for (std::size_t c = 0; c < k_; ++c) {
        gu[c] += rc * msg.community_msg[c];
        d_comm[c] += rc * wu[c];
      }
    }
    for (std::size_t i = 0; i < m_; ++i) {
      const double di = d_item[i];
      if (di == 0.0) continue;
      for (std::size_t e = col_offsets_[i]; e < col_offsets_[i + 1]; ++e) {
        weight_grad[iu_ + e] += di * in[col_users_[e]];
        lambda[col_users_[e]] += di * w[iu_ + e];
      }
    }
    for (std::size_t c = 0; c < k_; ++c) {
      const double dc = d_comm[c];
      if (dc == 0.0) continue;
      const double* wc = w.data() + cu_ + c * n_;
      double* gc = weight_grad.data() + cu_ + c * n_;
      for (std::size_t v = 0; v < n_; ++v) {
        gc[v] += dc * in[v];
        lambda[v] += dc * wc[v];
      }
    }
  }

  /// Entrywise W+ row.
  TransitionRow transition_row(std::size_t u) const {
    if (u >= n_) throw IndexError("user out of range");
    std::vector<double> dense(n_, 0.0);
    const double a = mixing(u);
    if (a > 0.0) {
      auto items = user_items(u);
      auto wu = user_item_weights(u);
      for (std::size_t k = 0; k < items.size(); ++k) {
        auto users = item_users(items[k]);
        auto wi = item_user_weights(items[k]);
        for (std::size_t j = 0; j < users.size(); ++j) dense[users[j]] += a * wu[k] * wi[j];
      }
    }
    if (a < 1.0) {
      auto wu = user_community_weights(u);
      for (std::size_t c = 0; c < k_; ++c) {
        auto wc = community_user_weights(c);
        for (std::size_t v = 0; v < n_; ++v) dense[v] += (1.0 - a) * wu[c] * wc[v];
      }
    }
    return detail::compact_row(dense);
  }

  /// Two-hop walk step: coin on a_v, then user -> bridge -> user.
  template <class G>
  Index next_user(std::size_t v, const GroupedAlias& alias, G& rng) const {
    const auto& groups = params_.groups;
    const double a = mixing(v);
    if (a > 0.0 && (a >= 1.0 || uniform01(rng) < a)) {
      const std::size_t e = alias.sample(groups[user_item_group_[v]], rng) - ui_;
      const Index item = row_items_[e];
      const std::size_t f = alias.sample(groups[item_user_group_[item]], rng) - iu_;
      return col_users_[f];
    }
    const std::size_t c = alias.sample(groups[user_comm_group0_ + v], rng) - (uc_ + v * k_);
    return static_cast<Index>(alias.sample(groups[comm_user_group0_ + c], rng) - (cu_ + c * n_));
  }

  std::uint64_t structure_hash() const {
    std::uint64_t h = mix64(n_ ^ mix64(m_ ^ mix64(k_)));
    for (auto t : row_items_) h = mix64(h ^ t);
    for (auto o : row_offsets_) h = mix64(h ^ o);
    return h;
  }

 private:
  static constexpr std::size_t kNoGroup = static_cast<std::size_t>(-1);
  std::size_t n_ = 0, m_ = 0, k_ = 1;
  BridgeMode bridges_ = BridgeMode::both;
  std::vector<std::size_t> row_offsets_{0}, col_offsets_{0};
  std::vector<Index> row_items_, col_users_;
  std::size_t ui_ = 0, iu_ = 0, uc_ = 0, cu_ = 0, mix_ = 0;
  std::vector<std::size_t> user_item_group_, item_user_group_;
  std::size_t user_comm_group0_ = 0, comm_user_group0_ = 0;
  EdgeParams params_;
};

template <class G>
concept PropagationGraph = requires(G g, const G cg, std::span<const double> in, std::span<double> out,
                                    typename G::Messages msg, std::size_t u) {
  { cg.n() } -> std::convertible_to<std::size_t>;
  { cg.edge_count() } -> std::convertible_to<std::size_t>;
  { g.params() } -> std::same_as<EdgeParams&>;
  g.refresh();
  cg.multiply(in, out, msg);
  cg.backward(in, msg, in, out, out);
  { cg.transition_row(u) } -> std::same_as<TransitionRow>;
};

static_assert(PropagationGraph<SocialGraph>);
static_assert(PropagationGraph<PseudoGraph>);

using GraphModel = std::variant<SocialGraph, PseudoGraph>;

inline GraphMode mode_of(const GraphModel& g) {
  return std::holds_alternative<SocialGraph>(g) ? GraphMode::social : GraphMode::pseudo;
}

/// Re-materializes every weight from the logits (softmax per group, sigmoid
/// for mixing logits).
template <PropagationGraph G>
void normalize_edges(G& g) {
  g.refresh();
}

// ---- checkpoint -------------------------------------------------------------

inline constexpr std::uint64_t kGraphMagic = 0x53574752'4150484cULL;  // "SWGRAPHL"
inline constexpr std::uint64_t kGraphVersion = 1;

/// Header (mode, n, m, K, structure hash), then group count, each group's
/// logits, then the mixing logits.
inline void write_graph(std::ostream& out, const GraphModel& model, std::size_t m) {
  std::visit(
      [&](const auto& g) {
        const auto& p = g.params();
        io::put_u64(out, kGraphMagic);
        io::put_u64(out, kGraphVersion);
        io::put_u64(out, static_cast<std::uint64_t>(g.mode));
        io::put_u64(out, g.n());
        io::put_u64(out, m);
        std::uint64_t k = 0;
        if constexpr (std::is_same_v<std::decay_t<decltype(g)>, PseudoGraph>) k = g.communities();
        io::put_u64(out, k);
        io::put_u64(out, g.structure_hash());
        io::put_u64(out, p.groups.size());
        for (auto grp : p.groups) {
          io::put_u64(out, grp.size);
          io::put_f64s(out, std::span<const double>(p.logits).subspan(grp.offset, grp.size));
        }
        io::put_u64(out, p.mix_end - p.mix_begin);
        io::put_f64s(out, std::span<const double>(p.logits).subspan(p.mix_begin, p.mix_end - p.mix_begin));
      },
      model);
}

/// Restores logits into a graph rebuilt from the same data.
inline void read_graph_into(std::istream& in, GraphModel& model) {
  if (io::get_u64(in) != kGraphMagic) throw Error("not a graph checkpoint");
  if (io::get_u64(in) != kGraphVersion) throw Error("unsupported graph checkpoint version");
  const auto mode = static_cast<GraphMode>(io::get_u64(in));
  if (mode != mode_of(model)) throw Error("graph checkpoint mode mismatch");
  std::visit(
      [&](auto& g) {
        const auto n = io::get_u64(in);
        (void)io::get_u64(in);  // m
        const auto k = io::get_u64(in);
        const auto hash = io::get_u64(in);
        if (n != g.n() || hash != g.structure_hash()) throw Error("graph checkpoint structure mismatch");
        if constexpr (std::is_same_v<std::decay_t<decltype(g)>, PseudoGraph>)
          if (k != g.communities()) throw Error("graph checkpoint K mismatch");
        auto& p = g.params();
        if (io::get_u64(in) != p.groups.size()) throw Error("graph checkpoint group count mismatch");
        for (auto grp : p.groups) {
          if (io::get_u64(in) != grp.size) throw Error("graph checkpoint group size mismatch");
          for (std::size_t j = 0; j < grp.size; ++j) p.logits[grp.offset + j] = io::get_f64(in);
        }
        if (io::get_u64(in) != p.mix_end - p.mix_begin) throw Error("graph checkpoint mixing mismatch");
        for (std::size_t j = p.mix_begin; j < p.mix_end; ++j) p.logits[j] = io::get_f64(in);
        g.refresh();
      },
      model);
}

}  // namespace samwalker
