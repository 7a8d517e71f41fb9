#pragma once

// Exposure columns gamma_.j computed by unrolling
//   gamma^(t+1) = (1 - c) x_.j + c W gamma^(t),   gamma^(0) = x_.j
// for t_m steps, the per-pair ELBO term, and reverse-mode gradients of the
// column-restricted ELBO with respect to every graph logit.

#include <algorithm>
#include <cmath>
#include <span>
#include <thread>
#include <vector>

#include "samwalker/corpus.hpp"
#include "samwalker/error.hpp"
#include "samwalker/factors.hpp"
#include "samwalker/graphnet.hpp"

namespace samwalker {

/// Clamp applied to gamma inside log-bearing terms only.
inline constexpr double kGammaLogClamp = 1e-12;

struct ExposureColumn {
  Index item = 0;
  std::vector<double> gamma;
  int steps = 0;
};

template <PropagationGraph G>
struct PropagationTape {
  std::vector<std::vector<double>> gamma;          // t_m + 1 entries
  std::vector<typename G::Messages> messages;      // t_m entries
};

inline std::vector<double> column_indicator(const InteractionMatrix& x, std::size_t j) {
  std::vector<double> col(x.n(), 0.0);
  for (Index u : x.col(j)) col[u] = 1.0;
  return col;
}

template <PropagationGraph G>
ExposureColumn propagate_forward(const G& graph, const InteractionMatrix& x, std::size_t j, int t_m, double c,
                                 PropagationTape<G>* tape = nullptr) {
  if (t_m < 0) throw ConfigError("t_m must be >= 0");
  if (!(c >= 0.0 && c <= 1.0)) throw ConfigError("c must be in [0,1]");
  if (j >= x.m()) throw IndexError("item out of range");
  const std::size_t n = graph.n();
  const std::vector<double> xj = column_indicator(x, j);
  std::vector<double> cur = xj, next(n);
  typename G::Messages msg;
  if (tape) {
    tape->gamma.assign(1, cur);
    tape->messages.clear();
  }
  for (int t = 0; t < t_m; ++t) {
    graph.multiply(cur, next, msg);
    for (std::size_t u = 0; u < n; ++u) next[u] = (1.0 - c) * xj[u] + c * next[u];
    std::swap(cur, next);
    if (tape) {
      tape->gamma.push_back(cur);
      tape->messages.push_back(msg);
    }
  }
  return {static_cast<Index>(j), std::move(cur), t_m};
}

/// Entropy-like term l(gamma, gamma) with 0 log 0 := 0 and clamped logs.
inline double self_ll(double g) {
  double out = 0.0;
  if (g > 0.0) out += g * std::log(std::max(g, kGammaLogClamp));
  if (g < 1.0) out += (1.0 - g) * std::log(std::max(1.0 - g, kGammaLogClamp));
  return out;
}

/// g(gamma) = (1 - gamma) l(x, eps) + l(gamma, eta) - l(gamma, gamma).
inline double g_term(double gamma, int x, double eta, double epsilon) {
  return (1.0 - gamma) * bern_ll(x, epsilon) + bern_ll(gamma, eta) - self_ll(gamma);
}

inline double g_term_derivative(double gamma, int x, double eta, double epsilon) {
  const double g = std::clamp(gamma, kGammaLogClamp, 1.0 - kGammaLogClamp);
  return -bern_ll(x, epsilon) + std::log(eta) - std::log1p(-eta) - std::log(g) + std::log1p(-g);
}

/// gamma * l(x, b) + g(gamma): one pair's share of the ELBO.
inline double pair_elbo(double gamma, int x, double b, double eta, double epsilon) {
  return gamma * bern_ll(x, b) + g_term(gamma, x, eta, epsilon);
}

/// Maximizer over a free gamma of pair_elbo (the individual-posterior update).
inline double optimal_free_gamma(int x, double b, double eta, double epsilon) {
  return sigmoid(bern_ll(x, b) - bern_ll(x, epsilon) + std::log(eta) - std::log1p(-eta));
}

struct PhiGradient {
  double objective = 0.0;
  std::vector<double> logit_grad;
};

struct ExposureParams {
  int t_m = 5;
  double c = 0.9;
  double eta = 0.5;
  double epsilon = 0.001;
};

namespace detail {

/// Objective of one column; accumulates d/d(weights) into `weight_grad`.
template <PropagationGraph G>
double column_objective_backward(const G& graph, const PreferenceFactors& f, const InteractionMatrix& x,
                                 std::size_t j, const ExposureParams& ep, std::span<double> weight_grad,
                                 PropagationTape<G>& tape) {
  const std::size_t n = graph.n();
  auto col = propagate_forward(graph, x, j, ep.t_m, ep.c, &tape);
  std::vector<char> label(n, 0);
  for (Index u : x.col(j)) label[u] = 1;
  std::vector<double> lambda(n), rho(n), prev(n);
  double objective = 0.0;
  for (std::size_t u = 0; u < n; ++u) {
    const double b = clamp_probability(sigmoid(f.score(u, j)));
    const double ll = bern_ll(label[u], b);
    objective += col.gamma[u] * ll + g_term(col.gamma[u], label[u], ep.eta, ep.epsilon);
    lambda[u] = ll + g_term_derivative(col.gamma[u], label[u], ep.eta, ep.epsilon);
  }
  if (ep.c == 0.0) return objective;
  for (int t = ep.t_m - 1; t >= 0; --t) {
    for (std::size_t u = 0; u < n; ++u) rho[u] = ep.c * lambda[u];
    std::fill(prev.begin(), prev.end(), 0.0);
    graph.backward(tape.gamma[t], tape.messages[t], rho, weight_grad, prev);
    std::swap(lambda, prev);
  }
  return objective;
}

}  // namespace detail

/// ELBO restricted to `items`, and its gradient with respect to every logit
/// (ascent direction). Factors are read only. Columns are split statically
/// across `threads` workers and reduced in worker order.
template <PropagationGraph G>
PhiGradient phi_objective_and_backward(const G& graph, const PreferenceFactors& f, const InteractionMatrix& x,
                                       std::span<const Index> items, const ExposureParams& ep, int threads = 1) {
  if (items.empty()) throw ConfigError("phi step needs at least one item");
  const std::size_t p = graph.params().size();
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, items.size());
  std::vector<std::vector<double>> grads(workers, std::vector<double>(p, 0.0));
  std::vector<double> objectives(workers, 0.0);
  auto work = [&](std::size_t w) {
    PropagationTape<G> tape;
    const std::size_t lo = items.size() * w / workers, hi = items.size() * (w + 1) / workers;
    for (std::size_t k = lo; k < hi; ++k)
      objectives[w] += detail::column_objective_backward(graph, f, x, items[k], ep, grads[w], tape);
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }
  PhiGradient out;
  for (std::size_t w = 1; w < workers; ++w)
    for (std::size_t k = 0; k < p; ++k) grads[0][k] += grads[w][k];
  for (double o : objectives) out.objective += o;
  out.logit_grad = graph.params().chain_to_logits(grads[0]);
  return out;
}

/// Forward-only objective over `items`.
template <PropagationGraph G>
double phi_objective(const G& graph, const PreferenceFactors& f, const InteractionMatrix& x,
                     std::span<const Index> items, const ExposureParams& ep) {
  double total = 0.0;
  for (Index j : items) {
    auto col = propagate_forward(graph, x, j, ep.t_m, ep.c);
    auto users = x.col(j);
    std::size_t next = 0;
    for (std::size_t u = 0; u < graph.n(); ++u) {
      int label = 0;
      if (next < users.size() && users[next] == u) {
        label = 1;
        ++next;
      }
      total += pair_elbo(col.gamma[u], label, clamp_probability(sigmoid(f.score(u, j))), ep.eta, ep.epsilon);
    }
  }
  return total;
}

/// Full ELBO over every item column.
template <PropagationGraph G>
double elbo(const G& graph, const PreferenceFactors& f, const InteractionMatrix& x, const ExposureParams& ep) {
  std::vector<Index> all(x.m());
  for (std::size_t j = 0; j < all.size(); ++j) all[j] = static_cast<Index>(j);
  return phi_objective(graph, f, x, all, ep);
}

/// Exact per-pair law of the depth-limited walk (unnormalized by beta):
///   sum_{t=0}^{t_m} (cW)^t (1-c) x + c^{t_m+1} mean(x) 1
/// The tail is the uniform jump after t_m transitions; W rows sum to one.
template <PropagationGraph G>
std::vector<double> walk_law_column(const G& graph, const InteractionMatrix& x, std::size_t j, int t_m, double c) {
  const std::size_t n = graph.n();
  std::vector<double> v = column_indicator(x, j), next(n), acc(n);
  typename G::Messages msg;
  for (std::size_t u = 0; u < n; ++u) acc[u] = (1.0 - c) * v[u];
  for (int t = 1; t <= t_m; ++t) {
    graph.multiply(v, next, msg);
    for (std::size_t u = 0; u < n; ++u) {
      v[u] = c * next[u];
      acc[u] += (1.0 - c) * v[u];
    }
  }
  const double tail = std::pow(c, t_m + 1) * static_cast<double>(x.col(j).size()) / static_cast<double>(n);
  for (auto& a : acc) a += tail;
  return acc;
}

/// Dense n x m walk law, column by column.
template <PropagationGraph G>
RowMatrix walk_law(const G& graph, const InteractionMatrix& x, int t_m, double c) {
  RowMatrix y(static_cast<Eigen::Index>(x.n()), static_cast<Eigen::Index>(x.m()));
  for (std::size_t j = 0; j < x.m(); ++j) {
    auto col = walk_law_column(graph, x, j, t_m, c);
    for (std::size_t u = 0; u < x.n(); ++u) y(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(j)) = col[u];
  }
  return y;
}

}  // namespace samwalker
