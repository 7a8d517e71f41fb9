#pragma once

// Brute-force references for small instances: dense transition matrices built
// by block matrix products, closed-form and depth-limited exposure laws, and
// the exact confidence-weighted gradient. Production code never calls these;
// tests, acceptance runs and the bench CLI do.

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "samwalker/corpus.hpp"
#include "samwalker/error.hpp"
#include "samwalker/factors.hpp"
#include "samwalker/graphnet.hpp"

namespace samwalker::oracle {

inline constexpr std::size_t kMaxDenseUsers = 500;
inline constexpr std::size_t kMaxDensePairs = 1'000'000;

using Dense = Eigen::MatrixXd;

enum class ExposureVariant { closed_form, truncated };

struct DenseExposure {
  Dense gamma;  // n x m
  ExposureVariant variant = ExposureVariant::closed_form;
};

inline void guard_users(std::size_t n) {
  if (n > kMaxDenseUsers)
    throw GuardError("dense oracle refuses n = " + std::to_string(n) + " > " + std::to_string(kMaxDenseUsers));
}

inline Dense to_dense(const InteractionMatrix& x) {
  Dense d = Dense::Zero(static_cast<Eigen::Index>(x.n()), static_cast<Eigen::Index>(x.m()));
  for (auto [u, i] : x.pairs()) d(u, i) = 1.0;
  return d;
}

inline Dense dense_transition(const SocialGraph& g) {
  guard_users(g.n());
  Dense w = Dense::Zero(static_cast<Eigen::Index>(g.n()), static_cast<Eigen::Index>(g.n()));
  for (std::size_t u = 0; u < g.n(); ++u) {
    auto nb = g.neighbors(u);
    auto wt = g.edge_weights(u);
    for (std::size_t k = 0; k < nb.size(); ++k) w(static_cast<Eigen::Index>(u), nb[k]) += wt[k];
  }
  return w;
}

/// W+ = A Phi(u<-i) Phi(i<-u) + (I - A) Phi(u<-c) Phi(c<-u), with the item and
/// community factors stored as (destination-side rows) x (source users).
inline Dense dense_transition(const PseudoGraph& g) {
  guard_users(g.n());
  const auto n = static_cast<Eigen::Index>(g.n()), m = static_cast<Eigen::Index>(g.m()),
             k = static_cast<Eigen::Index>(g.communities());
  Dense ui = Dense::Zero(n, m), iu = Dense::Zero(m, n), uc = Dense::Zero(n, k), cu = Dense::Zero(k, n);
  Eigen::VectorXd a(n);
  for (Eigen::Index u = 0; u < n; ++u) {
    auto items = g.user_items(static_cast<std::size_t>(u));
    auto w = g.user_item_weights(static_cast<std::size_t>(u));
    for (std::size_t j = 0; j < items.size(); ++j) ui(u, items[j]) = w[j];
    auto wc = g.user_community_weights(static_cast<std::size_t>(u));
    for (Eigen::Index c = 0; c < k; ++c) uc(u, c) = wc[static_cast<std::size_t>(c)];
    a(u) = g.mixing(static_cast<std::size_t>(u));
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    auto users = g.item_users(static_cast<std::size_t>(i));
    auto w = g.item_user_weights(static_cast<std::size_t>(i));
    for (std::size_t j = 0; j < users.size(); ++j) iu(i, users[j]) = w[j];
  }
  for (Eigen::Index c = 0; c < k; ++c) {
    auto w = g.community_user_weights(static_cast<std::size_t>(c));
    for (Eigen::Index v = 0; v < n; ++v) cu(c, v) = w[static_cast<std::size_t>(v)];
  }
  return a.asDiagonal() * (ui * iu) + (Eigen::VectorXd::Ones(n) - a).asDiagonal() * (uc * cu);
}

inline Dense dense_transition(const GraphModel& g) {
  return std::visit([](const auto& graph) { return dense_transition(graph); }, g);
}

/// Solves (I - cW) Y = (1 - c) X by dense LU.
inline DenseExposure dense_gamma_closed_form(const Dense& w, const Dense& x, double c) {
  guard_users(static_cast<std::size_t>(w.rows()));
  if (!(c >= 0.0 && c < 1.0)) throw ConfigError("closed form needs 0 <= c < 1");
  const Dense lhs = Dense::Identity(w.rows(), w.cols()) - c * w;
  DenseExposure out{lhs.partialPivLu().solve((1.0 - c) * x), ExposureVariant::closed_form};
  const double residual = (lhs * out.gamma - (1.0 - c) * x).cwiseAbs().maxCoeff();
  if (!(residual < 1e-10)) throw Error("closed-form residual " + std::to_string(residual) + " exceeds 1e-10");
  return out;
}

/// Law of the depth-limited walk with uniform restart:
///   sum_{t=0}^{t_m} (cW)^t (1-c) X + (cW)^{t_m} c U X,   U = 11^T / n.
inline DenseExposure dense_gamma_truncated(const Dense& w, const Dense& x, double c, int t_m) {
  const auto n = w.rows();
  guard_users(static_cast<std::size_t>(n));
  if (t_m < 0) throw ConfigError("t_m must be >= 0");
  Dense power = Dense::Identity(n, n);  // (cW)^t
  Dense acc = Dense::Zero(x.rows(), x.cols());
  for (int t = 0; t <= t_m; ++t) {
    if (t > 0) power = power * (c * w);
    acc += power * ((1.0 - c) * x);
  }
  const Dense uniform = Dense::Constant(n, n, 1.0 / static_cast<double>(n));
  acc += power * (c * uniform * x);
  return {acc, ExposureVariant::truncated};
}

/// Per-user stopping distribution of the depth-limited walk (rows sum to 1).
inline Dense truncated_stop_distribution(const Dense& w, double c, int t_m) {
  const auto n = w.rows();
  Dense power = Dense::Identity(n, n), acc = Dense::Zero(n, n);
  for (int t = 0; t <= t_m; ++t) {
    if (t > 0) power = power * (c * w);
    acc += (1.0 - c) * power;
  }
  return acc + c * power * Dense::Constant(n, n, 1.0 / static_cast<double>(n));
}

struct FullGradient {
  Dense P;  // n x d
  Dense Q;  // m x d
};

/// sum_{u,i} gamma_ui d l(x_ui, sigmoid(p_u . q_i)) / d theta, no regularizer.
inline FullGradient exact_full_gradient(const PreferenceFactors& f, const Dense& gamma, const Dense& x) {
  const auto n = gamma.rows(), m = gamma.cols();
  if (static_cast<std::size_t>(n) * static_cast<std::size_t>(m) > kMaxDensePairs)
    throw GuardError("exact gradient refuses n*m > 1e6");
  const Dense P = f.P, Q = f.Q;
  const Dense scores = P * Q.transpose();
  Dense residual(n, m);
  for (Eigen::Index u = 0; u < n; ++u)
    for (Eigen::Index i = 0; i < m; ++i) residual(u, i) = gamma(u, i) * (x(u, i) - sigmoid(scores(u, i)));
  return {residual * Q, residual.transpose() * P};
}

}  // namespace samwalker::oracle
