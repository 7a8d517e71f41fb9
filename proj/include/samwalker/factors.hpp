#pragma once

// Matrix-factorization preference model: p(x_ui = 1 | exposed) = sigmoid(p_u . q_i).

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>

#include "samwalker/binary_io.hpp"
#include "samwalker/error.hpp"
#include "samwalker/rng.hpp"

namespace samwalker {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Output clamp for sigmoid probabilities.
inline constexpr double kProbabilityClamp = 1e-7;

struct ModelConfig {
  int d = 32;
  double epsilon = 0.001;
  double eta = 0.5;
  double learning_rate_theta = 0.05;
  double learning_rate_phi = 0.01;
  double l2_theta = 1e-4;

  void validate() const {
    if (d < 1) throw ConfigError("d must be >= 1");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("epsilon must be in (0,1)");
    if (!(eta > 0.0 && eta < 1.0)) throw ConfigError("eta must be in (0,1)");
  }
};

struct PreferenceFactors {
  RowMatrix P;  // n x d
  RowMatrix Q;  // m x d

  std::size_t n() const noexcept { return static_cast<std::size_t>(P.rows()); }
  std::size_t m() const noexcept { return static_cast<std::size_t>(Q.rows()); }
  int d() const noexcept { return static_cast<int>(P.cols()); }

  /// i.i.d. N(0, std^2) entries.
  static PreferenceFactors random(std::size_t n, std::size_t m, int d, Rng& rng, double std = 0.1) {
    if (d < 1) throw ConfigError("d must be >= 1");
    PreferenceFactors f;
    f.P.resize(static_cast<Eigen::Index>(n), d);
    f.Q.resize(static_cast<Eigen::Index>(m), d);
    for (Eigen::Index k = 0; k < f.P.size(); ++k) f.P.data()[k] = std * standard_normal(rng);
    for (Eigen::Index k = 0; k < f.Q.size(); ++k) f.Q.data()[k] = std * standard_normal(rng);
    return f;
  }

  double score(std::size_t u, std::size_t i) const {
    return P.row(static_cast<Eigen::Index>(u)).dot(Q.row(static_cast<Eigen::Index>(i)));
  }
};

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double clamp_probability(double b) { return std::clamp(b, kProbabilityClamp, 1.0 - kProbabilityClamp); }

inline double predict(const PreferenceFactors& f, std::size_t u, std::size_t i) {
  if (u >= f.n() || i >= f.m())
    throw IndexError("predict(" + std::to_string(u) + "," + std::to_string(i) + ") out of range");
  return clamp_probability(sigmoid(f.score(u, i)));
}

/// a*log(b) + (1-a)*log(1-b) with 0*log(0) := 0. `a` may be fractional.
inline double bern_ll(double a, double b) {
  double out = 0.0;
  if (a != 0.0) out += a * std::log(b);
  if (a != 1.0) out += (1.0 - a) * std::log1p(-b);
  return out;
}

struct PairGradient {
  Vector grad_pu;
  Vector grad_qi;
};

/// Ascent direction of l(x, sigmoid(p_u . q_i)) - l2/2 (|p_u|^2 + |q_i|^2).
/// The confidence weight is applied by the caller or absorbed by the sampler.
inline PairGradient grad_theta_pair(const PreferenceFactors& f, std::size_t u, std::size_t i, double x,
                                    double l2_theta = 0.0) {
  auto pu = f.P.row(static_cast<Eigen::Index>(u));
  auto qi = f.Q.row(static_cast<Eigen::Index>(i));
  const double residual = x - sigmoid(pu.dot(qi));
  return {residual * qi.transpose() - l2_theta * pu.transpose(), residual * pu.transpose() - l2_theta * qi.transpose()};
}

// ---- checkpoint -------------------------------------------------------------

inline constexpr std::uint64_t kFactorsMagic = 0x53574652'46414354ULL;  // "SWFRFACT"
inline constexpr std::uint64_t kFactorsVersion = 1;

inline void write_factors(std::ostream& out, const PreferenceFactors& f) {
  io::put_u64(out, kFactorsMagic);
  io::put_u64(out, kFactorsVersion);
  io::put_u64(out, f.n());
  io::put_u64(out, f.m());
  io::put_u64(out, static_cast<std::uint64_t>(f.d()));
  io::put_f64s(out, {f.P.data(), static_cast<std::size_t>(f.P.size())});
  io::put_f64s(out, {f.Q.data(), static_cast<std::size_t>(f.Q.size())});
}

inline PreferenceFactors read_factors(std::istream& in) {
  if (io::get_u64(in) != kFactorsMagic) throw Error("not a factors checkpoint");
  if (io::get_u64(in) != kFactorsVersion) throw Error("unsupported factors checkpoint version");
  const auto n = io::get_u64(in), m = io::get_u64(in), d = io::get_u64(in);
  if (d < 1 || d > (1u << 20) || n > (1ull << 32) || m > (1ull << 32)) throw Error("corrupt factors header");
  PreferenceFactors f;
  f.P.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  f.Q.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
  for (Eigen::Index k = 0; k < f.P.size(); ++k) f.P.data()[k] = io::get_f64(in);
  for (Eigen::Index k = 0; k < f.Q.size(); ++k) f.Q.data()[k] = io::get_f64(in);
  return f;
}

inline void save_factors(const std::string& path, const PreferenceFactors& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  write_factors(out, f);
}

inline PreferenceFactors load_factors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return read_factors(in);
}

}  // namespace samwalker
