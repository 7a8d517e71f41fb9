#pragma once

// Planted-community generator following the exposure model's generative
// process: a_ui ~ Bernoulli(mu_ui), x_ui ~ Bernoulli(sigmoid(p_u . q_i)) when
// exposed and Bernoulli(epsilon) otherwise. Exposure is high inside a user's
// community and low outside it; the social graph links mostly within
// communities.

#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

#include "samwalker/corpus.hpp"
#include "samwalker/error.hpp"
#include "samwalker/factors.hpp"
#include "samwalker/rng.hpp"

namespace samwalker {

struct SyntheticSpec {
  std::size_t n = 300;
  std::size_t m = 500;
  std::size_t communities = 5;
  int d = 8;
  double exposure_in = 0.5;      // mu inside the user's community
  double exposure_out = 0.01;    // mu elsewhere
  double preference_scale = 1.0; // std of the planted factor entries
  double preference_bias = -0.5; // added to every planted score
  double epsilon = 0.001;
  std::size_t social_degree = 5; // out-edges per user
  double social_noise = 0.1;     // chance an edge leaves the community
  std::uint64_t seed = 1;

  void validate() const {
    if (n < 1 || m < 1 || communities < 1) throw ConfigError("synthetic instance needs n, m, communities >= 1");
    if (d < 1) throw ConfigError("synthetic d must be >= 1");
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(exposure_in) || !prob(exposure_out) || !prob(epsilon) || !prob(social_noise))
      throw ConfigError("synthetic probabilities must lie in [0,1]");
  }
};

struct SyntheticData {
  InteractionMatrix x;
  SocialEdges social;
  std::vector<Index> user_community;
  std::vector<Index> item_community;
  PreferenceFactors truth;
};

inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng = stream_rng(spec.seed, 0x5e7d, 0);
  SyntheticData out;
  out.user_community.resize(spec.n);
  out.item_community.resize(spec.m);
  for (std::size_t u = 0; u < spec.n; ++u) out.user_community[u] = static_cast<Index>(u % spec.communities);
  for (std::size_t i = 0; i < spec.m; ++i) out.item_community[i] = static_cast<Index>(i % spec.communities);
  out.truth = PreferenceFactors::random(spec.n, spec.m, spec.d, rng, spec.preference_scale);

  std::vector<std::pair<Index, Index>> pairs;
  for (std::size_t u = 0; u < spec.n; ++u)
    for (std::size_t i = 0; i < spec.m; ++i) {
      const double mu = out.user_community[u] == out.item_community[i] ? spec.exposure_in : spec.exposure_out;
      const bool exposed = uniform01(rng) < mu;
      const double p = exposed ? sigmoid(out.truth.score(u, i) + spec.preference_bias) : spec.epsilon;
      if (uniform01(rng) < p) pairs.emplace_back(static_cast<Index>(u), static_cast<Index>(i));
    }
  out.x = InteractionMatrix::from_pairs(spec.n, spec.m, std::move(pairs));

  std::vector<std::vector<Index>> members(spec.communities);
  for (std::size_t u = 0; u < spec.n; ++u) members[out.user_community[u]].push_back(static_cast<Index>(u));
  std::vector<std::pair<Index, Index>> edges;
  for (std::size_t u = 0; u < spec.n; ++u)
    for (std::size_t k = 0; k < spec.social_degree; ++k) {
      Index v;
      if (uniform01(rng) < spec.social_noise) {
        v = static_cast<Index>(uniform_index(rng, spec.n));
      } else {
        const auto& group = members[out.user_community[u]];
        v = group[uniform_index(rng, group.size())];
      }
      edges.emplace_back(static_cast<Index>(u), v);
    }
  out.social = SocialEdges::from_pairs(spec.n, edges);
  return out;
}

}  // namespace samwalker
