#pragma once

// Walker/Vose alias tables, single and grouped (many small tables sharing one
// flat buffer, one per softmax group).

#include <cstddef>
#include <span>
#include <vector>

#include "samwalker/error.hpp"
#include "samwalker/rng.hpp"

namespace samwalker {

namespace detail {

/// Builds the table for `w` into prob/alias (both sized w.size()). Returns the
/// total weight.
inline double build_alias(std::span<const double> w, std::span<double> prob, std::span<std::size_t> alias) {
  const std::size_t k = w.size();
  double total = 0.0;
  for (double x : w) total += x;
  if (k == 0) return 0.0;
  if (!(total > 0.0)) throw Error("alias table needs positive total weight");
  std::vector<std::size_t> small, large;
  small.reserve(k);
  large.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    prob[j] = w[j] * static_cast<double>(k) / total;
    alias[j] = j;
    (prob[j] < 1.0 ? small : large).push_back(j);
  }
  while (!small.empty() && !large.empty()) {
    std::size_t s = small.back(), l = large.back();
    small.pop_back();
    alias[s] = l;
    prob[l] = (prob[l] + prob[s]) - 1.0;
    if (prob[l] < 1.0) {
      large.pop_back();
      small.push_back(l);
    }
  }
  for (std::size_t j : large) prob[j] = 1.0;
  for (std::size_t j : small) prob[j] = 1.0;
  return total;
}

template <class G>
inline std::size_t draw_alias(std::span<const double> prob, std::span<const std::size_t> alias, G& rng) {
  const std::size_t j = static_cast<std::size_t>(uniform_index(rng, prob.size()));
  return uniform01(rng) < prob[j] ? j : alias[j];
}

}  // namespace detail

class AliasTable {
 public:
  AliasTable() = default;
  explicit AliasTable(std::span<const double> weights) : prob_(weights.size()), alias_(weights.size()) {
    total_ = detail::build_alias(weights, prob_, alias_);
  }
  template <class G>
  std::size_t sample(G& rng) const {
    return detail::draw_alias(std::span<const double>(prob_), std::span<const std::size_t>(alias_), rng);
  }
  std::size_t size() const noexcept { return prob_.size(); }
  double total() const noexcept { return total_; }

 private:
  std::vector<double> prob_;
  std::vector<std::size_t> alias_;
  double total_ = 0.0;
};

struct SoftmaxGroup {
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// One alias table per group over a flat weight array. Draws return the flat
/// index (offset + position).
class GroupedAlias {
 public:
  GroupedAlias() = default;
  GroupedAlias(std::span<const double> weights, std::span<const SoftmaxGroup> groups)
      : prob_(weights.size(), 1.0), alias_(weights.size(), 0) {
    for (auto g : groups) {
      if (g.size == 0) continue;
      detail::build_alias(weights.subspan(g.offset, g.size), std::span<double>(prob_).subspan(g.offset, g.size),
                          std::span<std::size_t>(alias_).subspan(g.offset, g.size));
    }
  }
  template <class G>
  std::size_t sample(SoftmaxGroup g, G& rng) const {
    return g.offset + detail::draw_alias(std::span<const double>(prob_).subspan(g.offset, g.size),
                                         std::span<const std::size_t>(alias_).subspan(g.offset, g.size), rng);
  }

 private:
  std::vector<double> prob_;
  std::vector<std::size_t> alias_;
};

}  // namespace samwalker
