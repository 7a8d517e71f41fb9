#pragma once

// Ingestion of raw interaction / social-edge files, binarization, popularity
// filtering, train/test splitting, and the sparse matrix views used by every
// other module.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "samwalker/error.hpp"
#include "samwalker/rng.hpp"

namespace samwalker {

using Index = std::uint32_t;

struct Interaction {
  Index user = 0;
  Index item = 0;
  std::optional<double> raw_weight;
};

/// Dense ids in order of first appearance.
class IdMap {
 public:
  Index intern(std::string_view raw) {
    auto [it, inserted] = index_.try_emplace(std::string(raw), static_cast<Index>(raw_.size()));
    if (inserted) raw_.emplace_back(raw);
    return it->second;
  }
  std::optional<Index> find(std::string_view raw) const {
    auto it = index_.find(std::string(raw));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  const std::string& raw(Index dense) const { return raw_.at(dense); }
  std::size_t size() const noexcept { return raw_.size(); }
  const std::vector<std::string>& raw_ids() const noexcept { return raw_; }

  static IdMap from_raw(std::vector<std::string> raw) {
    IdMap map;
    for (auto& r : raw) map.intern(r);
    return map;
  }

 private:
  std::vector<std::string> raw_;
  std::unordered_map<std::string, Index> index_;
};

struct InteractionLog {
  std::vector<Interaction> rows;
  IdMap users;
  IdMap items;
};

enum class FileFormat { tsv, csv, automatic };

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  if (delim == ' ') {
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
      std::size_t j = i;
      while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
      if (j > i) out.push_back(line.substr(i, j - i));
      i = j;
    }
    return out;
  }
  std::size_t start = 0;
  for (;;) {
    std::size_t pos = line.find(delim, start);
    std::string_view f = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t')) f.remove_suffix(1);
    out.push_back(f);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline char pick_delimiter(FileFormat format, std::string_view first_line) {
  switch (format) {
    case FileFormat::tsv: return '\t';
    case FileFormat::csv: return ',';
    case FileFormat::automatic: break;
  }
  if (first_line.find('\t') != std::string_view::npos) return '\t';
  if (first_line.find(',') != std::string_view::npos) return ',';
  return ' ';
}

inline bool skippable(std::string_view line) {
  auto first = line.find_first_not_of(" \t\r");
  return first == std::string_view::npos || line[first] == '#';
}

/// Reads non-comment lines, yielding (line number, fields) to `fn`.
template <class Fn>
void for_each_record(const std::string& path, FileFormat format, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::string line;
  std::size_t lineno = 0;
  std::optional<char> delim;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (skippable(line)) continue;
    if (!delim) delim = pick_delimiter(format, line);
    fn(lineno, split_fields(line, *delim));
  }
}

}  // namespace detail

/// Parses `<user> <item> [<weight>]` records. Raw ids are arbitrary tokens.
inline InteractionLog load_interactions(const std::string& path, FileFormat format = FileFormat::automatic) {
  InteractionLog log;
  detail::for_each_record(path, format, [&](std::size_t lineno, const std::vector<std::string_view>& f) {
    if (f.size() < 2 || f[0].empty() || f[1].empty())
      throw ParseError(path, lineno, "expected at least 2 fields <user> <item>");
    Interaction it;
    it.user = log.users.intern(f[0]);
    it.item = log.items.intern(f[1]);
    if (f.size() >= 3 && !f[2].empty()) {
      try {
        std::size_t used = 0;
        it.raw_weight = std::stod(std::string(f[2]), &used);
      } catch (const std::exception&) {
        throw ParseError(path, lineno, "weight field is not a number");
      }
    }
    log.rows.push_back(it);
  });
  if (log.rows.empty()) throw EmptyDatasetError(path + " has no interactions");
  return log;
}

/// Sparse binary n x m matrix held in both CSR (rows) and CSC (cols) form.
class InteractionMatrix {
 public:
  InteractionMatrix() = default;

  /// Duplicates collapse to a single positive.
  static InteractionMatrix from_pairs(std::size_t n, std::size_t m, std::vector<std::pair<Index, Index>> pairs) {
    for (auto [u, i] : pairs)
      if (u >= n || i >= m) throw IndexError("pair (" + std::to_string(u) + "," + std::to_string(i) + ") out of range");
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    InteractionMatrix x;
    x.n_ = n;
    x.m_ = m;
    x.row_offsets_.assign(n + 1, 0);
    x.col_offsets_.assign(m + 1, 0);
    for (auto [u, i] : pairs) {
      ++x.row_offsets_[u + 1];
      ++x.col_offsets_[i + 1];
    }
    for (std::size_t u = 0; u < n; ++u) x.row_offsets_[u + 1] += x.row_offsets_[u];
    for (std::size_t i = 0; i < m; ++i) x.col_offsets_[i + 1] += x.col_offsets_[i];
    x.row_items_.resize(pairs.size());
    x.col_users_.resize(pairs.size());
    std::vector<std::size_t> col_fill(x.col_offsets_.begin(), x.col_offsets_.end() - 1);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      x.row_items_[k] = pairs[k].second;
      x.col_users_[col_fill[pairs[k].second]++] = pairs[k].first;
    }
    return x;
  }

  static InteractionMatrix from_dense(const std::vector<std::vector<int>>& dense) {
    std::vector<std::pair<Index, Index>> pairs;
    std::size_t m = dense.empty() ? 0 : dense.front().size();
    for (std::size_t u = 0; u < dense.size(); ++u)
      for (std::size_t i = 0; i < m; ++i)
        if (dense[u][i]) pairs.emplace_back(static_cast<Index>(u), static_cast<Index>(i));
    return from_pairs(dense.size(), m, std::move(pairs));
  }

  std::size_t n() const noexcept { return n_; }
  std::size_t m() const noexcept { return m_; }
  std::size_t nnz() const noexcept { return row_items_.size(); }

  std::span<const Index> row(std::size_t u) const {
    return {row_items_.data() + row_offsets_[u], row_offsets_[u + 1] - row_offsets_[u]};
  }
  std::span<const Index> col(std::size_t i) const {
    return {col_users_.data() + col_offsets_[i], col_offsets_[i + 1] - col_offsets_[i]};
  }
  std::size_t row_offset(std::size_t u) const { return row_offsets_[u]; }
  std::size_t col_offset(std::size_t i) const { return col_offsets_[i]; }

  bool contains(std::size_t u, std::size_t i) const {
    auto r = row(u);
    return std::binary_search(r.begin(), r.end(), static_cast<Index>(i));
  }
  int value(std::size_t u, std::size_t i) const { return contains(u, i) ? 1 : 0; }

  std::vector<std::pair<Index, Index>> pairs() const {
    std::vector<std::pair<Index, Index>> out;
    out.reserve(nnz());
    for (std::size_t u = 0; u < n_; ++u)
      for (Index i : row(u)) out.emplace_back(static_cast<Index>(u), i);
    return out;
  }

  friend bool operator==(const InteractionMatrix& a, const InteractionMatrix& b) {
    return a.n_ == b.n_ && a.m_ == b.m_ && a.row_offsets_ == b.row_offsets_ && a.row_items_ == b.row_items_;
  }

 private:
  std::size_t n_ = 0;
  std::size_t m_ = 0;
  std::vector<std::size_t> row_offsets_{0};
  std::vector<Index> row_items_;
  std::vector<std::size_t> col_offsets_{0};
  std::vector<Index> col_users_;
};

/// Directed social graph; neighbor lists sorted and duplicate free.
struct SocialEdges {
  std::size_t n = 0;
  std::vector<std::vector<Index>> neighbors;

  std::size_t edge_count() const {
    std::size_t e = 0;
    for (auto& l : neighbors) e += l.size();
    return e;
  }

  static SocialEdges from_pairs(std::size_t n, const std::vector<std::pair<Index, Index>>& edges, bool symmetrize = false) {
    SocialEdges s;
    s.n = n;
    s.neighbors.assign(n, {});
    for (auto [a, b] : edges) {
      if (a >= n || b >= n) throw IndexError("social edge out of range");
      if (a == b) continue;
      s.neighbors[a].push_back(b);
      if (symmetrize) s.neighbors[b].push_back(a);
    }
    for (auto& l : s.neighbors) {
      std::sort(l.begin(), l.end());
      l.erase(std::unique(l.begin(), l.end()), l.end());
    }
    return s;
  }
};

/// Result of filtering: the matrix plus, for each new dense id, the id it had
/// in the input.
struct FilteredMatrix {
  InteractionMatrix matrix;
  std::vector<Index> user_origin;
  std::vector<Index> item_origin;
};

inline FilteredMatrix binarize_and_filter(const InteractionMatrix& x, std::size_t min_item_count,
                                          std::size_t max_item_count) {
  if (min_item_count < 1) throw ConfigError("min_item_count must be >= 1");
  if (max_item_count < min_item_count) throw ConfigError("max_item_count must be >= min_item_count");
  std::vector<char> keep_item(x.m(), 1);
  // Item counts do not depend on which users survive, so this settles in one
  // pass; the loop is a guard.
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t i = 0; i < x.m(); ++i) {
      if (!keep_item[i]) continue;
      std::size_t c = x.col(i).size();
      if (c < min_item_count || c > max_item_count) {
        keep_item[i] = 0;
        changed = true;
      }
    }
  }
  FilteredMatrix out;
  std::vector<Index> item_new(x.m(), 0);
  for (std::size_t i = 0; i < x.m(); ++i)
    if (keep_item[i]) {
      item_new[i] = static_cast<Index>(out.item_origin.size());
      out.item_origin.push_back(static_cast<Index>(i));
    }
  std::vector<std::pair<Index, Index>> pairs;
  for (std::size_t u = 0; u < x.n(); ++u) {
    bool any = false;
    for (Index i : x.row(u))
      if (keep_item[i]) {
        if (!any) {
          out.user_origin.push_back(static_cast<Index>(u));
          any = true;
        }
        pairs.emplace_back(static_cast<Index>(out.user_origin.size() - 1), item_new[i]);
      }
  }
  if (pairs.empty()) throw EmptyDatasetError("every item was removed by the popularity filter");
  out.matrix = InteractionMatrix::from_pairs(out.user_origin.size(), out.item_origin.size(), std::move(pairs));
  return out;
}

/// A filtered dataset with raw-id maps attached.
struct Corpus {
  InteractionMatrix matrix;
  IdMap users;
  IdMap items;
};

/// Binarizes a raw log (weights are dropped) and applies the item popularity
/// bounds. Users left without positives are removed.
inline Corpus binarize_and_filter(const InteractionLog& log, std::size_t min_item_count = 3,
                                  std::size_t max_item_count = 100) {
  std::vector<std::pair<Index, Index>> pairs;
  pairs.reserve(log.rows.size());
  for (const auto& r : log.rows) pairs.emplace_back(r.user, r.item);
  auto raw = InteractionMatrix::from_pairs(log.users.size(), log.items.size(), std::move(pairs));
  auto f = binarize_and_filter(raw, min_item_count, max_item_count);
  Corpus c;
  c.matrix = std::move(f.matrix);
  for (Index u : f.user_origin) c.users.intern(log.users.raw(u));
  for (Index i : f.item_origin) c.items.intern(log.items.raw(i));
  return c;
}

/// Loads `<user> <friend>` edges, keeping only users known to `users`.
inline SocialEdges load_social(const std::string& path, const IdMap& users, bool symmetrize = false,
                               FileFormat format = FileFormat::automatic) {
  std::vector<std::pair<Index, Index>> edges;
  detail::for_each_record(path, format, [&](std::size_t lineno, const std::vector<std::string_view>& f) {
    if (f.size() < 2 || f[0].empty() || f[1].empty())
      throw ParseError(path, lineno, "expected 2 fields <user> <friend>");
    auto a = users.find(f[0]);
    auto b = users.find(f[1]);
    if (a && b) edges.emplace_back(*a, *b);
  });
  return SocialEdges::from_pairs(users.size(), edges, symmetrize);
}

struct SplitSpec {
  double test_fraction = 0.2;
  std::optional<int> folds;
  int fold_index = 0;
  std::uint64_t seed = 0;
};

struct TrainTestSplit {
  InteractionMatrix train;
  InteractionMatrix test;
};

/// Per-user seeded shuffle of positives. Holdout share is floor(k * fraction),
/// or every folds-th position in k-fold mode; at least one positive always
/// stays in train.
inline TrainTestSplit split_train_test(const InteractionMatrix& x, const SplitSpec& spec) {
  if (spec.folds) {
    if (*spec.folds < 2) throw ConfigError("folds must be >= 2");
    if (spec.fold_index < 0 || spec.fold_index >= *spec.folds) throw ConfigError("fold_index out of range");
  } else if (!(spec.test_fraction >= 0.0 && spec.test_fraction < 1.0)) {
    throw ConfigError("test_fraction must be in [0,1)");
  }
  std::vector<std::pair<Index, Index>> train, test;
  for (std::size_t u = 0; u < x.n(); ++u) {
    auto r = x.row(u);
    std::vector<Index> items(r.begin(), r.end());
    auto rng = stream_rng(spec.seed, 0x5b11f, u);
    for (std::size_t k = items.size(); k > 1; --k) std::swap(items[k - 1], items[uniform_index(rng, k)]);
    const std::size_t k = items.size();
    std::vector<char> held(k, 0);
    if (spec.folds) {
      for (std::size_t p = 0; p < k; ++p) held[p] = static_cast<int>(p % *spec.folds) == spec.fold_index;
      std::size_t n_held = static_cast<std::size_t>(std::count(held.begin(), held.end(), 1));
      if (n_held == k && k > 0) held[0] = 0;
    } else {
      std::size_t n_test = static_cast<std::size_t>(std::floor(static_cast<double>(k) * spec.test_fraction));
      if (k > 0) n_test = std::min(n_test, k - 1);
      for (std::size_t p = 0; p < n_test; ++p) held[p] = 1;
    }
    for (std::size_t p = 0; p < k; ++p) (held[p] ? test : train).emplace_back(static_cast<Index>(u), items[p]);
  }
  return {InteractionMatrix::from_pairs(x.n(), x.m(), std::move(train)),
          InteractionMatrix::from_pairs(x.n(), x.m(), std::move(test))};
}

// ---- dense-id file IO -------------------------------------------------------

inline void write_pairs(const std::string& path, const InteractionMatrix& x) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  for (auto [u, i] : x.pairs()) out << u << '\t' << i << '\n';
}

inline InteractionMatrix read_pairs(const std::string& path, std::size_t n, std::size_t m) {
  std::vector<std::pair<Index, Index>> pairs;
  detail::for_each_record(path, FileFormat::automatic, [&](std::size_t lineno, const std::vector<std::string_view>& f) {
    if (f.size() < 2) throw ParseError(path, lineno, "expected <user> <item>");
    try {
      pairs.emplace_back(static_cast<Index>(std::stoul(std::string(f[0]))),
                         static_cast<Index>(std::stoul(std::string(f[1]))));
    } catch (const std::exception&) {
      throw ParseError(path, lineno, "dense ids must be non-negative integers");
    }
  });
  return InteractionMatrix::from_pairs(n, m, std::move(pairs));
}

inline void write_social(const std::string& path, const SocialEdges& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  for (std::size_t u = 0; u < s.n; ++u)
    for (Index v : s.neighbors[u]) out << u << '\t' << v << '\n';
}

inline SocialEdges read_social(const std::string& path, std::size_t n) {
  std::vector<std::pair<Index, Index>> edges;
  detail::for_each_record(path, FileFormat::automatic, [&](std::size_t lineno, const std::vector<std::string_view>& f) {
    if (f.size() < 2) throw ParseError(path, lineno, "expected <user> <friend>");
    edges.emplace_back(static_cast<Index>(std::stoul(std::string(f[0]))),
                       static_cast<Index>(std::stoul(std::string(f[1]))));
  });
  return SocialEdges::from_pairs(n, edges);
}

/// Two-column `<raw_id>\t<dense_id>` sidecar.
inline void write_id_map(const std::string& path, const IdMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  for (std::size_t k = 0; k < map.size(); ++k) out << map.raw(static_cast<Index>(k)) << '\t' << k << '\n';
}

inline IdMap read_id_map(const std::string& path) {
  std::vector<std::pair<std::size_t, std::string>> rows;
  detail::for_each_record(path, FileFormat::tsv, [&](std::size_t lineno, const std::vector<std::string_view>& f) {
    if (f.size() < 2) throw ParseError(path, lineno, "expected <raw_id> <dense_id>");
    rows.emplace_back(std::stoul(std::string(f[1])), std::string(f[0]));
  });
  std::sort(rows.begin(), rows.end());
  std::vector<std::string> raw;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k].first != k) throw ParseError(path, k + 1, "dense ids must be contiguous from 0");
    raw.push_back(std::move(rows[k].second));
  }
  return IdMap::from_raw(std::move(raw));
}

}  // namespace samwalker
