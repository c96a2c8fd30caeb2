#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <random>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "idiomkit/ast.hpp"
#include "idiomkit/fragment.hpp"
#include "idiomkit/grammar.hpp"

namespace idiomkit {

class MinerError : public Error {
 public:
  using Error::Error;
};

enum class Blocking : std::uint8_t { PerSite, TypeBased };

struct MinerConfig {
  double alpha = 5.0;     // PYP concentration
  double discount = 0.5;  // PYP discount, in [0,1)
  int iterations = 10;
  double p_stop = 0.5;    // base measure: probability a nonterminal leaf is a hole
  std::uint64_t seed = 0;
  Blocking blocking = Blocking::PerSite;
  int min_count = 2;      // extraction threshold on n_f

  void validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw MinerError("alpha must be a nonnegative real");
    if (!(discount >= 0.0 && discount < 1.0)) throw MinerError("discount must lie in [0,1)");
    if (iterations < 0) throw MinerError("iterations must be nonnegative");
    if (!(p_stop > 0.0 && p_stop < 1.0)) throw MinerError("p_stop must lie in (0,1)");
    if (min_count < 1) throw MinerError("min_count must be positive");
  }
};

using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// log(exp(a) + exp(b)) with -inf handled.
inline double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

// ---------------------------------------------------------------------------
// Base grammar G0: a PCFG with add-kappa smoothed production probabilities.

class BaseGrammar {
 public:
  BaseGrammar() = default;

  static BaseGrammar from_probabilities(std::vector<double> probs) {
    BaseGrammar b;
    b.log_probs_.reserve(probs.size());
    for (double p : probs) b.log_probs_.push_back(std::log(p));
    b.probs_ = std::move(probs);
    return b;
  }

  double prob(int production) const { return probs_.at(production); }
  double log_prob(int production) const { return log_probs_.at(production); }
  std::span<const double> probabilities() const { return probs_; }

 private:
  std::vector<double> probs_;
  std::vector<double> log_probs_;
};

/// p0(R | lhs) = (count(R) + kappa) / (count(lhs) + kappa * |productions(lhs)|).
inline BaseGrammar estimate_base(const Grammar& g, std::span<const CorpusEntry> corpus,
                                 double kappa = 1.0) {
  if (corpus.empty()) throw MinerError("cannot estimate base grammar from an empty corpus");
  std::vector<double> prod_counts(g.num_productions(), 0.0);
  for (const auto& e : corpus) {
    for_each_node(e.ast, [&](const AstNode& n, const NodePath&) {
      if (!n.is_token()) prod_counts.at(n.production) += 1.0;
    });
  }
  std::vector<double> lhs_counts(g.num_nonterminals(), 0.0);
  for (const auto& p : g.productions()) lhs_counts[p.lhs] += prod_counts[p.id];
  std::vector<double> probs(g.num_productions());
  for (const auto& p : g.productions()) {
    double k = static_cast<double>(g.productions_for(p.lhs).size());
    probs[p.id] = (prod_counts[p.id] + kappa) / (lhs_counts[p.lhs] + kappa * k);
  }
  return BaseGrammar::from_probabilities(std::move(probs));
}

/// log P0(f) = sum over interior nodes of log p0(R) + holes * log p_stop +
/// non-root interior nodes * log(1 - p_stop). Lexemes are not modeled.
inline double base_fragment_log_prob(const BaseGrammar& base, const FragNode& root, double p_stop) {
  double lp = 0.0;
  auto rec = [&](auto& self, const FragNode& n, bool is_root) -> void {
    if (n.is_hole()) {
      lp += std::log(p_stop);
      return;
    }
    if (n.is_token()) return;
    lp += base.log_prob(n.production);
    if (!is_root) lp += std::log1p(-p_stop);
    for (const auto& c : n.children) self(self, c, false);
  };
  rec(rec, root, true);
  return lp;
}

inline double base_fragment_log_prob(const BaseGrammar& base, const Fragment& f, double p_stop) {
  return base_fragment_log_prob(base, f.root, p_stop);
}

// ---------------------------------------------------------------------------
// Canonical fragment keys. Hole labels are not part of a type's identity.
//
//   interior: 'P' int32 production
//   token:    'T' int32 class, int32 length, bytes
//   hole:     'H' int32 nonterminal

struct EncodedFragment {
  std::string key;
  int root_nonterminal = -1;
  double log_p0 = 0.0;
};

namespace detail {

inline void put_i32(std::string& s, std::int32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  s.append(buf, 4);
}

inline std::int32_t get_i32(const std::string& s, std::size_t& pos) {
  if (pos + 4 > s.size()) throw MinerError("truncated fragment key");
  std::int32_t v;
  std::memcpy(&v, s.data() + pos, 4);
  pos += 4;
  return v;
}

}  // namespace detail

inline EncodedFragment encode_fragment(const BaseGrammar& base, const FragNode& root, double p_stop) {
  EncodedFragment out;
  out.root_nonterminal = root.symbol;
  auto rec = [&](auto& self, const FragNode& n) -> void {
    switch (n.kind) {
      case FragNode::Kind::Hole:
        out.key.push_back('H');
        detail::put_i32(out.key, n.symbol);
        return;
      case FragNode::Kind::Token:
        out.key.push_back('T');
        detail::put_i32(out.key, n.symbol);
        detail::put_i32(out.key, static_cast<std::int32_t>(n.text.size()));
        out.key += n.text;
        return;
      case FragNode::Kind::Interior:
        out.key.push_back('P');
        detail::put_i32(out.key, n.production);
        for (const auto& c : n.children) self(self, c);
        return;
    }
  };
  rec(rec, root);
  out.log_p0 = base_fragment_log_prob(base, root, p_stop);
  return out;
}

/// Rebuilds a fragment from its key; holes get distinct labels l0, l1, ... in
/// depth-first order.
inline FragNode fragment_from_key(const Grammar& g, const std::string& key) {
  std::size_t pos = 0;
  int next_label = 0;
  auto rec = [&](auto& self) -> FragNode {
    if (pos >= key.size()) throw MinerError("truncated fragment key");
    char tag = key[pos++];
    if (tag == 'H') {
      int nt = detail::get_i32(key, pos);
      return FragNode::hole(nt, "l" + std::to_string(next_label++));
    }
    if (tag == 'T') {
      int tc = detail::get_i32(key, pos);
      auto len = static_cast<std::size_t>(detail::get_i32(key, pos));
      if (pos + len > key.size()) throw MinerError("truncated fragment key");
      FragNode t = FragNode::token(tc, key.substr(pos, len));
      pos += len;
      return t;
    }
    if (tag != 'P') throw MinerError("corrupt fragment key");
    int prod = detail::get_i32(key, pos);
    std::vector<FragNode> children;
    for (std::size_t i = 0; i < g.production(prod).rhs.size(); ++i) children.push_back(self(self));
    return FragNode::interior(g, prod, std::move(children));
  };
  FragNode root = rec(rec);
  if (pos != key.size()) throw MinerError("trailing bytes in fragment key");
  return root;
}

// ---------------------------------------------------------------------------
// Pitman-Yor restaurant counts, one restaurant per root nonterminal. Each
// fragment type occupies exactly one table, so K_N counts distinct types.

class PypCounts {
 public:
  struct TypeInfo {
    int root_nonterminal = -1;
    double log_p0 = 0.0;
    long count = 0;
  };

  PypCounts() = default;
  explicit PypCounts(std::size_t num_nonterminals)
      : totals_(num_nonterminals, 0), tables_(num_nonterminals, 0) {}

  void add(const EncodedFragment& f) {
    auto [it, fresh] = types_.try_emplace(f.key, TypeInfo{f.root_nonterminal, f.log_p0, 0});
    if (it->second.count++ == 0) ++tables_.at(f.root_nonterminal);
    ++totals_.at(f.root_nonterminal);
  }

  void remove(const EncodedFragment& f) {
    auto it = types_.find(f.key);
    if (it == types_.end() || it->second.count <= 0) {
      throw MinerError("count table corrupted: removing an unseated fragment");
    }
    --totals_.at(f.root_nonterminal);
    if (--it->second.count == 0) {
      --tables_.at(f.root_nonterminal);
      types_.erase(it);
    }
  }

  long count(const std::string& key) const {
    auto it = types_.find(key);
    return it == types_.end() ? 0 : it->second.count;
  }
  long total(int nonterminal) const { return totals_.at(nonterminal); }
  long tables(int nonterminal) const { return tables_.at(nonterminal); }
  std::size_t num_types() const { return types_.size(); }
  const std::unordered_map<std::string, TypeInfo>& types() const { return types_; }

  /// Restores persisted restaurant totals (for scoring without the state).
  void set_restaurant(int nonterminal, long total, long tables) {
    totals_.at(nonterminal) = total;
    tables_.at(nonterminal) = tables;
  }
  void set_type(const EncodedFragment& f, long count) {
    types_[f.key] = TypeInfo{f.root_nonterminal, f.log_p0, count};
  }

  /// log[(max(n_f - d, 0) + (alpha + d K_N) P0(f)) / (n_N + alpha)], with the
  /// extra customer `extra` (if any) seated first.
  double log_predictive(const EncodedFragment& f, const MinerConfig& cfg,
                        const EncodedFragment* extra = nullptr) const {
    const int nt = f.root_nonterminal;
    double n_f = static_cast<double>(count(f.key));
    double n = static_cast<double>(totals_.at(nt));
    double k = static_cast<double>(tables_.at(nt));
    if (extra != nullptr && extra->root_nonterminal == nt) {
      if (count(extra->key) == 0) k += 1.0;
      n += 1.0;
      if (extra->key == f.key) n_f += 1.0;
    }
    return log_predictive_from(n_f, n, k, f.log_p0, cfg);
  }

  static double log_predictive_from(double n_f, double n, double k, double log_p0,
                                    const MinerConfig& cfg) {
    if (n + cfg.alpha <= 0.0) return log_p0;
    constexpr double neg_inf = -std::numeric_limits<double>::infinity();
    double reuse = std::max(n_f - cfg.discount, 0.0);
    double fresh_weight = cfg.alpha + cfg.discount * k;
    double log_reuse = reuse > 0.0 ? std::log(reuse) : neg_inf;
    double log_fresh = fresh_weight > 0.0 ? std::log(fresh_weight) + log_p0 : neg_inf;
    return log_add(log_reuse, log_fresh) - std::log(n + cfg.alpha);
  }

  friend bool operator==(const PypCounts& a, const PypCounts& b) {
    if (a.totals_ != b.totals_ || a.tables_ != b.tables_ || a.types_.size() != b.types_.size()) {
      return false;
    }
    for (const auto& [key, info] : a.types_) {
      auto it = b.types_.find(key);
      if (it == b.types_.end() || it->second.count != info.count) return false;
    }
    return true;
  }

 private:
  std::unordered_map<std::string, TypeInfo> types_;
  std::vector<long> totals_;
  std::vector<long> tables_;
};

// ---------------------------------------------------------------------------
// Split state: the corpus flattened into pre-order arrays with one split flag
// per interior node. Tree roots are always split.

class SplitState {
 public:
  struct Node {
    int parent = -1;
    int production = -1;  // -1 for tokens
    int symbol = -1;
    int first_child = 0;  // offset into children()
    int num_children = 0;
    std::string lexeme;
  };

  SplitState() = default;

  /// Every interior node starts as its own fragment.
  static SplitState all_split(std::span<const CorpusEntry> corpus) {
    SplitState s;
    for (const auto& e : corpus) {
      s.roots_.push_back(static_cast<int>(s.nodes_.size()));
      s.flatten(e.ast, -1);
    }
    s.split_.assign(s.nodes_.size(), 1);
    for (std::size_t v = 0; v < s.nodes_.size(); ++v) {
      if (s.nodes_[v].parent >= 0 && s.nodes_[v].production >= 0) s.sites_.push_back(static_cast<int>(v));
    }
    return s;
  }

  std::size_t num_nodes() const { return nodes_.size(); }
  std::span<const int> roots() const { return roots_; }
  /// Non-root interior nodes in corpus pre-order.
  std::span<const int> sites() const { return sites_; }
  const Node& node(int v) const { return nodes_[v]; }
  std::span<const int> children(int v) const {
    return std::span<const int>(child_ids_).subspan(nodes_[v].first_child, nodes_[v].num_children);
  }
  bool is_token(int v) const { return nodes_[v].production < 0; }

  bool is_split(int v) const { return split_[v] != 0; }
  void set_split(int v, bool z) {
    if (nodes_[v].parent < 0) {
      if (!z) throw MinerError("tree roots are always split");
      return;
    }
    split_[v] = z ? 1 : 0;
  }
  std::span<const std::uint8_t> split_flags() const { return split_; }

  /// Root of the fragment containing interior node v.
  int fragment_root(int v) const {
    while (!split_[v]) v = nodes_[v].parent;
    return v;
  }

  /// Fragment rooted at `root`, treating `site`'s split flag as `site_split`
  /// (pass site = -1 for no override).
  EncodedFragment encode(const BaseGrammar& base, double p_stop, int root, int site = -1,
                         bool site_split = true) const {
    EncodedFragment out;
    out.root_nonterminal = nodes_[root].symbol;
    const double log_stop = std::log(p_stop);
    const double log_go = std::log1p(-p_stop);
    auto rec = [&](auto& self, int v, bool is_root) -> void {
      const Node& n = nodes_[v];
      if (n.production < 0) {
        out.key.push_back('T');
        detail::put_i32(out.key, n.symbol);
        detail::put_i32(out.key, static_cast<std::int32_t>(n.lexeme.size()));
        out.key += n.lexeme;
        return;
      }
      if (!is_root) {
        bool z = v == site ? site_split : split_[v] != 0;
        if (z) {
          out.key.push_back('H');
          detail::put_i32(out.key, n.symbol);
          out.log_p0 += log_stop;
          return;
        }
        out.log_p0 += log_go;
      }
      out.key.push_back('P');
      detail::put_i32(out.key, n.production);
      out.log_p0 += base.log_prob(n.production);
      for (int c : children(v)) self(self, c, false);
    };
    rec(rec, root, true);
    return out;
  }

  /// Interior nodes of the fragment rooted at `root` plus the split interior
  /// nodes hanging off it, with `site` treated as merged.
  void region(int root, int site, std::vector<int>& out) const {
    auto rec = [&](auto& self, int v, bool is_root) -> void {
      out.push_back(v);
      if (!is_root && v != site && split_[v]) return;
      for (int c : children(v)) {
        if (nodes_[c].production >= 0) self(self, c, false);
      }
    };
    rec(rec, root, true);
  }

  /// Pre-order index of `v` within the fragment rooted at `root` (site merged).
  int position_in(int root, int site) const {
    int pos = 0;
    int found = -1;
    auto rec = [&](auto& self, int v, bool is_root) -> void {
      if (found >= 0) return;
      if (v == site) {
        found = pos;
        return;
      }
      ++pos;
      if (!is_root && nodes_[v].production >= 0 && split_[v]) return;
      for (int c : children(v)) self(self, c, false);
    };
    rec(rec, root, true);
    return found;
  }

 private:
  void flatten(const AstNode& n, int parent) {
    int v = static_cast<int>(nodes_.size());
    Node node;
    node.parent = parent;
    node.production = n.production;
    node.symbol = n.symbol;
    node.lexeme = n.lexeme;
    node.num_children = static_cast<int>(n.children.size());
    nodes_.push_back(std::move(node));
    // Children ids are only known after flattening, so reserve a block first.
    nodes_[v].first_child = static_cast<int>(child_ids_.size());
    child_ids_.resize(child_ids_.size() + n.children.size());
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      child_ids_[nodes_[v].first_child + i] = static_cast<int>(nodes_.size());
      flatten(n.children[i], v);
    }
  }

  std::vector<Node> nodes_;
  std::vector<int> child_ids_;
  std::vector<std::uint8_t> split_;
  std::vector<int> roots_;
  std::vector<int> sites_;
};

/// Counts recomputed from scratch by cutting every tree at its split nodes.
inline PypCounts recount(const SplitState& state, const BaseGrammar& base, const Grammar& g,
                         double p_stop) {
  PypCounts counts(g.num_nonterminals());
  for (std::size_t v = 0; v < state.num_nodes(); ++v) {
    int vi = static_cast<int>(v);
    if (!state.is_token(vi) && state.is_split(vi)) counts.add(state.encode(base, p_stop, vi));
  }
  return counts;
}

/// Probability that a new draw from the restaurant of f's root nonterminal is f.
inline double predictive_prob(const PypCounts& counts, const BaseGrammar& base, const Fragment& f,
                              const MinerConfig& cfg) {
  return std::exp(counts.log_predictive(encode_fragment(base, f.root, cfg.p_stop), cfg));
}

namespace detail {

/// Resamples one site from its exact full conditional.
inline void resample_site(SplitState& state, PypCounts& counts, const BaseGrammar& base,
                          const MinerConfig& cfg, Rng& rng, int v) {
  const int r = state.fragment_root(state.node(v).parent);
  EncodedFragment above = state.encode(base, cfg.p_stop, r, v, true);
  EncodedFragment below = state.encode(base, cfg.p_stop, v, -1);
  EncodedFragment merged = state.encode(base, cfg.p_stop, r, v, false);
  if (state.is_split(v)) {
    counts.remove(above);
    counts.remove(below);
  } else {
    counts.remove(merged);
  }
  double lw_merged = counts.log_predictive(merged, cfg);
  double lw_split = counts.log_predictive(above, cfg) + counts.log_predictive(below, cfg, &above);
  double p_split = 1.0 / (1.0 + std::exp(lw_merged - lw_split));
  bool z = uniform01(rng) < p_split;
  state.set_split(v, z);
  if (z) {
    counts.add(above);
    counts.add(below);
  } else {
    counts.add(merged);
  }
}

/// Type of a site: the fragment it would belong to if merged, plus its
/// position there. Non-overlapping sites of one type are exchangeable.
inline std::string block_key(const SplitState& state, const BaseGrammar& base,
                             const MinerConfig& cfg, int v) {
  const int r = state.fragment_root(state.node(v).parent);
  EncodedFragment merged = state.encode(base, cfg.p_stop, r, v, false);
  merged.key.push_back('#');
  put_i32(merged.key, state.position_in(r, v));
  return std::move(merged.key);
}

/// Site type -> sites of that type, kept current across block moves.
class TypeIndex {
 public:
  TypeIndex(const SplitState& state, const BaseGrammar& base, const MinerConfig& cfg)
      : key_of_(state.num_nodes()) {
    for (int v : state.sites()) {
      key_of_[v] = block_key(state, base, cfg, v);
      classes_[key_of_[v]].insert(v);
    }
  }

  const std::string& key(int v) const { return key_of_[v]; }
  const std::set<int>& members(const std::string& key) const { return classes_.at(key); }

  void update(int v, std::string key) {
    if (key == key_of_[v]) return;
    auto it = classes_.find(key_of_[v]);
    it->second.erase(v);
    if (it->second.empty()) classes_.erase(it);
    classes_[key].insert(v);
    key_of_[v] = std::move(key);
  }

 private:
  std::vector<std::string> key_of_;
  std::unordered_map<std::string, std::set<int>> classes_;
};

/// Exchangeable joint log-probability of a few fragment types' customers,
/// relative to a fixed starting table. Each type holds one table, so a
/// restaurant with n customers over K types contributes
///   prod_{k<K}(alpha + d k) prod_f P0(f) (1-d)_{n_f-1} / (alpha)_n.
class LocalJoint {
 public:
  LocalJoint(const PypCounts& counts, const MinerConfig& cfg, std::span<const EncodedFragment* const> types)
      : cfg_(cfg) {
    for (const auto* f : types) {
      std::size_t i = 0;
      while (i < types_.size() && types_[i].key != &f->key && *types_[i].key != f->key) ++i;
      slot_.push_back(static_cast<int>(i));
      if (i < types_.size()) continue;
      std::size_t r = 0;
      while (r < rests_.size() && rests_[r].nt != f->root_nonterminal) ++r;
      if (r == rests_.size()) {
        rests_.push_back({f->root_nonterminal, counts.total(f->root_nonterminal),
                          counts.tables(f->root_nonterminal)});
      }
      types_.push_back({&f->key, f->log_p0, counts.count(f->key), static_cast<int>(r)});
    }
  }

  /// Log joint after adding add[i] customers to the i-th type passed in
  /// (repeated types accumulate), up to a constant.
  double log_joint(std::span<const long> add) const {
    long extra[3] = {0, 0, 0};
    for (std::size_t i = 0; i < add.size(); ++i) extra[slot_[i]] += add[i];
    double lp = 0.0;
    long dn[2] = {0, 0}, dk[2] = {0, 0};
    for (std::size_t t = 0; t < types_.size(); ++t) {
      const auto& ty = types_[t];
      long n = ty.count + extra[t];
      if (n > 0) lp += ty.log_p0 + std::lgamma(static_cast<double>(n) - cfg_.discount);
      dn[ty.rest] += extra[t];
      if (ty.count == 0 && n > 0) ++dk[ty.rest];
    }
    for (std::size_t r = 0; r < rests_.size(); ++r) {
      lp += restaurant(rests_[r].n + dn[r], rests_[r].k + dk[r]);
    }
    return lp;
  }

 private:
  struct Type {
    const std::string* key;
    double log_p0;
    long count;
    int rest;
  };
  struct Rest {
    int nt;
    long n, k;
  };

  double restaurant(long n, long k) const {
    if (n == 0) return 0.0;
    const double a = cfg_.alpha, d = cfg_.discount;
    double tables = 0.0;
    if (k > 1) {
      tables = d > 0.0 ? static_cast<double>(k - 1) * std::log(d) + std::lgamma(a / d + static_cast<double>(k)) -
                             std::lgamma(a / d + 1.0)
                       : static_cast<double>(k - 1) * std::log(a);
    }
    return tables - std::lgamma(static_cast<double>(n) + a) + std::lgamma(1.0 + a) -
           static_cast<double>(k) * std::lgamma(1.0 - d);
  }

  const MinerConfig& cfg_;
  std::vector<int> slot_;
  std::vector<Type> types_;
  std::vector<Rest> rests_;
};

/// Type-based move: the block is every site of the seed's type class that does
/// not overlap an earlier member. Its sites share (above, below, merged), so
/// flipping all of them is scored by the exchangeable joint alone and accepted
/// by Metropolis-Hastings. A flip that would change the class itself is
/// rejected, which keeps the proposal an involution.
inline void type_block_move(SplitState& state, PypCounts& counts, const BaseGrammar& base,
                                        const MinerConfig& cfg, Rng& rng, TypeIndex& index, int seed,
                                        std::vector<int>& stamp, int& epoch) {
  const std::string key = index.key(seed);
  const std::set<int>& cls = index.members(key);

  ++epoch;
  std::vector<int> block;
  std::vector<int> region;
  auto try_add = [&](int u) {
    region.clear();
    state.region(state.fragment_root(state.node(u).parent), u, region);
    for (int x : region) {
      if (stamp[x] == epoch) return;
    }
    for (int x : region) stamp[x] = epoch;
    block.push_back(u);
  };
  auto it = cls.find(seed);
  for (std::size_t scanned = 0; scanned < cls.size(); ++scanned) {
    try_add(*it);
    if (++it == cls.end()) it = cls.begin();
  }

  const int r0 = state.fragment_root(state.node(block[0]).parent);
  const EncodedFragment above = state.encode(base, cfg.p_stop, r0, block[0], true);
  const EncodedFragment below = state.encode(base, cfg.p_stop, block[0]);
  const EncodedFragment merged = state.encode(base, cfg.p_stop, r0, block[0], false);

  std::vector<std::uint8_t> old_z;
  for (int v : block) {
    old_z.push_back(state.is_split(v) ? 1 : 0);
    if (state.is_split(v)) {
      counts.remove(above);
      counts.remove(below);
    } else {
      counts.remove(merged);
    }
  }

  const long b = static_cast<long>(block.size());
  const EncodedFragment* types[3] = {&above, &below, &merged};
  LocalJoint joint(counts, cfg, types);
  long m_old = 0;
  for (auto z : old_z) m_old += z;
  const long m_new = b - m_old;
  const long add_old[3] = {m_old, m_old, b - m_old};
  const long add_new[3] = {m_new, m_new, b - m_new};
  const double log_ratio = joint.log_joint(add_new) - joint.log_joint(add_old);
  std::vector<std::uint8_t> new_z = old_z;
  if (log_ratio >= 0.0 || uniform01(rng) < std::exp(log_ratio)) {
    for (auto& z : new_z) z = z ? 0 : 1;
  }

  bool moved = new_z != old_z;
  std::vector<std::pair<int, std::string>> changed;
  bool class_kept = true;
  if (moved) {
    // Sites whose type can depend on a block site.
    std::vector<int> affected;
    for (int w : block) {
      int rw = state.fragment_root(state.node(w).parent);
      region.clear();
      state.region(rw, w, region);
      region.push_back(rw);
      for (int x : region) {
        if (state.node(x).parent >= 0 && !state.is_token(x)) affected.push_back(x);
      }
    }
    std::sort(affected.begin(), affected.end());
    affected.erase(std::unique(affected.begin(), affected.end()), affected.end());
    std::vector<int> sorted_block = block;
    std::sort(sorted_block.begin(), sorted_block.end());

    for (std::size_t i = 0; i < block.size(); ++i) state.set_split(block[i], new_z[i] != 0);
    for (int x : affected) {
      if (std::binary_search(sorted_block.begin(), sorted_block.end(), x)) continue;
      std::string nk = block_key(state, base, cfg, x);
      if ((nk == key) != (index.key(x) == key)) {
        class_kept = false;
        break;
      }
      if (nk != index.key(x)) changed.emplace_back(x, std::move(nk));
    }
    if (!class_kept) {
      for (std::size_t i = 0; i < block.size(); ++i) state.set_split(block[i], old_z[i] != 0);
    }
  }
  const auto& zs = class_kept ? new_z : old_z;
  for (std::size_t i = 0; i < block.size(); ++i) {
    if (zs[i]) {
      counts.add(above);
      counts.add(below);
    } else {
      counts.add(merged);
    }
  }
  if (class_kept) {
    for (auto& [x, k] : changed) index.update(x, std::move(k));
  }
}

}  // namespace detail

/// One sweep over every non-root interior node. Per-site mode resamples each
/// site from its full conditional in corpus order. Type-based mode visits the
/// sites in random order and moves each unvisited site together with its
/// whole type class.
///
/// Throws MinerError if `counts` does not match a full recount of `state`.
inline void gibbs_sweep(SplitState& state, PypCounts& counts, const BaseGrammar& base,
                        const Grammar& g, const MinerConfig& cfg, Rng& rng) {
  if (!(recount(state, base, g, cfg.p_stop) == counts)) {
    throw MinerError("count tables are inconsistent with the split state");
  }
  if (cfg.blocking == Blocking::PerSite) {
    for (int v : state.sites()) detail::resample_site(state, counts, base, cfg, rng, v);
    return;
  }
  detail::TypeIndex index(state, base, cfg);
  std::vector<int> stamp(state.num_nodes(), 0);
  std::vector<std::uint8_t> visited(state.num_nodes(), 0);
  int epoch = 0;
  std::vector<int> order(state.sites().begin(), state.sites().end());
  for (std::size_t i = order.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(order[i - 1], order[j]);
  }
  for (int v : order) {
    if (visited[v]) continue;
    for (int w : index.members(index.key(v))) visited[w] = 1;
    detail::type_block_move(state, counts, base, cfg, rng, index, v, stamp, epoch);
  }
}

// ---------------------------------------------------------------------------

struct MinedFragment {
  Fragment fragment;
  long count = 0;       // n_f in the final state
  double log_p0 = 0.0;  // log P0(f)
  double p1 = 0.0;      // posterior predictive under the final counts
};

struct MinedGrammar {
  MinerConfig config;
  BaseGrammar base;
  std::vector<MinedFragment> fragments;  // n_f >= min_count, in order of first appearance
  SplitState state;
  PypCounts counts;
  std::vector<double> iteration_seconds;

  /// Predictive probability of an arbitrary fragment under the final counts.
  double p1(const Fragment& f) const { return predictive_prob(counts, base, f, config); }
  double log_p1(const Fragment& f) const {
    return counts.log_predictive(encode_fragment(base, f.root, config.p_stop), config);
  }
};

/// Distinct fragments of the state with n_f >= min_count, in corpus order of
/// first appearance, with dense ids and holes labeled l0, l1, ... .
inline std::vector<MinedFragment> extract_fragments(const Grammar& g, const SplitState& state,
                                                    const PypCounts& counts, const BaseGrammar& base,
                                                    const MinerConfig& cfg) {
  std::vector<MinedFragment> out;
  std::unordered_map<std::string, int> seen;
  for (std::size_t v = 0; v < state.num_nodes(); ++v) {
    int vi = static_cast<int>(v);
    if (state.is_token(vi) || !state.is_split(vi)) continue;
    EncodedFragment f = state.encode(base, cfg.p_stop, vi);
    long n = counts.count(f.key);
    if (n < cfg.min_count || seen.contains(f.key)) continue;
    seen.emplace(f.key, static_cast<int>(out.size()));
    MinedFragment m;
    m.fragment.id = static_cast<int>(out.size());
    m.fragment.root = fragment_from_key(g, f.key);
    m.count = n;
    m.log_p0 = f.log_p0;
    m.p1 = std::exp(counts.log_predictive(f, cfg));
    out.push_back(std::move(m));
  }
  return out;
}

/// Runs `cfg.iterations` sweeps from the all-split state and extracts the
/// fragments of the last state.
inline MinedGrammar mine(const Grammar& g, std::span<const CorpusEntry> corpus, const MinerConfig& cfg) {
  cfg.validate();
  if (corpus.empty()) throw MinerError("cannot mine an empty corpus");
  MinedGrammar out;
  out.config = cfg;
  out.base = estimate_base(g, corpus);
  out.state = SplitState::all_split(corpus);
  out.counts = recount(out.state, out.base, g, cfg.p_stop);
  Rng rng(cfg.seed);
  for (int it = 0; it < cfg.iterations; ++it) {
    auto t0 = std::chrono::steady_clock::now();
    gibbs_sweep(out.state, out.counts, out.base, g, cfg, rng);
    std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    out.iteration_seconds.push_back(dt.count());
  }
  out.fragments = extract_fragments(g, out.state, out.counts, out.base, cfg);
  return out;
}

}  // namespace idiomkit
