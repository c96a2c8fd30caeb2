#pragma once

#include <algorithm>
#include <map>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "idiomkit/ast.hpp"
#include "idiomkit/fragment.hpp"
#include "idiomkit/trace.hpp"

namespace idiomkit {

/// Pre-order numbering of a tree: node address -> step index (0-based), and
/// subtree sizes by step index.
class PreorderIndex {
 public:
  explicit PreorderIndex(const AstNode& root) {
    auto rec = [&](auto& self, const AstNode& n) -> int {
      int i = static_cast<int>(size_.size());
      index_.emplace(&n, i);
      size_.push_back(1);
      int s = 1;
      for (const auto& c : n.children) s += self(self, c);
      size_[i] = s;
      return s;
    };
    rec(rec, root);
  }
  int index(const AstNode& n) const { return index_.at(&n); }
  int subtree_size(int step) const { return size_.at(step); }
  std::size_t size() const { return size_.size(); }

 private:
  std::unordered_map<const AstNode*, int> index_;
  std::vector<int> size_;
};

/// Which steps of the original trace an occurrence replaces, and where
/// decoding resumes. Step indices are 0-based pre-order positions.
struct OccurrenceLayout {
  int anchor_step = -1;
  std::vector<int> covered;     // ascending; includes the anchor
  std::vector<int> hole_steps;  // first occurrence of each label, depth-first
};

/// Covered steps are the non-hole nodes of the instantiation plus, for labels
/// that repeat, the whole subtree bound at the repeated positions (those are
/// copied, never generated).
inline OccurrenceLayout layout_of(const Fragment& f, const AstNode& root, const NodePath& anchor,
                                  const PreorderIndex& index) {
  const AstNode* at = resolve(root, anchor);
  if (at == nullptr) throw Error("occurrence anchor does not resolve");
  OccurrenceLayout out;
  out.anchor_step = index.index(*at);
  std::vector<std::string> seen;
  auto rec = [&](auto& self, const FragNode& fn, const AstNode& n) -> void {
    int step = index.index(n);
    if (fn.is_hole()) {
      if (std::find(seen.begin(), seen.end(), fn.text) == seen.end()) {
        seen.push_back(fn.text);
        out.hole_steps.push_back(step);
      } else {
        for (int s = step; s < step + index.subtree_size(step); ++s) out.covered.push_back(s);
      }
      return;
    }
    out.covered.push_back(step);
    for (std::size_t i = 0; i < fn.children.size(); ++i) self(self, fn.children[i], n.children[i]);
  };
  rec(rec, f.root, *at);
  std::sort(out.covered.begin(), out.covered.end());
  return out;
}

struct MarkedEntry {
  CorpusEntry entry;
  ActionTrace trace;  // original trace
  std::vector<Occurrence> occurrences;
  std::vector<OccurrenceLayout> layouts;         // parallel to occurrences
  std::vector<std::vector<int>> anchored_at;     // per step: occurrence indices anchored there
};

/// Corpus annotated with every idiom occurrence, overlapping ones included.
struct MarkedCorpus {
  Grammar grammar;
  IdiomSet idioms;
  std::vector<MarkedEntry> entries;
  std::map<std::string, std::size_t> by_id;

  const MarkedEntry& entry(const std::string& id) const {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw Error("unknown corpus entry '" + id + "'");
    return entries[it->second];
  }
};

namespace detail {

inline MarkedEntry mark_entry(const Grammar& g, const IdiomSet& idioms, const CorpusEntry& e,
                              std::vector<Occurrence> occurrences) {
  MarkedEntry m;
  m.entry = e;
  m.trace = to_trace(g, e.ast);
  m.occurrences = std::move(occurrences);
  m.anchored_at.resize(m.trace.size());
  PreorderIndex index(e.ast);
  for (std::size_t i = 0; i < m.occurrences.size(); ++i) {
    const Occurrence& occ = m.occurrences[i];
    m.layouts.push_back(layout_of(idioms.at(occ.idiom_id), e.ast, occ.anchor, index));
    m.anchored_at[m.layouts.back().anchor_step].push_back(static_cast<int>(i));
  }
  return m;
}

}  // namespace detail

/// Marks all occurrences. Entries are independent, so `threads` > 1 splits
/// them into contiguous chunks; the result does not depend on `threads`.
inline MarkedCorpus mark(const Grammar& g, std::span<const CorpusEntry> corpus, const IdiomSet& idioms,
                         unsigned threads = 1) {
  MarkedCorpus out;
  out.grammar = g;
  out.idioms = idioms;
  out.entries.resize(corpus.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      out.entries[i] = detail::mark_entry(g, idioms, corpus[i], find_occurrences(idioms, corpus[i]));
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(corpus.size())));
  if (threads <= 1) {
    work(0, corpus.size());
  } else {
    std::vector<std::jthread> pool;
    std::size_t chunk = (corpus.size() + threads - 1) / threads;
    for (std::size_t b = 0; b < corpus.size(); b += chunk) {
      pool.emplace_back(work, b, std::min(corpus.size(), b + chunk));
    }
  }
  for (std::size_t i = 0; i < out.entries.size(); ++i) {
    if (!out.by_id.emplace(out.entries[i].entry.id, i).second) {
      throw Error("duplicate corpus entry id '" + out.entries[i].entry.id + "'");
    }
  }
  return out;
}

/// Rebuilds a marked corpus from persisted occurrences, re-checking each one.
inline MarkedCorpus mark_from_occurrences(const Grammar& g, std::vector<CorpusEntry> corpus,
                                          const IdiomSet& idioms,
                                          std::vector<std::vector<Occurrence>> occurrences) {
  MarkedCorpus out;
  out.grammar = g;
  out.idioms = idioms;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    for (const auto& occ : occurrences[i]) {
      if (!idioms.contains(occ.idiom_id)) throw Error("occurrence cites unknown idiom " + std::to_string(occ.idiom_id));
      auto check = match_at(idioms.at(occ.idiom_id), corpus[i].ast, occ.anchor, corpus[i].id);
      if (!check || check->bindings != occ.bindings) {
        throw Error("entry '" + corpus[i].id + "': recorded occurrence of idiom " +
                    std::to_string(occ.idiom_id) + " at " + path_to_string(occ.anchor) +
                    " does not match");
      }
    }
    out.entries.push_back(detail::mark_entry(g, idioms, corpus[i], std::move(occurrences[i])));
    if (!out.by_id.emplace(corpus[i].id, i).second) throw Error("duplicate corpus entry id '" + corpus[i].id + "'");
  }
  return out;
}

struct OverlapStats {
  long total_occurrences = 0;
  long kept_by_greedy = 0;
  double discard_rate = 0.0;
  std::map<int, long> usage;  // idiom id -> occurrences kept
};

struct GreedyRewrite {
  std::vector<ActionTrace> traces;  // parallel to marked.entries
  OverlapStats stats;
};

/// Replaces non-overlapping occurrences by ApplyIdiom actions, scanning in
/// (rank, anchor pre-order) order and skipping any occurrence that touches an
/// already consumed step. `order` lists idiom ids best first; an empty order
/// means ascending id.
inline GreedyRewrite greedy_rewrite(const MarkedCorpus& marked, std::vector<int> order = {}) {
  if (order.empty()) {
    for (std::size_t i = 0; i < marked.idioms.size(); ++i) order.push_back(static_cast<int>(i));
  }
  std::vector<int> rank(marked.idioms.size(), static_cast<int>(order.size()));
  for (std::size_t r = 0; r < order.size(); ++r) rank.at(order[r]) = static_cast<int>(r);

  GreedyRewrite out;
  for (const auto& m : marked.entries) {
    std::vector<int> idx(m.occurrences.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
      int ra = rank[m.occurrences[a].idiom_id], rb = rank[m.occurrences[b].idiom_id];
      if (ra != rb) return ra < rb;
      return m.layouts[a].anchor_step < m.layouts[b].anchor_step;
    });
    std::vector<char> consumed(m.trace.size(), 0);
    std::vector<int> idiom_at(m.trace.size(), -1);
    for (int i : idx) {
      if (rank[m.occurrences[i].idiom_id] >= static_cast<int>(order.size())) continue;
      ++out.stats.total_occurrences;
      const auto& cov = m.layouts[i].covered;
      if (std::any_of(cov.begin(), cov.end(), [&](int s) { return consumed[s] != 0; })) continue;
      for (int s : cov) consumed[s] = 1;
      idiom_at[m.layouts[i].anchor_step] = m.occurrences[i].idiom_id;
      ++out.stats.kept_by_greedy;
      ++out.stats.usage[m.occurrences[i].idiom_id];
    }
    ActionTrace rewritten;
    for (std::size_t s = 0; s < m.trace.size(); ++s) {
      if (idiom_at[s] >= 0) {
        rewritten.push_back({0, m.trace[s].frontier, Action::idiom(idiom_at[s])});
      } else if (!consumed[s]) {
        rewritten.push_back(m.trace[s]);
      }
      if (!rewritten.empty()) rewritten.back().t = static_cast<int>(rewritten.size());
    }
    out.traces.push_back(std::move(rewritten));
  }
  if (out.stats.total_occurrences > 0) {
    out.stats.discard_rate = 1.0 - static_cast<double>(out.stats.kept_by_greedy) /
                                       static_cast<double>(out.stats.total_occurrences);
  }
  return out;
}

}  // namespace idiomkit
