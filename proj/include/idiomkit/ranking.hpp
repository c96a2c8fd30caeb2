#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "idiomkit/fragment.hpp"
#include "idiomkit/miner.hpp"

namespace idiomkit {

enum class ScoreKind : std::uint8_t { Coverage, CrossEntropy };

struct ScoredIdiom {
  Fragment fragment;
  long coverage_count = 0;  // trees with at least one occurrence
  double cov_score = 0.0;
  double cxe_score = 0.0;
  std::size_t size = 0;     // non-hole node count

  double score(ScoreKind kind) const { return kind == ScoreKind::Coverage ? cov_score : cxe_score; }
};

/// Number of corpus trees containing at least one occurrence of `idiom`.
inline long score_cov(const Fragment& idiom, std::span<const CorpusEntry> corpus) {
  long trees = 0;
  for (const auto& e : corpus) {
    bool found = false;
    for_each_node(e.ast, [&](const AstNode& n, const NodePath& path) {
      if (found || n.is_token() || n.production != idiom.root.production) return;
      if (match_at(idiom, e.ast, path)) found = true;
    });
    if (found) ++trees;
  }
  return trees;
}

/// (coverage / |D|) * (1 / |I|) * log(Pr_G1(I) / Pr_G0(I)), natural log.
inline double cxe_from(long coverage, std::size_t corpus_size, std::size_t idiom_size, double log_p1,
                       double log_p0) {
  if (coverage == 0 || corpus_size == 0) return 0.0;
  return (static_cast<double>(coverage) / static_cast<double>(corpus_size)) *
         (1.0 / static_cast<double>(idiom_size)) * (log_p1 - log_p0);
}

inline double score_cxe(const Fragment& idiom, std::span<const CorpusEntry> corpus,
                        const MinedGrammar& mined) {
  long cov = score_cov(idiom, corpus);
  double log_p0 = base_fragment_log_prob(mined.base, idiom, mined.config.p_stop);
  return cxe_from(cov, corpus.size(), fragment_size(idiom), mined.log_p1(idiom), log_p0);
}

/// Scores every mined fragment against the corpus. Coverage is computed in a
/// single matching pass per tree.
inline std::vector<ScoredIdiom> score_all(const Grammar& g, std::span<const MinedFragment> mined,
                                          std::span<const CorpusEntry> corpus) {
  std::vector<Fragment> frags;
  for (const auto& m : mined) frags.push_back(m.fragment);
  IdiomSet set = IdiomSet::create(g, frags);
  std::vector<long> coverage(frags.size(), 0);
  std::vector<int> last_tree(frags.size(), -1);
  for (std::size_t t = 0; t < corpus.size(); ++t) {
    for (const auto& occ : find_occurrences(set, corpus[t])) {
      if (last_tree[occ.idiom_id] != static_cast<int>(t)) {
        last_tree[occ.idiom_id] = static_cast<int>(t);
        ++coverage[occ.idiom_id];
      }
    }
  }
  std::vector<ScoredIdiom> out;
  for (std::size_t i = 0; i < frags.size(); ++i) {
    ScoredIdiom s;
    s.fragment = frags[i];
    s.coverage_count = coverage[i];
    s.cov_score = static_cast<double>(coverage[i]);
    s.size = fragment_size(frags[i]);
    s.cxe_score = cxe_from(coverage[i], corpus.size(), s.size, std::log(mined[i].p1), mined[i].log_p0);
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<ScoredIdiom> score_all(const Grammar& g, const MinedGrammar& mined,
                                          std::span<const CorpusEntry> corpus) {
  return score_all(g, std::span<const MinedFragment>(mined.fragments), corpus);
}

/// Ranking order: score descending, then larger size, then smaller id.
inline bool rank_before(const ScoredIdiom& a, const ScoredIdiom& b, ScoreKind kind) {
  double sa = a.score(kind), sb = b.score(kind);
  if (sa != sb) return sa > sb;
  if (a.size != b.size) return a.size > b.size;
  return a.fragment.id < b.fragment.id;
}

/// Drops terminal idioms, sorts by rank, keeps the first K. The returned
/// idioms carry dense ids in rank order; `original_id` keeps the input id.
struct RankedIdiom {
  ScoredIdiom scored;
  int original_id = -1;
};

inline std::vector<RankedIdiom> rank_idioms(std::vector<ScoredIdiom> scored, ScoreKind kind,
                                            std::size_t k) {
  std::erase_if(scored, [](const ScoredIdiom& s) { return is_terminal_idiom(s.fragment); });
  std::sort(scored.begin(), scored.end(),
            [kind](const ScoredIdiom& a, const ScoredIdiom& b) { return rank_before(a, b, kind); });
  if (scored.size() > k) scored.resize(k);
  std::vector<RankedIdiom> out;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    RankedIdiom r;
    r.original_id = scored[i].fragment.id;
    r.scored = std::move(scored[i]);
    r.scored.fragment.id = static_cast<int>(i);
    out.push_back(std::move(r));
  }
  return out;
}

inline IdiomSet select_top(const Grammar& g, std::vector<ScoredIdiom> scored, ScoreKind kind,
                           std::size_t k) {
  std::vector<Fragment> frags;
  for (auto& r : rank_idioms(std::move(scored), kind, k)) frags.push_back(std::move(r.scored.fragment));
  return IdiomSet::create(g, std::move(frags));
}

}  // namespace idiomkit
