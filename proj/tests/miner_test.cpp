#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "idiomkit/miner.hpp"
#include "support.hpp"

using namespace idiomkit;

namespace {

/// E -> E op T | T ; T -> num
struct Arith {
  Grammar g;
  int binary = -1, unit = -1, leaf = -1;
  Arith() {
    GrammarBuilder b("E");
    b.terminal("op").terminal("num");
    binary = b.rule("E", {"E", "op", "T"});
    unit = b.rule("E", {"T"});
    leaf = b.rule("T", {"num"});
    g = b.build();
  }
  AstNode t() const { return AstNode::interior(g, leaf, {AstNode::token(1, "1")}); }
  AstNode chain(int n) const {
    AstNode e = AstNode::interior(g, unit, {t()});
    for (int i = 0; i < n; ++i) e = AstNode::interior(g, binary, {e, AstNode::token(0, "+"), t()});
    return e;
  }
};

// ---- exact oracle for the sampler on a tiny corpus --------------------------

struct TinyCorpus {
  Grammar g = testkit::toy_grammar();
  std::vector<CorpusEntry> corpus;
  std::vector<std::pair<int, NodePath>> sites;  // (tree, path) in corpus pre-order

  TinyCorpus() {
    auto I = [&](int p, std::vector<AstNode> c = {}) { return AstNode::interior(g, p, std::move(c)); };
    AstNode ab = I(2, {AstNode::token(0, "a"), I(3, {AstNode::token(1, "b")})});
    corpus.push_back({"t0", "", I(0, {ab, I(4, {AstNode::token(2, "c")})})});
    corpus.push_back({"t1", "", I(1, {I(3, {AstNode::token(1, "b")})})});
    for (std::size_t t = 0; t < corpus.size(); ++t) {
      for_each_node(corpus[t].ast, [&](const AstNode& n, const NodePath& p) {
        if (!n.is_token() && !p.empty()) sites.emplace_back(static_cast<int>(t), p);
      });
    }
  }

  /// Fragments of the state `mask` (bit i set = site i split), in corpus order.
  std::vector<FragNode> fragments(unsigned mask) const {
    std::vector<std::set<NodePath>> cuts(corpus.size());
    for (std::size_t i = 0; i < sites.size(); ++i) {
      if (mask & (1u << i)) cuts[sites[i].first].insert(sites[i].second);
    }
    std::vector<FragNode> out;
    for (std::size_t t = 0; t < corpus.size(); ++t) {
      for (auto& f : testkit::cut_tree(corpus[t].ast, cuts[t])) out.push_back(std::move(f));
    }
    return out;
  }
};

struct Tables {
  std::map<std::string, long> n_f;
  std::map<int, long> n, k;
  void add(const Grammar& g, const FragNode& f) {
    if (n_f[fragment_to_string(g, f)]++ == 0) ++k[f.symbol];
    ++n[f.symbol];
  }
};

double oracle_predictive(const Grammar& g, const Tables& t, const FragNode& f, const BaseGrammar& base,
                         const MinerConfig& cfg) {
  auto get = [](const auto& m, const auto& key) {
    auto it = m.find(key);
    return it == m.end() ? 0L : it->second;
  };
  double nf = static_cast<double>(get(t.n_f, fragment_to_string(g, f)));
  double n = static_cast<double>(get(t.n, f.symbol));
  double k = static_cast<double>(get(t.k, f.symbol));
  double p0 = std::exp(testkit::oracle_log_p0(base, f, cfg.p_stop));
  return (std::max(nf - cfg.discount, 0.0) + (cfg.alpha + cfg.discount * k) * p0) / (n + cfg.alpha);
}

/// Probability that site `i` is split given the rest of `mask`.
double oracle_split_prob(const TinyCorpus& c, const BaseGrammar& base, const MinerConfig& cfg, unsigned mask,
                         std::size_t i) {
  auto split = c.fragments(mask | (1u << i));
  auto merged = c.fragments(mask & ~(1u << i));
  std::multiset<std::string> in_merged;
  for (const auto& f : merged) in_merged.insert(fragment_to_string(c.g, f));
  Tables rest;
  std::vector<FragNode> only_split;
  for (const auto& f : split) {
    auto it = in_merged.find(fragment_to_string(c.g, f));
    if (it != in_merged.end()) {
      in_merged.erase(it);
      rest.add(c.g, f);
    } else {
      only_split.push_back(f);
    }
  }
  EXPECT_EQ(only_split.size(), 2u);
  EXPECT_EQ(in_merged.size(), 1u);
  FragNode m;
  std::multiset<std::string> in_split;
  for (const auto& f : split) in_split.insert(fragment_to_string(c.g, f));
  for (const auto& f : merged) {
    auto it = in_split.find(fragment_to_string(c.g, f));
    if (it == in_split.end()) m = f;
    else in_split.erase(it);
  }
  double w0 = oracle_predictive(c.g, rest, m, base, cfg);
  double w1 = oracle_predictive(c.g, rest, only_split[0], base, cfg);
  Tables with_above = rest;
  with_above.add(c.g, only_split[0]);
  w1 *= oracle_predictive(c.g, with_above, only_split[1], base, cfg);
  return w1 / (w0 + w1);
}

/// Exchangeable joint with one table per type, per restaurant.
double oracle_joint(const TinyCorpus& c, const BaseGrammar& base, const MinerConfig& cfg, unsigned mask) {
  std::map<int, std::map<std::string, std::pair<long, double>>> rest;
  for (const auto& f : c.fragments(mask)) {
    auto& e = rest[f.symbol][fragment_to_string(c.g, f)];
    ++e.first;
    e.second = testkit::oracle_log_p0(base, f, cfg.p_stop);
  }
  double lp = 0.0;
  const double a = cfg.alpha, d = cfg.discount;
  for (const auto& [nt, types] : rest) {
    long n = 0, k = 0;
    for (const auto& [key, e] : types) {
      lp += e.second;
      for (long j = 1; j < e.first; ++j) lp += std::log(static_cast<double>(j) - d);
      n += e.first;
      ++k;
    }
    for (long j = 1; j < k; ++j) lp += std::log(a + d * static_cast<double>(j));
    for (long j = 1; j < n; ++j) lp -= std::log(a + static_cast<double>(j));
  }
  return std::exp(lp);
}

std::vector<double> empirical(const TinyCorpus& c, const MinerConfig& cfg, int sweeps) {
  BaseGrammar base = estimate_base(c.g, c.corpus);
  SplitState state = SplitState::all_split(c.corpus);
  PypCounts counts = recount(state, base, c.g, cfg.p_stop);
  Rng rng(cfg.seed);
  std::vector<double> freq(1u << state.sites().size(), 0.0);
  for (int s = 0; s < sweeps; ++s) {
    gibbs_sweep(state, counts, base, c.g, cfg, rng);
    unsigned mask = 0;
    for (std::size_t i = 0; i < state.sites().size(); ++i) {
      if (state.is_split(state.sites()[i])) mask |= 1u << i;
    }
    freq[mask] += 1.0 / sweeps;
  }
  return freq;
}

}  // namespace

TEST(EstimateBase, AddOneSmoothingPerLhs) {
  Arith a;
  std::vector<CorpusEntry> corpus{{"x", "", a.chain(3)}};
  BaseGrammar base = estimate_base(a.g, corpus);
  EXPECT_DOUBLE_EQ(base.prob(a.binary), 4.0 / 6.0);
  EXPECT_DOUBLE_EQ(base.prob(a.unit), 2.0 / 6.0);
  EXPECT_DOUBLE_EQ(base.prob(a.leaf), 1.0);
  EXPECT_THROW(estimate_base(a.g, std::vector<CorpusEntry>{}), MinerError);
}

TEST(BaseFragment, AllHolesUnderCertainProduction) {
  Arith a;
  BaseGrammar base = BaseGrammar::from_probabilities({0.5, 0.5, 1.0});

  FragNode f = FragNode::interior(a.g, a.leaf, {FragNode::token(1, "1")});
  EXPECT_DOUBLE_EQ(base_fragment_log_prob(base, f, 0.5), 0.0);
  FragNode g = FragNode::interior(a.g, a.unit, {FragNode::hole(*a.g.find_nonterminal("T"), "x")});
  EXPECT_NEAR(base_fragment_log_prob(base, g, 0.5), std::log(0.5) + std::log(0.5), 1e-15);
}

TEST(BaseFragment, MatchesRecursiveOracleOnRandomFragments) {
  Grammar g = python_subset_grammar();
  Rng rng(3);
  std::vector<CorpusEntry> corpus;
  for (int i = 0; i < 20; ++i) corpus.push_back({"r" + std::to_string(i), "", testkit::random_tree(g, g.start(), rng, 150, 8)});
  BaseGrammar base = estimate_base(g, corpus);
  for (int i = 0; i < 200; ++i) {
    Fragment f = testkit::random_fragment(corpus[i % corpus.size()].ast, rng);
    for (double p_stop : {0.2, 0.5, 0.9}) {
      EXPECT_NEAR(base_fragment_log_prob(base, f, p_stop), testkit::oracle_log_p0(base, f.root, p_stop), 1e-9);
    }
  }
}

TEST(Predictive, WorkedArithmetic) {
  MinerConfig cfg;
  cfg.alpha = 5.0;
  cfg.discount = 0.5;
  double p = std::exp(PypCounts::log_predictive_from(10, 20, 3, std::log(0.01), cfg));
  EXPECT_NEAR(p, (9.5 + 6.5 * 0.01) / 25.0, 1e-12);
  EXPECT_NEAR(p, 0.3826, 1e-12);
}

TEST(Predictive, FromPersistedRestaurant) {
  Arith a;
  MinerConfig cfg;
  BaseGrammar base = BaseGrammar::from_probabilities({0.5, 0.5, 1.0});
  Fragment f{0, FragNode::interior(a.g, a.unit, {FragNode::hole(*a.g.find_nonterminal("T"), "x")})};
  PypCounts counts(a.g.num_nonterminals());
  counts.set_restaurant(f.root_nonterminal(), 20, 3);
  counts.set_type(encode_fragment(base, f.root, cfg.p_stop), 10);
  double p0 = 0.25;
  EXPECT_NEAR(predictive_prob(counts, base, f, cfg), (9.5 + 6.5 * p0) / 25.0, 1e-12);
  EXPECT_NEAR(encode_fragment(base, f.root, cfg.p_stop).log_p0, std::log(p0), 1e-15);
}

TEST(Predictive, UnseenTypeFallsBackToBase) {
  MinerConfig cfg;
  EXPECT_NEAR(std::exp(PypCounts::log_predictive_from(0, 0, 0, std::log(0.2), cfg)), 0.2, 1e-15);
}

TEST(Sampler, PerSiteMatchesExactTransitionMatrix) {
  TinyCorpus c;
  MinerConfig cfg;
  cfg.alpha = 1.0;
  cfg.discount = 0.5;
  cfg.p_stop = 0.4;
  cfg.seed = 21;
  BaseGrammar base = estimate_base(c.g, c.corpus);
  const std::size_t n = c.sites.size();
  ASSERT_EQ(n, 4u);
  const std::size_t states = 1u << n;
  // One sweep = resample sites 0..n-1 in order.
  std::vector<double> pi(states, 1.0 / states);
  for (int iter = 0; iter < 500; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> next(states, 0.0);
      for (unsigned s = 0; s < states; ++s) {
        double p = oracle_split_prob(c, base, cfg, s, i);
        next[s | (1u << i)] += pi[s] * p;
        next[s & ~(1u << i)] += pi[s] * (1.0 - p);
      }
      pi = next;
    }
  }
  auto freq = empirical(c, cfg, 40000);
  for (std::size_t s = 0; s < states; ++s) EXPECT_NEAR(freq[s], pi[s], 0.015) << "state " << s;
}

TEST(Sampler, TypeBasedMatchesExchangeableJoint) {
  TinyCorpus c;
  MinerConfig cfg;
  cfg.alpha = 1.0;
  cfg.discount = 0.5;
  cfg.p_stop = 0.4;
  cfg.seed = 22;
  cfg.blocking = Blocking::TypeBased;
  BaseGrammar base = estimate_base(c.g, c.corpus);
  const std::size_t states = 1u << c.sites.size();
  std::vector<double> pi(states);
  double z = 0.0;
  for (unsigned s = 0; s < states; ++s) z += pi[s] = oracle_joint(c, base, cfg, s);
  auto freq = empirical(c, cfg, 40000);
  for (std::size_t s = 0; s < states; ++s) EXPECT_NEAR(freq[s], pi[s] / z, 0.015) << "state " << s;
}

TEST(Sampler, LargeConcentrationFollowsBaseRatio) {
  PlantSpec spec;
  spec.trees = 20;
  SyntheticCorpus s = generate_synthetic(spec);
  MinerConfig cfg;
  cfg.alpha = 1e9;
  cfg.p_stop = 0.3;
  cfg.iterations = 20;
  MinedGrammar m = mine(s.corpus.grammar, s.corpus.entries, cfg);
  double split = 0;
  for (int v : m.state.sites()) split += m.state.is_split(v) ? 1 : 0;
  EXPECT_NEAR(split / static_cast<double>(m.state.sites().size()), cfg.p_stop, 0.02);
}

TEST(Sampler, CountsStayConsistentInBothModes) {
  PlantSpec spec;
  spec.trees = 30;
  SyntheticCorpus s = generate_synthetic(spec);
  const Grammar& g = s.corpus.grammar;
  for (Blocking mode : {Blocking::PerSite, Blocking::TypeBased}) {
    MinerConfig cfg;
    cfg.blocking = mode;
    BaseGrammar base = estimate_base(g, s.corpus.entries);
    SplitState state = SplitState::all_split(s.corpus.entries);
    PypCounts counts = recount(state, base, g, cfg.p_stop);
    Rng rng(1);
    for (int i = 0; i < 5; ++i) {
      gibbs_sweep(state, counts, base, g, cfg, rng);
      EXPECT_TRUE(recount(state, base, g, cfg.p_stop) == counts);
    }
  }
}

TEST(Sampler, CorruptedCountsAreDetected) {
  TinyCorpus c;
  MinerConfig cfg;
  BaseGrammar base = estimate_base(c.g, c.corpus);
  SplitState state = SplitState::all_split(c.corpus);
  PypCounts counts = recount(state, base, c.g, cfg.p_stop);
  state.set_split(state.sites()[0], false);
  Rng rng(0);
  EXPECT_THROW(gibbs_sweep(state, counts, base, c.g, cfg, rng), MinerError);
  EXPECT_THROW(state.set_split(state.roots()[0], false), MinerError);
}

TEST(Mine, ZeroIterationsGivesSingleProductionFragments) {
  Grammar g = python_subset_grammar();
  Rng rng(4);
  std::vector<CorpusEntry> corpus;
  for (int i = 0; i < 15; ++i) corpus.push_back({"r" + std::to_string(i), "", testkit::random_tree(g, g.start(), rng, 150, 8)});
  MinerConfig cfg;
  cfg.iterations = 0;
  cfg.min_count = 1;
  MinedGrammar m = mine(g, corpus, cfg);
  std::vector<FragNode> want;
  for (const auto& e : corpus) {
    for_each_node(e.ast, [&](const AstNode& n, const NodePath&) {
      if (n.is_token()) return;
      FragNode f = fragment_from_ast(n);
      int label = 0;
      for (auto& c : f.children) {
        if (c.is_interior()) c = FragNode::hole(c.symbol, "h" + std::to_string(label++));
      }
      bool dup = std::any_of(want.begin(), want.end(), [&](const FragNode& w) { return equivalent_up_to_labels(w, f); });
      if (!dup) want.push_back(f);
    });
  }
  ASSERT_EQ(m.fragments.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    EXPECT_TRUE(equivalent_up_to_labels(m.fragments[i].fragment.root, want[i])) << i;
    EXPECT_EQ(m.fragments[i].fragment.id, static_cast<int>(i));
  }
}

TEST(Mine, SameSeedSameResult) {
  PlantSpec spec;
  spec.trees = 40;
  SyntheticCorpus s = generate_synthetic(spec);
  for (Blocking mode : {Blocking::PerSite, Blocking::TypeBased}) {
    MinerConfig cfg;
    cfg.seed = 7;
    cfg.iterations = 4;
    cfg.blocking = mode;
    MinedGrammar a = mine(s.corpus.grammar, s.corpus.entries, cfg);
    MinedGrammar b = mine(s.corpus.grammar, s.corpus.entries, cfg);
    EXPECT_TRUE(std::equal(a.state.split_flags().begin(), a.state.split_flags().end(), b.state.split_flags().begin(),
                           b.state.split_flags().end()));
    ASSERT_EQ(a.fragments.size(), b.fragments.size());
    for (std::size_t i = 0; i < a.fragments.size(); ++i) {
      EXPECT_EQ(a.fragments[i].fragment, b.fragments[i].fragment);
      EXPECT_EQ(a.fragments[i].count, b.fragments[i].count);
    }
  }
}

TEST(Mine, RejectsBadConfigAndEmptyCorpus) {
  Grammar g = testkit::toy_grammar();
  std::vector<CorpusEntry> corpus{{"x", "", AstNode::interior(g, 1, {AstNode::interior(g, 3, {AstNode::token(1, "b")})})}};
  MinerConfig cfg;
  cfg.discount = 1.0;
  EXPECT_THROW(mine(g, corpus, cfg), MinerError);
  cfg = {};
  cfg.p_stop = 0.0;
  EXPECT_THROW(mine(g, corpus, cfg), MinerError);
  cfg = {};
  EXPECT_THROW(mine(g, std::vector<CorpusEntry>{}, cfg), MinerError);
}

TEST(Mine, ExtractedFragmentsMeetMinimumCount) {
  PlantSpec spec;
  spec.trees = 40;
  SyntheticCorpus s = generate_synthetic(spec);
  MinerConfig cfg;
  cfg.iterations = 3;
  cfg.min_count = 3;
  MinedGrammar m = mine(s.corpus.grammar, s.corpus.entries, cfg);
  ASSERT_FALSE(m.fragments.empty());
  for (const auto& f : m.fragments) {
    EXPECT_GE(f.count, 3);
    EXPECT_TRUE(validate_fragment(s.corpus.grammar, f.fragment).empty());
    EXPECT_NEAR(f.p1, m.p1(f.fragment), 1e-12);
  }
}
