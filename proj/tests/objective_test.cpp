#include <gtest/gtest.h>

#include <cmath>

#include "idiomkit/objective.hpp"
#include "support.hpp"

using namespace idiomkit;

namespace {

/// Uniform except at Expr frontiers, where the BinOp rule gets 0.6 and idiom 0
/// gets 0.2.
class Skewed final : public ActionScorer {
 public:
  Skewed(Vocabulary v, int expr) : vocab_(std::move(v)), expr_(expr) {}
  const Vocabulary& vocabulary() const override { return vocab_; }
  std::vector<double> distribution(const ActionContext& ctx, std::span<const Action> legal,
                                   std::span<const Action>) const override {
    std::vector<double> out(legal.size(), 1.0 / static_cast<double>(legal.size()));
    if (ctx.frontier != Symbol::nonterminal(expr_)) return out;
    double rest = 0.2 / static_cast<double>(legal.size() - 2);
    for (std::size_t i = 0; i < legal.size(); ++i) {
      out[i] = legal[i] == Action::rule(py::BinOp) ? 0.6 : legal[i] == Action::idiom(0) ? 0.2 : rest;
    }
    return out;
  }

 private:
  Vocabulary vocab_;
  int expr_;
};

class Leaky final : public ActionScorer {
 public:
  explicit Leaky(Vocabulary v) : vocab_(std::move(v)) {}
  const Vocabulary& vocabulary() const override { return vocab_; }
  std::vector<double> distribution(const ActionContext&, std::span<const Action> legal,
                                   std::span<const Action>) const override {
    return std::vector<double>(legal.size(), 0.5 / static_cast<double>(legal.size()));
  }

 private:
  Vocabulary vocab_;
};

MarkedCorpus mark_one(const Grammar& g, const AstNode& t, const IdiomSet& idioms) {
  std::vector<CorpusEntry> corpus{{"x", "", t}};
  return mark(g, corpus, idioms);
}

}  // namespace

TEST(ChoiceSets, NoOccurrencesMeansSingletons) {
  testkit::PyBuilder b;
  MarkedCorpus m = mark_one(b.g, b.program({b.var("a")}), IdiomSet::create(b.g, {b.plus_one()}));
  for (const auto& c : choice_sets(m, "x")) EXPECT_EQ(c.choices.size(), 1u);
  EXPECT_THROW(choice_sets(m, "y"), Error);
}

TEST(ChoiceSets, NestedIncrementsGiveTwoBinaryChoices) {
  testkit::PyBuilder b;
  MarkedCorpus m = mark_one(b.g, b.program({b.plus(b.plus(b.var("a"), b.one()), b.one())}),
                            IdiomSet::create(b.g, {b.plus_one()}));
  int two = 0;
  for (const auto& c : choice_sets(m, "x")) {
    if (c.choices.size() == 2) {
      ++two;
      EXPECT_EQ(c.choices[0], Action::rule(py::BinOp));
      EXPECT_EQ(c.choices[1], Action::idiom(0));
    }
  }
  EXPECT_EQ(two, 2);
}

TEST(Objective, TwoWayStepAveragesLogProbabilities) {
  testkit::PyBuilder b;
  AstNode t = b.program({b.plus(b.var("a"), b.one())});
  MarkedCorpus m = mark_one(b.g, t, IdiomSet::create(b.g, {b.plus_one()}));
  Skewed scorer(Vocabulary::from_corpus(b.g, std::vector<CorpusEntry>{{"x", "", t}}), b.expr);
  ObjectiveReport r = objective(m, "x", scorer);
  const StepReport& s = r.steps.at(3);  // the BinOp step
  ASSERT_EQ(s.choices.size(), 2u);
  EXPECT_NEAR(s.loss, -0.5 * (std::log(0.6) + std::log(0.2)), 1e-15);
  double total = 0.0;
  for (const auto& st : r.steps) total += st.loss;
  EXPECT_DOUBLE_EQ(r.loss, total);
}

TEST(Objective, UniformScorerOnThreeNodeTree) {
  Grammar g = testkit::toy_grammar();
  int a = *g.find_nonterminal("A");
  // S -> A with A -> b; idiom S -> ?A.
  AstNode t = AstNode::interior(g, 1, {AstNode::interior(g, 3, {AstNode::token(1, "b")})});
  IdiomSet idioms = IdiomSet::create(g, {{0, FragNode::interior(g, 1, {FragNode::hole(a, "l")})}});
  MarkedCorpus m = mark_one(g, t, idioms);
  UniformScorer u(Vocabulary::from_corpus(g, std::vector<CorpusEntry>{{"x", "", t}}));
  // Step 1: 3 legal (two S rules, one idiom), both choices 1/3. Step 2: two A
  // rules. Step 3: lexeme 'b' or <unk>.
  EXPECT_NEAR(objective(m, "x", u).loss, std::log(3.0) + 2 * std::log(2.0), 1e-12);
}

TEST(Objective, ContractViolationsAreReported) {
  testkit::PyBuilder b;
  AstNode t = b.program({b.var("a")});
  MarkedCorpus m = mark_one(b.g, t, IdiomSet::create(b.g, {}));
  Leaky leaky(Vocabulary::from_corpus(b.g, std::vector<CorpusEntry>{{"x", "", t}}));
  EXPECT_THROW(objective(m, "x", leaky), ScorerContractError);
}

TEST(EnumerateTraces, DisjointOccurrencesMultiply) {
  testkit::PyBuilder b;
  AstNode t = b.program({b.plus(b.var("a"), b.one()), b.plus(b.var("c"), b.one())});
  MarkedCorpus m = mark_one(b.g, t, IdiomSet::create(b.g, {b.plus_one()}));
  UniformScorer u(Vocabulary::from_corpus(b.g, std::vector<CorpusEntry>{{"x", "", t}}));
  TraceSetStats st = enumerate_traces(m, "x", u);
  EXPECT_EQ(st.num_traces, 4.0);
  EXPECT_NEAR(st.log_j, st.log_j_dp, 1e-12);
}

TEST(EnumerateTraces, OverlappingOccurrencesGiveThreeTraces) {
  testkit::PyBuilder b;
  AstNode t = b.program({b.plus(b.plus(b.plus(b.var("a"), b.var("b")), b.var("c")), b.var("d"))});
  MarkedCorpus m = mark_one(b.g, t, IdiomSet::create(b.g, {b.double_plus()}));
  testkit::HashScorer h(Vocabulary::from_corpus(b.g, std::vector<CorpusEntry>{{"x", "", t}}), 5);
  TraceSetStats st = enumerate_traces(m, "x", h);
  // None, outer, inner: both at once would share the middle addition.
  EXPECT_EQ(st.num_traces, 3.0);
  EXPECT_NEAR(st.log_j, st.log_j_dp, 1e-12);
  EXPECT_LT(st.bound, st.log_j);
  // Steps: Module, StmtsCons, ExprStmt, outer BinOp (3), middle BinOp (4).
  EXPECT_EQ(st.admit[3], 3);
  EXPECT_EQ(st.action_counts[3], (std::vector<long>{2, 1}));
  EXPECT_EQ(st.admit[4], 2);
  EXPECT_EQ(st.action_counts[4], (std::vector<long>{1, 1}));
}

TEST(EnumerateTraces, OccurrenceInsideAHoleMultiplies) {
  testkit::PyBuilder b;
  AstNode t = b.program({b.plus(b.plus(b.var("a"), b.one()), b.one())});
  MarkedCorpus m = mark_one(b.g, t, IdiomSet::create(b.g, {b.plus_one()}));
  UniformScorer u(Vocabulary::from_corpus(b.g, std::vector<CorpusEntry>{{"x", "", t}}));
  EXPECT_EQ(enumerate_traces(m, "x", u).num_traces, 4.0);
}

TEST(EnumerateTraces, SingleTraceBoundIsTight) {
  testkit::PyBuilder b;
  AstNode t = b.program({b.var("a")});
  MarkedCorpus m = mark_one(b.g, t, IdiomSet::create(b.g, {b.plus_one()}));
  testkit::HashScorer h(Vocabulary::from_corpus(b.g, std::vector<CorpusEntry>{{"x", "", t}}), 9);
  TraceSetStats st = enumerate_traces(m, "x", h);
  EXPECT_EQ(st.num_traces, 1.0);
  EXPECT_NEAR(st.bound, st.log_j, 1e-12);
}

TEST(EnumerateTraces, RefusesAboveCap) {
  testkit::PyBuilder b;
  AstNode e = b.var("a");
  for (int i = 0; i < 12; ++i) e = b.plus(e, b.one());
  AstNode t = b.program({e, e});
  MarkedCorpus m = mark_one(b.g, t, IdiomSet::create(b.g, {b.plus_one()}));
  UniformScorer u(Vocabulary::from_corpus(b.g, std::vector<CorpusEntry>{{"x", "", t}}));
  EXPECT_THROW(enumerate_traces(m, "x", u, 1000), TraceCapExceeded);
}

TEST(Train, WithoutIdiomsCountsAreMaximumLikelihood) {
  Grammar g = testkit::toy_grammar();
  AstNode t = AstNode::interior(g, 1, {AstNode::interior(g, 2, {AstNode::token(0, "a"),
                                                                AstNode::interior(g, 3, {AstNode::token(1, "b")})})});
  MarkedCorpus m = mark_one(g, t, IdiomSet::create(g, {}));
  CountScorer s = train_count_scorer(m, 2);
  auto ctx = contexts_for(g, t);
  auto trace = to_trace(g, t);
  double total = 0.0;
  for (std::size_t i = 0; i < trace.size(); ++i) EXPECT_DOUBLE_EQ(s.count(ctx[i], trace[i].action), 2.0);
  for (const auto& [c, row] : s.table()) {
    for (const auto& [a, n] : row) total += n;
  }
  EXPECT_DOUBLE_EQ(total, 2.0 * static_cast<double>(trace.size()));
}

TEST(Train, TwoWayChoiceSplitsTheWeight) {
  Grammar g = testkit::toy_grammar();
  int a = *g.find_nonterminal("A");
  AstNode t = AstNode::interior(g, 1, {AstNode::interior(g, 3, {AstNode::token(1, "b")})});
  IdiomSet idioms = IdiomSet::create(g, {{0, FragNode::interior(g, 1, {FragNode::hole(a, "l")})}});
  MarkedCorpus m = mark_one(g, t, idioms);
  CountScorer s = train_count_scorer(m);
  ActionContext root = contexts_for(g, t)[0];
  EXPECT_DOUBLE_EQ(s.count(root, Action::rule(1)), 0.5);
  EXPECT_DOUBLE_EQ(s.count(root, Action::idiom(0)), 0.5);
  EXPECT_THROW(train_count_scorer(MarkedCorpus{}), TrainError);
}

TEST(Train, TrainedScorerBeatsUniformOnItsCorpus) {
  PlantSpec spec;
  spec.trees = 30;
  SyntheticCorpus s = generate_synthetic(spec);
  MarkedCorpus m = mark(s.corpus.grammar, s.corpus.entries, IdiomSet::create(s.corpus.grammar, s.planted));
  CountScorer trained = train_count_scorer(m);
  UniformScorer u(trained.vocabulary());
  for (const auto& e : m.entries) {
    EXPECT_LT(objective(m, e.entry.id, trained).loss, objective(m, e.entry.id, u).loss);
  }
}
