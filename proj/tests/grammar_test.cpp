#include <gtest/gtest.h>

#include "idiomkit/ast.hpp"
#include "idiomkit/grammar.hpp"
#include "idiomkit/synthetic.hpp"

using namespace idiomkit;

namespace {

Grammar num_grammar() {
  GrammarBuilder b("S");
  b.terminal("number");
  b.rule("S", {"Num"});
  b.rule("Num", {"number"});
  return b.build();
}

AstNode one(const Grammar& g) { return AstNode::interior(g, 0, {AstNode::interior(g, 1, {AstNode::token(0, "1")})}); }

}  // namespace

TEST(Grammar, BuilderAssignsDenseIds) {
  Grammar g = num_grammar();
  EXPECT_EQ(g.num_productions(), 2u);
  EXPECT_EQ(g.num_nonterminals(), 2u);
  EXPECT_EQ(g.nonterminal_name(g.start()), "S");
  EXPECT_EQ(*g.find_nonterminal("Num"), 1);
  EXPECT_EQ(*g.find_terminal("number"), 0);
  EXPECT_FALSE(g.find_nonterminal("number"));
  ASSERT_EQ(g.productions_for(1).size(), 1u);
  EXPECT_TRUE(g.production(1).rhs[0].is_terminal());
}

TEST(Grammar, RejectsUnknownRhsSymbol) {
  std::vector<Grammar::ProductionSpec> specs{{0, "S", {{true, "Missing"}}}};
  EXPECT_THROW(Grammar::build("S", {}, specs), GrammarError);
}

TEST(Grammar, RejectsNonDenseIds) {
  std::vector<Grammar::ProductionSpec> specs{{3, "S", {}}};
  EXPECT_THROW(Grammar::build("S", {}, specs), GrammarError);
}

TEST(Grammar, RejectsMissingStartAndDuplicateTerminal) {
  std::vector<Grammar::ProductionSpec> specs{{0, "S", {}}};
  EXPECT_THROW(Grammar::build("T", {}, specs), GrammarError);
  EXPECT_THROW(Grammar::build("S", {"a", "a"}, specs), GrammarError);
}

TEST(Grammar, UnknownProductionLookupThrows) {
  EXPECT_THROW(num_grammar().production(99), GrammarError);
}

TEST(Validate, SmallestTreeIsValid) {
  Grammar g = num_grammar();
  EXPECT_TRUE(validate_ast(g, one(g)).empty());
  EXPECT_EQ(node_count(one(g)), 3u);
}

TEST(Validate, UnknownProductionReportedAtRoot) {
  Grammar g = num_grammar();
  AstNode bad = one(g);
  bad.production = 99;
  auto vs = validate_ast(g, bad);
  ASSERT_EQ(vs.size(), 1u);
  EXPECT_EQ(vs[0].path, NodePath{});
  EXPECT_NE(vs[0].message.find("unknown production"), std::string::npos);
}

TEST(Validate, ArityAndKindMismatchesAreReportedWithPaths) {
  Grammar g = num_grammar();
  AstNode t = one(g);
  t.children[0].children.clear();
  auto vs = validate_ast(g, t);
  ASSERT_EQ(vs.size(), 1u);
  EXPECT_EQ(vs[0].path, (NodePath{0}));

  AstNode u = one(g);
  u.children[0] = AstNode::token(0, "1");
  vs = validate_ast(g, u);
  ASSERT_FALSE(vs.empty());
  EXPECT_EQ(vs[0].path, (NodePath{0}));
}

TEST(Validate, PythonIfWithSubscriptCondition) {
  Grammar g = python_subset_grammar();
  auto I = [&](int p, std::vector<AstNode> c = {}) { return AstNode::interior(g, p, std::move(c)); };
  auto name = [&](const char* s) { return I(py::NameExpr, {I(py::Name, {AstNode::token(py::Identifier, s)})}); };
  auto num = [&](const char* s) { return I(py::Num, {AstNode::token(py::Number, s)}); };
  // if lst[0] == 1: n = n + 1
  AstNode cond = I(py::Compare, {I(py::Subscript, {name("lst"), num("0")}),
                                 I(py::CmpOpTok, {AstNode::token(py::Op, "==")}), num("1")});
  AstNode body = I(py::StmtsCons,
                   {I(py::Assign, {I(py::Name, {AstNode::token(py::Identifier, "n")}),
                                   I(py::BinOp, {name("n"), I(py::BinOpTok, {AstNode::token(py::Op, "+")}), num("1")})}),
                    I(py::StmtsNil)});
  AstNode tree = I(py::Module, {I(py::StmtsCons, {I(py::If, {cond, body, I(py::StmtsNil)}), I(py::StmtsNil)})});
  EXPECT_TRUE(validate_ast(g, tree).empty());
}

TEST(Ast, ResolveAndPreorderPaths) {
  Grammar g = num_grammar();
  AstNode t = one(g);
  ASSERT_NE(resolve(t, {0, 0}), nullptr);
  EXPECT_EQ(resolve(t, {0, 0})->lexeme, "1");
  EXPECT_EQ(resolve(t, {1}), nullptr);
  std::vector<NodePath> seen;
  for_each_node(t, [&](const AstNode&, const NodePath& p) { seen.push_back(p); });
  EXPECT_EQ(seen, (std::vector<NodePath>{{}, {0}, {0, 0}}));
  EXPECT_EQ(path_to_string({0, 2}), "[0,2]");
}
