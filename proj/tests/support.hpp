#pragma once

// Helpers shared by the unit tests and the acceptance binary. The oracles here
// deliberately avoid the library's matcher, encoder and predictive code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "idiomkit/ast.hpp"
#include "idiomkit/fragment.hpp"
#include "idiomkit/grammar.hpp"
#include "idiomkit/miner.hpp"
#include "idiomkit/scorer.hpp"
#include "idiomkit/synthetic.hpp"

namespace testkit {

using namespace idiomkit;

/// S -> A B | A ; A -> a A | b ; B -> c
inline Grammar toy_grammar() {
  GrammarBuilder b("S");
  b.terminal("a").terminal("b").terminal("c");
  b.rule("S", {"A", "B"});
  b.rule("S", {"A"});
  b.rule("A", {"a", "A"});
  b.rule("A", {"b"});
  b.rule("B", {"c"});
  return b.build();
}

/// Shorthand for hand-built trees and fragments over the Python-like grammar.
struct PyBuilder {
  Grammar g = python_subset_grammar();
  int expr = *g.find_nonterminal("Expr");
  int name_nt = *g.find_nonterminal("Name");

  AstNode I(int p, std::vector<AstNode> c = {}) const { return AstNode::interior(g, p, std::move(c)); }
  FragNode F(int p, std::vector<FragNode> c = {}) const { return FragNode::interior(g, p, std::move(c)); }
  AstNode name(const std::string& s) const { return I(py::Name, {AstNode::token(py::Identifier, s)}); }
  AstNode var(const std::string& s) const { return I(py::NameExpr, {name(s)}); }
  AstNode num(const std::string& s) const { return I(py::Num, {AstNode::token(py::Number, s)}); }
  AstNode one() const { return num("1"); }
  AstNode plus(AstNode l, AstNode r) const {
    return I(py::BinOp, {std::move(l), I(py::BinOpTok, {AstNode::token(py::Op, "+")}), std::move(r)});
  }
  /// Module whose statements are the given expressions.
  AstNode program(std::vector<AstNode> exprs) const {
    AstNode body = I(py::StmtsNil);
    for (auto it = exprs.rbegin(); it != exprs.rend(); ++it) {
      body = I(py::StmtsCons, {I(py::ExprStmt, {std::move(*it)}), std::move(body)});
    }
    return I(py::Module, {std::move(body)});
  }
  /// (x + y) + z, which overlaps itself on longer addition chains.
  Fragment double_plus(int id = 0) const {
    auto add = [&](FragNode l, FragNode r) {
      return F(py::BinOp, {std::move(l), F(py::BinOpTok, {FragNode::token(py::Op, "+")}), std::move(r)});
    };
    return {id, add(add(FragNode::hole(expr, "x"), FragNode::hole(expr, "y")), FragNode::hole(expr, "z"))};
  }
  /// l + 1
  Fragment plus_one(int id = 0) const {
    return {id, F(py::BinOp, {FragNode::hole(expr, "l"), F(py::BinOpTok, {FragNode::token(py::Op, "+")}),
                              F(py::Num, {FragNode::token(py::Number, "1")})})};
  }
};

/// Random tree of `nt` with between `min_nodes` and `max_nodes` nodes, by
/// rejection.
inline AstNode random_tree(const Grammar& g, int nt, Rng& rng, std::size_t max_nodes, int depth = 6,
                           int lexemes = 2, std::size_t min_nodes = 1) {
  for (;;) {
    AstNode t = random_ast(g, nt, rng, depth, lexemes);
    std::size_t n = node_count(t);
    if (n >= min_nodes && n <= max_nodes) return t;
  }
}

inline std::vector<NodePath> interior_paths(const AstNode& root) {
  std::vector<NodePath> out;
  for_each_node(root, [&](const AstNode& n, const NodePath& p) {
    if (!n.is_token()) out.push_back(p);
  });
  return out;
}

/// A fragment cut from a random subtree of `tree`: each non-root interior node
/// becomes a hole with probability `p_hole`. Labels come from a two-label pool
/// per nonterminal, so repeated labels occur.
inline Fragment random_fragment(const AstNode& tree, Rng& rng, double p_hole = 0.35, int id = 0) {
  auto paths = interior_paths(tree);
  const AstNode& at = *resolve(tree, paths[rng() % paths.size()]);
  auto rec = [&](auto& self, const AstNode& n, bool is_root) -> FragNode {
    if (n.is_token()) return FragNode::token(n.symbol, n.lexeme);
    if (!is_root && uniform01(rng) < p_hole) {
      return FragNode::hole(n.symbol, "h" + std::to_string(n.symbol) + "_" + std::to_string(rng() % 2));
    }
    FragNode f;
    f.kind = FragNode::Kind::Interior;
    f.symbol = n.symbol;
    f.production = n.production;
    for (const auto& c : n.children) f.children.push_back(self(self, c, false));
    return f;
  };
  return {id, rec(rec, at, true)};
}

struct OracleMatch {
  NodePath anchor;
  int idiom = -1;
  std::map<std::string, AstNode> values;

  friend bool operator==(const OracleMatch&, const OracleMatch&) = default;
  friend bool operator<(const OracleMatch& a, const OracleMatch& b) {
    if (a.anchor != b.anchor) return a.anchor < b.anchor;
    return a.idiom < b.idiom;
  }
};

/// Every anchor, every assignment of subtrees to labels: keeps the pairs whose
/// instantiation reproduces the anchored subtree. Candidate values are the
/// distinct subtrees of the right nonterminal below the anchor; an assignment
/// is only instantiated when its total size equals the anchored subtree's.
inline std::vector<OracleMatch> brute_force_matches(const IdiomSet& idioms, const AstNode& tree) {
  std::vector<OracleMatch> out;
  for (const Fragment& f : idioms.fragments()) {
    std::map<std::string, int> label_nt;
    std::map<std::string, int> label_uses;
    std::size_t fixed = 0;
    auto scan = [&](auto& self, const FragNode& n) -> void {
      if (n.is_hole()) {
        label_nt[n.text] = n.symbol;
        ++label_uses[n.text];
        return;
      }
      ++fixed;
      for (const auto& c : n.children) self(self, c);
    };
    scan(scan, f.root);
    std::vector<std::string> labels;
    for (const auto& [l, nt] : label_nt) labels.push_back(l);

    for_each_node(tree, [&](const AstNode& at, const NodePath& anchor) {
      const std::size_t target = node_count(at);
      if (target < fixed) return;
      std::vector<std::vector<AstNode>> cands(labels.size());
      for (std::size_t i = 0; i < labels.size(); ++i) {
        for_each_node(at, [&](const AstNode& n, const NodePath&) {
          if (n.is_token() || n.symbol != label_nt[labels[i]]) return;
          if (std::find(cands[i].begin(), cands[i].end(), n) == cands[i].end()) cands[i].push_back(n);
        });
      }
      std::map<std::string, AstNode> assign;
      auto choose = [&](auto& self, std::size_t i, std::size_t size) -> void {
        if (size > target) return;
        if (i == labels.size()) {
          if (size != target) return;
          try {
            if (instantiate(f, assign) == at) out.push_back({anchor, f.id, assign});
          } catch (const Error&) {
          }
          return;
        }
        for (const auto& c : cands[i]) {
          assign[labels[i]] = c;
          self(self, i + 1, size + node_count(c) * static_cast<std::size_t>(label_uses[labels[i]]));
        }
        assign.erase(labels[i]);
      };
      choose(choose, 0, fixed);
    });
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Fragments obtained by cutting `tree` at every interior node whose path is
/// in `cuts` (the root is always a cut). Holes are labeled by nonterminal only.
inline std::vector<FragNode> cut_tree(const AstNode& tree, const std::set<NodePath>& cuts) {
  std::vector<FragNode> out;
  NodePath path;
  auto body = [&](auto& self, const AstNode& n, bool is_root) -> FragNode {
    if (n.is_token()) return FragNode::token(n.symbol, n.lexeme);
    if (!is_root && cuts.contains(path)) {
      out.push_back({});
      std::size_t slot = out.size() - 1;
      FragNode inner = self(self, n, true);
      out[slot] = std::move(inner);
      return FragNode::hole(n.symbol, "h");
    }
    FragNode f;
    f.kind = FragNode::Kind::Interior;
    f.symbol = n.symbol;
    f.production = n.production;
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      path.push_back(static_cast<int>(i));
      f.children.push_back(self(self, n.children[i], false));
      path.pop_back();
    }
    return f;
  };
  out.push_back({});
  FragNode top = body(body, tree, true);
  out[0] = std::move(top);
  return out;
}

/// log P0 computed directly from a hand-built fragment: productions, holes and
/// non-root interior nodes.
inline double oracle_log_p0(const BaseGrammar& base, const FragNode& f, double p_stop, bool is_root = true) {
  if (f.is_hole()) return std::log(p_stop);
  if (f.is_token()) return 0.0;
  double lp = std::log(base.prob(f.production)) + (is_root ? 0.0 : std::log(1.0 - p_stop));
  for (const auto& c : f.children) lp += oracle_log_p0(base, c, p_stop, false);
  return lp;
}

/// Scorer with fixed pseudo-random positive weights per (context, action).
class HashScorer final : public ActionScorer {
 public:
  HashScorer(Vocabulary vocab, std::uint64_t salt) : vocab_(std::move(vocab)), salt_(salt) {}

  const Vocabulary& vocabulary() const override { return vocab_; }
  std::vector<double> distribution(const ActionContext& ctx, std::span<const Action> legal,
                                   std::span<const Action>) const override {
    std::vector<double> w;
    double z = 0.0;
    for (const Action& a : legal) {
      std::uint64_t h = salt_;
      auto mix = [&](std::uint64_t v) {
        h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      };
      mix(static_cast<std::uint64_t>(ctx.frontier.id) * 2 + (ctx.frontier.is_terminal() ? 1 : 0));
      mix(static_cast<std::uint64_t>(ctx.parent_production + 7));
      mix(static_cast<std::uint64_t>(ctx.child_index + 7));
      mix(static_cast<std::uint64_t>(a.kind));
      mix(static_cast<std::uint64_t>(a.id + 7));
      mix(std::hash<std::string>{}(a.lexeme));
      double x = 0.2 + static_cast<double>(h % 1000) / 250.0;
      w.push_back(x);
      z += x;
    }
    for (double& x : w) x /= z;
    return w;
  }

 private:
  Vocabulary vocab_;
  std::uint64_t salt_;
};

}  // namespace testkit
