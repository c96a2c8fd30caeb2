#pragma once

#include <algorithm>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "idiomkit/ast.hpp"
#include "idiomkit/fragment.hpp"
#include "idiomkit/grammar.hpp"
#include "idiomkit/io.hpp"
#include "idiomkit/miner.hpp"

namespace idiomkit {

/// Production ids of the built-in Python-like grammar.
namespace py {
enum Prod : int {
  Module = 0,
  StmtsCons,
  StmtsNil,
  Assign,
  ExprStmt,
  Return,
  If,
  For,
  BinOp,
  Compare,
  NameExpr,
  Num,
  Str,
  Subscript,
  Call,
  Attribute,
  ArgsCons,
  ArgsNil,
  KwCons,
  KwNil,
  Keyword,
  Name,
  BinOpTok,
  CmpOpTok,
};
enum Terminal : int { Identifier = 0, Number, String, Op };
}  // namespace py

inline Grammar python_subset_grammar() {
  GrammarBuilder b("Module");
  b.terminal("identifier").terminal("number").terminal("string").terminal("op");
  b.rule("Module", {"Stmts"});
  b.rule("Stmts", {"Stmt", "Stmts"});
  b.rule("Stmts", {});
  b.rule("Stmt", {"Name", "Expr"});
  b.rule("Stmt", {"Expr"});
  b.rule("Stmt", {"Expr"});
  b.rule("Stmt", {"Expr", "Stmts", "Stmts"});
  b.rule("Stmt", {"Name", "Expr", "Stmts"});
  b.rule("Expr", {"Expr", "BinOp", "Expr"});
  b.rule("Expr", {"Expr", "CmpOp", "Expr"});
  b.rule("Expr", {"Name"});
  b.rule("Expr", {"number"});
  b.rule("Expr", {"string"});
  b.rule("Expr", {"Expr", "Expr"});
  b.rule("Expr", {"Expr", "Args", "Keywords"});
  b.rule("Expr", {"Expr", "identifier"});
  b.rule("Args", {"Expr", "Args"});
  b.rule("Args", {});
  b.rule("Keywords", {"Keyword", "Keywords"});
  b.rule("Keywords", {});
  b.rule("Keyword", {"identifier", "Expr"});
  b.rule("Name", {"identifier"});
  b.rule("BinOp", {"op"});
  b.rule("CmpOp", {"op"});
  return b.build();
}

/// The five planted fragments, ids 0..4.
inline std::vector<Fragment> planted_fragments(const Grammar& g) {
  int expr = *g.find_nonterminal("Expr");
  int name = *g.find_nonterminal("Name");
  int stmts = *g.find_nonterminal("Stmts");
  auto I = [&](int p, std::vector<FragNode> c = {}) { return FragNode::interior(g, p, std::move(c)); };
  auto ident = [&](const char* s) { return I(py::Name, {FragNode::token(py::Identifier, s)}); };
  auto num = [&](const char* s) { return I(py::Num, {FragNode::token(py::Number, s)}); };
  auto callee = [&](const char* s) { return I(py::NameExpr, {ident(s)}); };

  std::vector<Fragment> out;
  // l0 = sorted(l1, reverse=True)
  out.push_back({0, I(py::Assign, {FragNode::hole(name, "l0"),
                                   I(py::Call, {callee("sorted"), I(py::ArgsCons, {FragNode::hole(expr, "l1"), I(py::ArgsNil)}),
                                                I(py::KwCons, {I(py::Keyword, {FragNode::token(py::Identifier, "reverse"),
                                                                               callee("True")}),
                                                               I(py::KwNil)})})})});
  // l0 = l1 + 1
  out.push_back({1, I(py::Assign, {FragNode::hole(name, "l0"),
                                   I(py::BinOp, {FragNode::hole(expr, "l1"),
                                                 I(py::BinOpTok, {FragNode::token(py::Op, "+")}), num("1")})})});
  // if len(l0) == 0: l1
  out.push_back({2, I(py::If, {I(py::Compare, {I(py::Call, {callee("len"), I(py::ArgsCons, {FragNode::hole(expr, "l0"), I(py::ArgsNil)}),
                                                            I(py::KwNil)}),
                                               I(py::CmpOpTok, {FragNode::token(py::Op, "==")}), num("0")}),
                               FragNode::hole(stmts, "l1"), I(py::StmtsNil)})});
  // for l0 in range(l1): l2
  out.push_back({3, I(py::For, {FragNode::hole(name, "l0"),
                                I(py::Call, {callee("range"), I(py::ArgsCons, {FragNode::hole(expr, "l1"), I(py::ArgsNil)}),
                                             I(py::KwNil)}),
                                FragNode::hole(stmts, "l2")})});
  // return l0[0]
  out.push_back({4, I(py::Return, {I(py::Subscript, {FragNode::hole(expr, "l0"), num("0")})})});
  return out;
}

struct PlantSpec {
  int trees = 500;
  std::vector<int> plants{0, 1, 2, 3, 4};  // indices into planted_fragments()
  int min_plants = 1;  // copies of each planted fragment per tree
  int max_plants = 3;
  int noise_depth = 2;
  std::uint64_t seed = 7;
};

struct PlantRecord {
  std::string entry_id;
  int plant = -1;
  NodePath anchor;
};

struct SyntheticCorpus {
  Corpus corpus;
  std::vector<Fragment> planted;
  std::vector<PlantRecord> insertions;
};

namespace detail {

class NoiseGen {
 public:
  NoiseGen(const Grammar& g, std::uint64_t seed) : g_(g), rng_(seed) {}

  std::size_t pick(std::size_t n) { return static_cast<std::size_t>(rng_() % n); }
  template <class T>
  const T& choose(const std::vector<T>& xs) { return xs[pick(xs.size())]; }

  AstNode node(int p, std::vector<AstNode> c = {}) { return AstNode::interior(g_, p, std::move(c)); }
  AstNode name(const std::string& s) { return node(py::Name, {AstNode::token(py::Identifier, s)}); }
  AstNode noise_name() { return name(choose(identifiers_)); }
  AstNode num(const std::string& s) { return node(py::Num, {AstNode::token(py::Number, s)}); }

  /// Arguments of a call: each value is positional or, one time in three,
  /// a keyword argument.
  AstNode call(AstNode callee, std::vector<AstNode> values) {
    std::vector<AstNode> pos, kw;
    for (auto& v : values) {
      if (pick(3) == 0) {
        kw.push_back(node(py::Keyword, {AstNode::token(py::Identifier, choose(identifiers_)), std::move(v)}));
      } else {
        pos.push_back(std::move(v));
      }
    }
    AstNode args = node(py::ArgsNil);
    for (auto it = pos.rbegin(); it != pos.rend(); ++it) args = node(py::ArgsCons, {std::move(*it), std::move(args)});
    AstNode kws = node(py::KwNil);
    for (auto it = kw.rbegin(); it != kw.rend(); ++it) kws = node(py::KwCons, {std::move(*it), std::move(kws)});
    return node(py::Call, {std::move(callee), std::move(args), std::move(kws)});
  }

  AstNode expr(int depth) {
    std::size_t k = depth <= 0 ? pick(3) : pick(8);
    switch (k) {
      case 0: return node(py::NameExpr, {noise_name()});
      case 1: return num(choose(numbers_));
      case 2: return node(py::Str, {AstNode::token(py::String, choose(strings_))});
      case 3: return node(py::BinOp, {expr(depth - 1), node(py::BinOpTok, {AstNode::token(py::Op, choose(binops_))}),
                                      expr(depth - 1)});
      case 4: return node(py::Compare, {expr(depth - 1), node(py::CmpOpTok, {AstNode::token(py::Op, choose(cmpops_))}),
                                        expr(depth - 1)});
      case 5: {
        std::vector<AstNode> a;
        for (std::size_t i = pick(3); i > 0; --i) a.push_back(expr(depth - 1));
        return call(node(py::NameExpr, {noise_name()}), std::move(a));
      }
      case 6: return node(py::Attribute, {expr(depth - 1), AstNode::token(py::Identifier, choose(identifiers_))});
      default: return node(py::Subscript, {expr(depth - 1), expr(depth - 1)});
    }
  }

  AstNode stmts(std::vector<AstNode> body) {
    AstNode tail = node(py::StmtsNil);
    for (auto it = body.rbegin(); it != body.rend(); ++it) tail = node(py::StmtsCons, {std::move(*it), std::move(tail)});
    return tail;
  }

  AstNode block(int depth) {
    std::vector<AstNode> body;
    for (std::size_t i = pick(3); i > 0; --i) body.push_back(stmt(depth - 1));
    return stmts(std::move(body));
  }

  AstNode stmt(int depth) {
    std::size_t k = depth <= 0 ? pick(3) : pick(5);
    switch (k) {
      case 0: return node(py::Assign, {noise_name(), expr(depth)});
      case 1: return node(py::ExprStmt, {expr(depth)});
      case 2: return node(py::Return, {expr(depth)});
      case 3: return node(py::If, {expr(depth), block(depth), pick(2) == 0 ? node(py::StmtsNil) : block(depth)});
      default: return node(py::For, {noise_name(), expr(depth), block(depth)});
    }
  }

  /// Instantiates a planted fragment with noise in every hole.
  AstNode plant(const Fragment& f, int depth) {
    std::map<std::string, AstNode> bind;
    auto rec = [&](auto& self, const FragNode& n) -> void {
      if (n.is_hole() && !bind.contains(n.text)) {
        std::string nt = g_.nonterminal_name(n.symbol);
        if (nt == "Name") bind.emplace(n.text, noise_name());
        else if (nt == "Stmts") bind.emplace(n.text, block(depth));
        else bind.emplace(n.text, expr(depth));
      }
      for (const auto& c : n.children) self(self, c);
    };
    rec(rec, f.root);
    return instantiate(f, bind);
  }

 private:
  const Grammar& g_;
  Rng rng_;
  std::vector<std::string> identifiers_{"x", "y", "z", "data", "items", "count", "total", "value",
                                        "result", "node", "key", "idx", "buf", "process", "compute", "update"};
  std::vector<std::string> numbers_{"2", "3", "4", "5", "6", "7", "8", "9"};
  std::vector<std::string> strings_{"'a'", "'b'", "'name'", "'id'"};
  std::vector<std::string> binops_{"+", "-", "*"};
  std::vector<std::string> cmpops_{"<", ">"};
};

}  // namespace detail

/// A corpus of noise programs with planted fragments and a log of where
/// each was inserted.
inline SyntheticCorpus generate_synthetic(const PlantSpec& spec) {
  if (spec.trees < 0) throw Error("tree count must be nonnegative");
  if (spec.min_plants < 0 || spec.max_plants < spec.min_plants) throw Error("bad plant count range");
  SyntheticCorpus out;
  out.corpus.grammar = python_subset_grammar();
  const Grammar& g = out.corpus.grammar;
  auto all = planted_fragments(g);
  for (int p : spec.plants) {
    if (p < 0 || p >= static_cast<int>(all.size())) throw Error("unknown planted fragment " + std::to_string(p));
    Fragment f = all[p];
    f.id = static_cast<int>(out.planted.size());
    out.planted.push_back(std::move(f));
  }
  detail::NoiseGen gen(g, spec.seed);
  for (int t = 0; t < spec.trees; ++t) {
    std::string id = "t" + std::to_string(t);
    std::vector<AstNode> body;
    std::vector<std::pair<std::size_t, int>> planted_at;  // (statement index, plant)
    std::vector<int> as_value;
    int n_noise = 2 + static_cast<int>(gen.pick(4));
    for (int i = 0; i < n_noise; ++i) body.push_back(gen.stmt(spec.noise_depth));
    for (std::size_t p = 0; p < out.planted.size(); ++p) {
      const Fragment& f = out.planted[p];
      int copies = spec.min_plants + static_cast<int>(gen.pick(static_cast<std::size_t>(spec.max_plants - spec.min_plants + 1)));
      for (int c = 0; c < copies; ++c) {
        AstNode inst = gen.plant(f, spec.noise_depth - 1);
        std::size_t at = gen.pick(body.size() + 1);
        int value = -1;  // child index of an Expr plant inside its statement
        if (g.nonterminal_name(f.root_nonterminal()) == "Expr") {
          switch (gen.pick(3)) {
            case 0: inst = gen.node(py::Assign, {gen.noise_name(), std::move(inst)}); value = 1; break;
            case 1: inst = gen.node(py::Return, {std::move(inst)}); value = 0; break;
            default: inst = gen.node(py::ExprStmt, {std::move(inst)}); value = 0; break;
          }
        }
        body.insert(body.begin() + static_cast<std::ptrdiff_t>(at), std::move(inst));
        for (auto& [s, q] : planted_at) {
          if (s >= at) ++s;
        }
        planted_at.emplace_back(at, static_cast<int>(p));
        as_value.push_back(value);
      }
    }
    CorpusEntry e;
    e.id = id;
    e.spec = "synthetic program " + std::to_string(t);
    e.ast = gen.node(py::Module, {gen.stmts(std::move(body))});
    for (std::size_t i = 0; i < planted_at.size(); ++i) {
      NodePath path{0};
      for (std::size_t s = 0; s < planted_at[i].first; ++s) path.push_back(1);
      path.push_back(0);
      if (as_value[i] >= 0) path.push_back(as_value[i]);
      out.insertions.push_back({id, planted_at[i].second, path});
    }
    out.corpus.entries.push_back(std::move(e));
  }
  return out;
}

/// Random tree of nonterminal `nt`. Beyond `depth` it takes productions of
/// least height, so generation always terminates. Lexemes are drawn from a
/// small per-class pool, which makes repeated subtrees likely.
inline AstNode random_ast(const Grammar& g, int nt, Rng& rng, int depth, int lexemes_per_class = 3) {
  // Minimum derivation height per nonterminal and per production.
  std::vector<int> nt_height(g.num_nonterminals(), std::numeric_limits<int>::max());
  auto prod_height = [&](const Production& p) {
    int h = 1;
    for (const Symbol& s : p.rhs) {
      if (s.is_nonterminal()) {
        if (nt_height[s.id] == std::numeric_limits<int>::max()) return std::numeric_limits<int>::max();
        h = std::max(h, nt_height[s.id] + 1);
      }
    }
    return h;
  };
  for (bool changed = true; changed;) {
    changed = false;
    for (const Production& p : g.productions()) {
      int h = prod_height(p);
      if (h < nt_height[p.lhs]) {
        nt_height[p.lhs] = h;
        changed = true;
      }
    }
  }
  auto rec = [&](auto& self, int sym, int d) -> AstNode {
    const auto& prods = g.productions_for(sym);
    if (prods.empty()) throw Error("nonterminal '" + g.nonterminal_name(sym) + "' has no productions");
    std::vector<int> options;
    if (d > 0) {
      options.assign(prods.begin(), prods.end());
    } else {
      int best = std::numeric_limits<int>::max();
      for (int p : prods) best = std::min(best, prod_height(g.production(p)));
      for (int p : prods) {
        if (prod_height(g.production(p)) == best) options.push_back(p);
      }
    }
    int p = options[rng() % options.size()];
    AstNode n;
    n.symbol = sym;
    n.production = p;
    for (const Symbol& s : g.production(p).rhs) {
      if (s.is_nonterminal()) {
        n.children.push_back(self(self, s.id, d - 1));
      } else {
        n.children.push_back(AstNode::token(s.id, g.terminal_name(s.id) + std::to_string(rng() % lexemes_per_class)));
      }
    }
    return n;
  };
  return rec(rec, nt, depth);
}

namespace io {

inline ojson synthetic_truth_to_json(const Grammar& g, const SyntheticCorpus& s) {
  ojson j;
  j["planted"] = ojson::array();
  for (const auto& f : s.planted) j["planted"].push_back(fragment_to_json(g, f));
  j["insertions"] = ojson::array();
  for (const auto& r : s.insertions) {
    j["insertions"].push_back({{"entry", r.entry_id}, {"plant", r.plant}, {"anchor", path_to_json(r.anchor)}});
  }
  return j;
}

}  // namespace io
}  // namespace idiomkit
