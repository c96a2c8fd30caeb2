#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "idiomkit/ast.hpp"
#include "idiomkit/grammar.hpp"

namespace idiomkit {

/// Node of an idiom body. Holes stand for whole subtrees of their nonterminal;
/// holes sharing a label must be instantiated with identical subtrees.
struct FragNode {
  enum class Kind : std::uint8_t { Interior, Token, Hole };

  Kind kind = Kind::Interior;
  int symbol = -1;      // nonterminal (Interior, Hole) or terminal class (Token)
  int production = -1;  // Interior only
  std::string text;     // lexeme (Token) or label (Hole)
  std::vector<FragNode> children;

  bool is_hole() const { return kind == Kind::Hole; }
  bool is_token() const { return kind == Kind::Token; }
  bool is_interior() const { return kind == Kind::Interior; }

  static FragNode interior(const Grammar& g, int production, std::vector<FragNode> children = {}) {
    FragNode n;
    n.kind = Kind::Interior;
    n.symbol = g.production(production).lhs;
    n.production = production;
    n.children = std::move(children);
    return n;
  }
  static FragNode token(int terminal_class, std::string lexeme) {
    FragNode n;
    n.kind = Kind::Token;
    n.symbol = terminal_class;
    n.text = std::move(lexeme);
    return n;
  }
  static FragNode hole(int nonterminal, std::string label) {
    FragNode n;
    n.kind = Kind::Hole;
    n.symbol = nonterminal;
    n.text = std::move(label);
    return n;
  }

  friend bool operator==(const FragNode&, const FragNode&) = default;
};

struct Fragment {
  int id = -1;
  FragNode root;

  int root_nonterminal() const { return root.symbol; }

  friend bool operator==(const Fragment&, const Fragment&) = default;
};

/// |I|: the number of non-hole nodes.
inline std::size_t fragment_size(const FragNode& n) {
  if (n.is_hole()) return 0;
  std::size_t s = 1;
  for (const auto& c : n.children) s += fragment_size(c);
  return s;
}
inline std::size_t fragment_size(const Fragment& f) { return fragment_size(f.root); }

inline std::size_t hole_count(const FragNode& n) {
  if (n.is_hole()) return 1;
  std::size_t s = 0;
  for (const auto& c : n.children) s += hole_count(c);
  return s;
}

/// A terminal idiom has no holes, i.e. no named arguments.
inline bool is_terminal_idiom(const Fragment& f) { return hole_count(f.root) == 0; }

/// Distinct hole labels in order of first depth-first occurrence.
inline std::vector<std::string> hole_labels(const FragNode& root) {
  std::vector<std::string> out;
  auto rec = [&](auto& self, const FragNode& n) -> void {
    if (n.is_hole()) {
      if (std::find(out.begin(), out.end(), n.text) == out.end()) out.push_back(n.text);
      return;
    }
    for (const auto& c : n.children) self(self, c);
  };
  rec(rec, root);
  return out;
}

/// Compact rendering, e.g. `Expr#14(Expr#10(Name#21('len')), ?l0:Args, Keywords#19)`.
inline std::string fragment_to_string(const Grammar& g, const FragNode& n) {
  switch (n.kind) {
    case FragNode::Kind::Hole:
      return "?" + n.text + ":" + g.nonterminal_name(n.symbol);
    case FragNode::Kind::Token:
      return "'" + n.text + "'";
    case FragNode::Kind::Interior:
      break;
  }
  std::string out = g.nonterminal_name(n.symbol) + "#" + std::to_string(n.production);
  if (n.children.empty()) return out;
  out += "(";
  for (std::size_t i = 0; i < n.children.size(); ++i) {
    if (i > 0) out += ", ";
    out += fragment_to_string(g, n.children[i]);
  }
  return out + ")";
}
inline std::string fragment_to_string(const Grammar& g, const Fragment& f) { return fragment_to_string(g, f.root); }

inline FragNode fragment_from_ast(const AstNode& n) {
  FragNode f;
  f.kind = n.is_token() ? FragNode::Kind::Token : FragNode::Kind::Interior;
  f.symbol = n.symbol;
  f.production = n.production;
  f.text = n.lexeme;
  for (const auto& c : n.children) f.children.push_back(fragment_from_ast(c));
  return f;
}

/// Structural equality under a consistent bijective renaming of hole labels.
inline bool equivalent_up_to_labels(const FragNode& a, const FragNode& b) {
  std::map<std::string, std::string> ab, ba;
  auto rec = [&](auto& self, const FragNode& x, const FragNode& y) -> bool {
    if (x.kind != y.kind || x.symbol != y.symbol || x.production != y.production) return false;
    if (x.is_hole()) {
      auto [i, fresh_a] = ab.emplace(x.text, y.text);
      auto [j, fresh_b] = ba.emplace(y.text, x.text);
      return i->second == y.text && j->second == x.text;
    }
    if (x.is_token()) return x.text == y.text;
    if (x.children.size() != y.children.size()) return false;
    for (std::size_t k = 0; k < x.children.size(); ++k) {
      if (!self(self, x.children[k], y.children[k])) return false;
    }
    return true;
  };
  return rec(rec, a, b);
}

/// Checks fragment well-formedness against the grammar.
inline std::vector<Violation> validate_fragment(const Grammar& g, const Fragment& f) {
  std::vector<Violation> out;
  if (!f.root.is_interior()) {
    out.push_back({{}, "fragment root must be an interior node"});
    return out;
  }
  std::map<std::string, int> label_types;
  NodePath path;
  auto rec = [&](auto& self, const FragNode& n) -> void {
    switch (n.kind) {
      case FragNode::Kind::Hole: {
        if (n.symbol < 0 || static_cast<std::size_t>(n.symbol) >= g.num_nonterminals()) {
          out.push_back({path, "hole '" + n.text + "' has unknown nonterminal"});
          return;
        }
        auto [it, fresh] = label_types.emplace(n.text, n.symbol);
        if (!fresh && it->second != n.symbol) {
          out.push_back({path, "label '" + n.text + "' used with different nonterminals"});
        }
        return;
      }
      case FragNode::Kind::Token:
        if (n.symbol < 0 || static_cast<std::size_t>(n.symbol) >= g.num_terminal_classes()) {
          out.push_back({path, "unknown terminal class"});
        }
        return;
      case FragNode::Kind::Interior:
        break;
    }
    if (!g.has_production(n.production)) {
      out.push_back({path, "unknown production " + std::to_string(n.production)});
      return;
    }
    const Production& p = g.production(n.production);
    if (p.lhs != n.symbol) out.push_back({path, "node nonterminal does not match production lhs"});
    if (p.rhs.size() != n.children.size()) {
      out.push_back({path, "arity mismatch for production " + std::to_string(p.id)});
      return;
    }
    for (std::size_t i = 0; i < p.rhs.size(); ++i) {
      const FragNode& c = n.children[i];
      path.push_back(static_cast<int>(i));
      bool want_token = p.rhs[i].is_terminal();
      if (want_token != c.is_token() || c.symbol != p.rhs[i].id) {
        out.push_back({path, "child does not match rhs of production " + std::to_string(p.id)});
      } else {
        self(self, c);
      }
      path.pop_back();
    }
  };
  rec(rec, f.root);
  return out;
}

/// An ordered collection of idioms with dense ids, indexed by root nonterminal.
class IdiomSet {
 public:
  IdiomSet() = default;

  /// Validates every fragment and requires fragments[i].id == i.
  static IdiomSet create(const Grammar& g, std::vector<Fragment> fragments) {
    IdiomSet s;
    s.by_root_.resize(g.num_nonterminals());
    for (std::size_t i = 0; i < fragments.size(); ++i) {
      const Fragment& f = fragments[i];
      if (f.id != static_cast<int>(i)) {
        throw Error("idiom ids must be dense and ordered; position " + std::to_string(i) +
                    " has id " + std::to_string(f.id));
      }
      auto vs = validate_fragment(g, f);
      if (!vs.empty()) throw InvalidAst("idiom " + std::to_string(f.id) + " is malformed", vs);
      s.by_root_[f.root_nonterminal()].push_back(f.id);
    }
    s.fragments_ = std::move(fragments);
    return s;
  }

  std::size_t size() const { return fragments_.size(); }
  bool empty() const { return fragments_.empty(); }
  bool contains(int id) const { return id >= 0 && static_cast<std::size_t>(id) < size(); }
  const Fragment& at(int id) const {
    if (!contains(id)) throw Error("unknown idiom id " + std::to_string(id));
    return fragments_[id];
  }
  std::span<const Fragment> fragments() const { return fragments_; }

  std::span<const int> rooted_at(int nonterminal) const {
    if (nonterminal < 0 || static_cast<std::size_t>(nonterminal) >= by_root_.size()) return {};
    return by_root_[nonterminal];
  }

 private:
  std::vector<Fragment> fragments_;
  std::vector<std::vector<int>> by_root_;
};

struct Occurrence {
  int idiom_id = -1;
  std::string entry_id;
  NodePath anchor;
  std::map<std::string, NodePath> bindings;  // label -> absolute path of bound subtree

  friend bool operator==(const Occurrence&, const Occurrence&) = default;
};

namespace detail {

struct MatchState {
  std::map<std::string, std::pair<const AstNode*, NodePath>> bound;
};

inline bool match_node(const FragNode& f, const AstNode& n, NodePath& path, MatchState& st) {
  switch (f.kind) {
    case FragNode::Kind::Hole: {
      if (n.is_token() || n.symbol != f.symbol) return false;
      auto it = st.bound.find(f.text);
      if (it != st.bound.end()) return *it->second.first == n;
      st.bound.emplace(f.text, std::make_pair(&n, path));
      return true;
    }
    case FragNode::Kind::Token:
      return n.is_token() && n.symbol == f.symbol && n.lexeme == f.text;
    case FragNode::Kind::Interior:
      break;
  }
  if (n.is_token() || n.production != f.production) return false;
  if (n.children.size() != f.children.size()) return false;
  for (std::size_t i = 0; i < f.children.size(); ++i) {
    path.push_back(static_cast<int>(i));
    bool ok = match_node(f.children[i], n.children[i], path, st);
    path.pop_back();
    if (!ok) return false;
  }
  return true;
}

}  // namespace detail

/// Matches `fragment` at the node `anchor` of `root`. Holes bind whole
/// subtrees; repeated labels require structurally identical subtrees.
inline std::optional<Occurrence> match_at(const Fragment& fragment, const AstNode& root,
                                          const NodePath& anchor,
                                          std::string_view entry_id = {}) {
  const AstNode* at = resolve(root, anchor);
  if (at == nullptr) return std::nullopt;
  detail::MatchState st;
  NodePath path = anchor;
  if (!detail::match_node(fragment.root, *at, path, st)) return std::nullopt;
  Occurrence occ;
  occ.idiom_id = fragment.id;
  occ.entry_id = std::string(entry_id);
  occ.anchor = anchor;
  for (auto& [label, b] : st.bound) occ.bindings.emplace(label, std::move(b.second));
  return occ;
}

/// Every occurrence of every idiom at every anchor, overlapping and nested ones
/// included. Ordered by anchor (depth-first pre-order), then idiom id.
inline std::vector<Occurrence> find_occurrences(const IdiomSet& idioms, const CorpusEntry& entry) {
  std::vector<Occurrence> out;
  if (idioms.empty()) return out;
  for_each_node(entry.ast, [&](const AstNode& n, const NodePath& path) {
    if (n.is_token()) return;
    for (int id : idioms.rooted_at(n.symbol)) {
      const Fragment& f = idioms.at(id);
      if (f.root.production != n.production) continue;
      if (auto occ = match_at(f, entry.ast, path, entry.id)) out.push_back(std::move(*occ));
    }
  });
  return out;
}

/// Substitutes bound subtrees for holes. Throws Error naming the label when a
/// binding is missing or its root nonterminal differs from the hole's.
inline AstNode instantiate(const Fragment& fragment, const std::map<std::string, AstNode>& bindings) {
  auto rec = [&](auto& self, const FragNode& f) -> AstNode {
    switch (f.kind) {
      case FragNode::Kind::Hole: {
        auto it = bindings.find(f.text);
        if (it == bindings.end()) throw Error("no binding for hole label '" + f.text + "'");
        if (it->second.is_token() || it->second.symbol != f.symbol) {
          throw Error("binding for hole label '" + f.text + "' has the wrong nonterminal");
        }
        return it->second;
      }
      case FragNode::Kind::Token:
        return AstNode::token(f.symbol, f.text);
      case FragNode::Kind::Interior:
        break;
    }
    AstNode n;
    n.symbol = f.symbol;
    n.production = f.production;
    n.children.reserve(f.children.size());
    for (const auto& c : f.children) n.children.push_back(self(self, c));
    return n;
  };
  return rec(rec, fragment.root);
}

/// Bound subtrees of an occurrence, keyed by label.
inline std::map<std::string, AstNode> bound_subtrees(const Occurrence& occ, const AstNode& root) {
  std::map<std::string, AstNode> out;
  for (const auto& [label, path] : occ.bindings) {
    const AstNode* n = resolve(root, path);
    if (n == nullptr) throw Error("binding for '" + label + "' does not resolve");
    out.emplace(label, *n);
  }
  return out;
}

}  // namespace idiomkit
