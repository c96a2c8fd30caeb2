#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "idiomkit/grammar.hpp"

namespace idiomkit {

/// Child-index sequence from the root. The only persistent node identity.
using NodePath = std::vector<int>;

/// A parse-tree node. Interior nodes carry the production that expanded them
/// (and its lhs as `symbol`); token nodes carry a terminal class and an opaque
/// lexeme.
struct AstNode {
  int symbol = -1;
  int production = -1;  // -1 marks a token node
  std::string lexeme;
  std::vector<AstNode> children;

  bool is_token() const { return production < 0; }
  Symbol kind_symbol() const {
    return is_token() ? Symbol::terminal(symbol) : Symbol::nonterminal(symbol);
  }

  static AstNode token(int terminal_class, std::string lexeme) {
    AstNode n;
    n.symbol = terminal_class;
    n.lexeme = std::move(lexeme);
    return n;
  }

  static AstNode interior(const Grammar& g, int production, std::vector<AstNode> children = {}) {
    AstNode n;
    n.symbol = g.production(production).lhs;
    n.production = production;
    n.children = std::move(children);
    return n;
  }

  friend bool operator==(const AstNode&, const AstNode&) = default;
};

inline std::size_t node_count(const AstNode& n) {
  std::size_t c = 1;
  for (const auto& ch : n.children) c += node_count(ch);
  return c;
}

/// Returns nullptr when the path does not resolve.
inline const AstNode* resolve(const AstNode& root, const NodePath& path) {
  const AstNode* cur = &root;
  for (int i : path) {
    if (i < 0 || static_cast<std::size_t>(i) >= cur->children.size()) return nullptr;
    cur = &cur->children[i];
  }
  return cur;
}

inline AstNode* resolve(AstNode& root, const NodePath& path) {
  return const_cast<AstNode*>(resolve(static_cast<const AstNode&>(root), path));
}

inline std::string path_to_string(const NodePath& path) {
  std::string s = "[";
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(path[i]);
  }
  return s + "]";
}

/// Visits every node in depth-first pre-order together with its path.
template <class Fn>
void for_each_node(const AstNode& root, Fn&& fn) {
  NodePath path;
  auto rec = [&](auto& self, const AstNode& n) -> void {
    fn(n, static_cast<const NodePath&>(path));
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      path.push_back(static_cast<int>(i));
      self(self, n.children[i]);
      path.pop_back();
    }
  };
  rec(rec, root);
}

struct Violation {
  NodePath path;
  std::string message;

  friend bool operator==(const Violation&, const Violation&) = default;
};

/// Checks every Ast invariant against `g`. An empty result means valid.
inline std::vector<Violation> validate_ast(const Grammar& g, const AstNode& root) {
  std::vector<Violation> out;
  NodePath path;
  auto rec = [&](auto& self, const AstNode& n) -> void {
    if (n.is_token()) {
      if (n.symbol < 0 || static_cast<std::size_t>(n.symbol) >= g.num_terminal_classes()) {
        out.push_back({path, "unknown terminal class " + std::to_string(n.symbol)});
      }
      if (!n.children.empty()) out.push_back({path, "token node has children"});
      return;
    }
    if (!g.has_production(n.production)) {
      out.push_back({path, "unknown production " + std::to_string(n.production)});
      return;
    }
    const Production& p = g.production(n.production);
    if (n.symbol != p.lhs) {
      out.push_back({path, "node nonterminal does not match lhs of production " +
                               std::to_string(p.id)});
    }
    if (n.children.size() != p.rhs.size()) {
      out.push_back({path, "production " + std::to_string(p.id) + " expects " +
                               std::to_string(p.rhs.size()) + " children, got " +
                               std::to_string(n.children.size())});
      return;
    }
    for (std::size_t i = 0; i < p.rhs.size(); ++i) {
      const AstNode& ch = n.children[i];
      path.push_back(static_cast<int>(i));
      if (p.rhs[i].is_terminal() && !ch.is_token()) {
        out.push_back({path, "production " + std::to_string(p.id) + " expects terminal class '" +
                                 g.terminal_name(p.rhs[i].id) + "' here"});
      } else if (p.rhs[i].is_nonterminal() && ch.is_token()) {
        out.push_back({path, "token where production " + std::to_string(p.id) +
                                 " expects nonterminal '" + g.nonterminal_name(p.rhs[i].id) + "'"});
      } else if (ch.symbol != p.rhs[i].id && (ch.is_token() || g.has_production(ch.production))) {
        out.push_back({path, "child symbol does not match rhs of production " +
                                 std::to_string(p.id)});
      }
      self(self, ch);
      path.pop_back();
    }
  };
  rec(rec, root);
  return out;
}

class InvalidAst : public Error {
 public:
  InvalidAst(std::string context, std::vector<Violation> violations)
      : Error(format(context, violations)), violations_(std::move(violations)) {}

  const std::vector<Violation>& violations() const { return violations_; }

 private:
  static std::string format(const std::string& context, const std::vector<Violation>& vs) {
    std::string msg = context.empty() ? "invalid ast" : context;
    for (const auto& v : vs) msg += "\n  at " + path_to_string(v.path) + ": " + v.message;
    return msg;
  }

  std::vector<Violation> violations_;
};

struct CorpusEntry {
  std::string id;
  std::string spec;  // natural-language description; carried, never interpreted
  AstNode ast;
};

struct Corpus {
  Grammar grammar;
  std::vector<CorpusEntry> entries;
};

}  // namespace idiomkit
