#pragma once

#include <optional>
#include <string>
#include <vector>

#include "idiomkit/ast.hpp"
#include "idiomkit/fragment.hpp"
#include "idiomkit/grammar.hpp"

namespace idiomkit {

/// One generation step: expand a nonterminal by a production or by an idiom,
/// or emit a token for a terminal class.
struct Action {
  enum class Kind : std::uint8_t { ApplyRule, ApplyIdiom, GetToken };

  Kind kind = Kind::ApplyRule;
  int id = -1;  // production id or idiom id; unused for GetToken
  std::string lexeme;

  static Action rule(int production) { return {Kind::ApplyRule, production, {}}; }
  static Action idiom(int idiom_id) { return {Kind::ApplyIdiom, idiom_id, {}}; }
  static Action token(std::string lexeme) { return {Kind::GetToken, -1, std::move(lexeme)}; }

  bool is_rule() const { return kind == Kind::ApplyRule; }
  bool is_idiom() const { return kind == Kind::ApplyIdiom; }
  bool is_token() const { return kind == Kind::GetToken; }

  std::string to_string() const {
    switch (kind) {
      case Kind::ApplyRule: return "ApplyRule(" + std::to_string(id) + ")";
      case Kind::ApplyIdiom: return "ApplyIdiom(" + std::to_string(id) + ")";
      case Kind::GetToken: return "GetToken(\"" + lexeme + "\")";
    }
    return "?";
  }

  friend auto operator<=>(const Action&, const Action&) = default;
  friend bool operator==(const Action&, const Action&) = default;
};

struct TraceStep {
  int t = 0;  // 1-based
  NodePath frontier;
  Action action;

  friend bool operator==(const TraceStep&, const TraceStep&) = default;
};

using ActionTrace = std::vector<TraceStep>;

class TraceError : public Error {
 public:
  TraceError(int step, const std::string& what)
      : Error("step " + std::to_string(step) + ": " + what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

/// Depth-first, left-to-right linearization: ApplyRule at interior nodes,
/// GetToken at tokens. Throws InvalidAst if the tree does not validate.
inline ActionTrace to_trace(const Grammar& g, const AstNode& ast) {
  auto violations = validate_ast(g, ast);
  if (!violations.empty()) throw InvalidAst("cannot linearize invalid ast", std::move(violations));
  ActionTrace trace;
  for_each_node(ast, [&](const AstNode& n, const NodePath& path) {
    TraceStep step;
    step.t = static_cast<int>(trace.size()) + 1;
    step.frontier = path;
    step.action = n.is_token() ? Action::token(n.lexeme) : Action::rule(n.production);
    trace.push_back(std::move(step));
  });
  return trace;
}

namespace detail {

struct Slot {
  AstNode* node;
  Symbol expected;
  NodePath path;
};

struct Copy {
  AstNode* dest;
  const AstNode* source;
};

/// Writes the body of `f` into `dst`. Returns the slots to fill for the first
/// occurrence of each label, in depth-first order; later occurrences of a
/// label are recorded in `copies` and filled after decoding.
inline void splice_fragment(const FragNode& f, AstNode& dst, NodePath& path,
                            std::map<std::string, AstNode*>& first, std::vector<Slot>& slots,
                            std::vector<std::pair<AstNode*, std::string>>& pending_copies) {
  switch (f.kind) {
    case FragNode::Kind::Hole: {
      dst.symbol = f.symbol;
      auto it = first.find(f.text);
      if (it == first.end()) {
        first.emplace(f.text, &dst);
        slots.push_back({&dst, Symbol::nonterminal(f.symbol), path});
      } else {
        pending_copies.emplace_back(&dst, f.text);
      }
      return;
    }
    case FragNode::Kind::Token:
      dst = AstNode::token(f.symbol, f.text);
      return;
    case FragNode::Kind::Interior:
      break;
  }
  dst.symbol = f.symbol;
  dst.production = f.production;
  dst.children.resize(f.children.size());
  for (std::size_t i = 0; i < f.children.size(); ++i) {
    path.push_back(static_cast<int>(i));
    splice_fragment(f.children[i], dst.children[i], path, first, slots, pending_copies);
    path.pop_back();
  }
}

}  // namespace detail

/// Replays a trace into a tree. ApplyIdiom steps inline the idiom body and
/// decoding continues at its holes (first occurrence of each label, depth-first);
/// repeated labels receive copies of the first binding.
///
/// `root` is the expected root symbol; when absent it is taken from the first
/// action (lhs of the production or root of the idiom).
inline AstNode from_trace(const Grammar& g, const ActionTrace& trace, const IdiomSet& idioms,
                          std::optional<Symbol> root = std::nullopt) {
  if (trace.empty()) throw TraceError(1, "empty trace");
  if (!root) {
    const Action& a = trace.front().action;
    if (a.is_rule()) {
      if (!g.has_production(a.id)) throw TraceError(1, "unknown production " + std::to_string(a.id));
      root = Symbol::nonterminal(g.production(a.id).lhs);
    } else if (a.is_idiom()) {
      if (!idioms.contains(a.id)) throw TraceError(1, "unresolved idiom id " + std::to_string(a.id));
      root = Symbol::nonterminal(idioms.at(a.id).root_nonterminal());
    } else {
      throw TraceError(1, "cannot infer root symbol from a token action");
    }
  }

  AstNode result;
  std::vector<detail::Slot> stack{{&result, *root, {}}};
  std::vector<detail::Copy> copies;

  for (std::size_t i = 0; i < trace.size(); ++i) {
    const int t = static_cast<int>(i) + 1;
    const TraceStep& step = trace[i];
    if (stack.empty()) throw TraceError(t, "extra action " + step.action.to_string() + " after tree completed");
    detail::Slot slot = std::move(stack.back());
    stack.pop_back();
    if (step.frontier != slot.path) {
      throw TraceError(t, "frontier " + path_to_string(step.frontier) + " but expected " +
                              path_to_string(slot.path));
    }
    const Action& a = step.action;
    const std::string expected = "expected " + std::string(slot.expected.is_nonterminal() ? "nonterminal '" : "terminal class '") +
                                 g.symbol_name(slot.expected) + "'";
    switch (a.kind) {
      case Action::Kind::GetToken: {
        if (!slot.expected.is_terminal()) throw TraceError(t, "illegal GetToken; " + expected);
        *slot.node = AstNode::token(slot.expected.id, a.lexeme);
        break;
      }
      case Action::Kind::ApplyRule: {
        if (!slot.expected.is_nonterminal()) throw TraceError(t, "illegal " + a.to_string() + "; " + expected);
        if (!g.has_production(a.id)) throw TraceError(t, "unknown production " + std::to_string(a.id));
        const Production& p = g.production(a.id);
        if (p.lhs != slot.expected.id) throw TraceError(t, "illegal " + a.to_string() + "; " + expected);
        AstNode& n = *slot.node;
        n.symbol = p.lhs;
        n.production = p.id;
        n.lexeme.clear();
        n.children.assign(p.rhs.size(), AstNode{});
        for (std::size_t c = p.rhs.size(); c-- > 0;) {
          NodePath child = slot.path;
          child.push_back(static_cast<int>(c));
          stack.push_back({&n.children[c], p.rhs[c], std::move(child)});
        }
        break;
      }
      case Action::Kind::ApplyIdiom: {
        if (!idioms.contains(a.id)) throw TraceError(t, "unresolved idiom id " + std::to_string(a.id));
        const Fragment& f = idioms.at(a.id);
        if (!slot.expected.is_nonterminal() || f.root_nonterminal() != slot.expected.id) {
          throw TraceError(t, "illegal " + a.to_string() + "; " + expected);
        }
        std::map<std::string, AstNode*> first;
        std::vector<detail::Slot> holes;
        std::vector<std::pair<AstNode*, std::string>> dups;
        NodePath path = slot.path;
        detail::splice_fragment(f.root, *slot.node, path, first, holes, dups);
        for (auto& [dest, label] : dups) copies.push_back({dest, first.at(label)});
        for (auto it = holes.rbegin(); it != holes.rend(); ++it) stack.push_back(std::move(*it));
        break;
      }
    }
  }
  if (!stack.empty()) {
    const detail::Slot& s = stack.back();
    throw TraceError(static_cast<int>(trace.size()) + 1,
                     "trace ended early; expected " + g.symbol_name(s.expected) + " at " +
                         path_to_string(s.path));
  }
  // Inner idioms were spliced after outer ones, so copy innermost first.
  for (auto it = copies.rbegin(); it != copies.rend(); ++it) *it->dest = *it->source;

  auto violations = validate_ast(g, result);
  if (!violations.empty()) throw InvalidAst("replayed trace produced an invalid tree", std::move(violations));
  return result;
}

}  // namespace idiomkit
