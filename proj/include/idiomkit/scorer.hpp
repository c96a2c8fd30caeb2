#pragma once

#include <cmath>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "idiomkit/ast.hpp"
#include "idiomkit/fragment.hpp"
#include "idiomkit/grammar.hpp"
#include "idiomkit/trace.hpp"

namespace idiomkit {

inline constexpr std::string_view kUnknownLexeme = "<unk>";

/// Identity of the previous action as seen by a scorer. Tokens are collapsed
/// to their terminal class.
struct PrevAction {
  enum class Kind : std::uint8_t { Start, Rule, Idiom, Token };
  Kind kind = Kind::Start;
  int id = -1;

  static PrevAction of(const Action& a, Symbol frontier) {
    switch (a.kind) {
      case Action::Kind::ApplyRule: return {Kind::Rule, a.id};
      case Action::Kind::ApplyIdiom: return {Kind::Idiom, a.id};
      case Action::Kind::GetToken: return {Kind::Token, frontier.id};
    }
    return {};
  }

  friend auto operator<=>(const PrevAction&, const PrevAction&) = default;
};

/// Finite summary of the partial tree at a generation step.
struct ActionContext {
  Symbol frontier;
  int parent_production = -1;  // -1 at the root
  int child_index = -1;        // position in the parent; see child_position
  PrevAction prev;

  friend auto operator<=>(const ActionContext&, const ActionContext&) = default;
};

/// Position of child `child` of `production` as seen by a scorer. A list
/// written as a right-recursive production (Stmts -> Stmt Stmts) counts its
/// tail positions along the chain, so the k-th tail of one list is at
/// rhs.size() - 1 + k. Other children keep their index. `parent_position` is
/// the position of the node that applied `production`.
inline int child_position(const Grammar& g, int production, int child, int parent_production,
                          int parent_position) {
  const Production& p = g.production(production);
  const int last = static_cast<int>(p.rhs.size()) - 1;
  if (child != last || p.rhs.size() < 2 || p.rhs[child] != Symbol::nonterminal(p.lhs)) return child;
  if (parent_production == production && parent_position >= last) return parent_position + 1;
  return last;
}

/// Contexts for every step of the original (idiom-free) trace of `ast`.
inline std::vector<ActionContext> contexts_for(const Grammar& g, const AstNode& ast) {
  std::vector<ActionContext> out;
  PrevAction prev;
  auto rec = [&](auto& self, const AstNode& n, int parent, int position) -> void {
    out.push_back({n.kind_symbol(), parent, position, prev});
    prev = n.is_token() ? PrevAction{PrevAction::Kind::Token, n.symbol}
                        : PrevAction{PrevAction::Kind::Rule, n.production};
    for (std::size_t i = 0; i < n.children.size(); ++i) {
      self(self, n.children[i], n.production, child_position(g, n.production, static_cast<int>(i), parent, position));
    }
  };
  rec(rec, ast, -1, -1);
  return out;
}

/// Known lexemes per terminal class; anything else maps to "<unk>".
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::size_t num_terminal_classes) : lexemes_(num_terminal_classes) {}

  static Vocabulary from_corpus(const Grammar& g, std::span<const CorpusEntry> corpus) {
    Vocabulary v(g.num_terminal_classes());
    for (const auto& e : corpus) {
      for_each_node(e.ast, [&](const AstNode& n, const NodePath&) {
        if (n.is_token()) v.add(n.symbol, n.lexeme);
      });
    }
    return v;
  }

  void add(int terminal_class, const std::string& lexeme) {
    if (lexeme != kUnknownLexeme) lexemes_.at(terminal_class).insert(lexeme);
  }
  bool contains(int terminal_class, const std::string& lexeme) const {
    return lexemes_.at(terminal_class).contains(lexeme);
  }
  const std::set<std::string>& lexemes(int terminal_class) const { return lexemes_.at(terminal_class); }
  std::size_t num_terminal_classes() const { return lexemes_.size(); }

 private:
  std::vector<std::set<std::string>> lexemes_;
};

/// Legal actions at a frontier: productions then idioms rooted at a
/// nonterminal; known lexemes then "<unk>" for a terminal class.
inline std::vector<Action> legal_actions(const Grammar& g, const IdiomSet& idioms,
                                         const Vocabulary& vocab, Symbol frontier) {
  std::vector<Action> out;
  if (frontier.is_nonterminal()) {
    for (int p : g.productions_for(frontier.id)) out.push_back(Action::rule(p));
    for (int i : idioms.rooted_at(frontier.id)) out.push_back(Action::idiom(i));
  } else {
    for (const auto& lex : vocab.lexemes(frontier.id)) out.push_back(Action::token(lex));
    out.push_back(Action::token(std::string(kUnknownLexeme)));
  }
  return out;
}

/// Maps out-of-vocabulary tokens to "<unk>".
inline Action canonical_action(const Vocabulary& vocab, Symbol frontier, const Action& a) {
  if (a.is_token() && !vocab.contains(frontier.id, a.lexeme)) return Action::token(std::string(kUnknownLexeme));
  return a;
}

class ScorerContractError : public Error {
 public:
  using Error::Error;
};

/// The seam where a learned model plugs in: a distribution over exactly the
/// given legal action set. `history` is the unrolled action sequence so far.
class ActionScorer {
 public:
  virtual ~ActionScorer() = default;
  virtual const Vocabulary& vocabulary() const = 0;
  virtual std::vector<double> distribution(const ActionContext& ctx, std::span<const Action> legal,
                                           std::span<const Action> history) const = 0;
};

/// Throws ScorerContractError unless `probs` is a distribution over `legal`.
inline void check_distribution(std::span<const double> probs, std::size_t legal_size) {
  if (probs.size() != legal_size) {
    throw ScorerContractError("scorer returned " + std::to_string(probs.size()) +
                              " probabilities for " + std::to_string(legal_size) + " legal actions");
  }
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ScorerContractError("scorer returned an invalid probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ScorerContractError("scorer mass over the legal set is " + std::to_string(sum) +
                              "; mass outside the legal set is not allowed");
  }
}

class UniformScorer final : public ActionScorer {
 public:
  explicit UniformScorer(Vocabulary vocab) : vocab_(std::move(vocab)) {}

  const Vocabulary& vocabulary() const override { return vocab_; }
  std::vector<double> distribution(const ActionContext&, std::span<const Action> legal,
                                   std::span<const Action>) const override {
    return std::vector<double>(legal.size(), 1.0 / static_cast<double>(legal.size()));
  }

 private:
  Vocabulary vocab_;
};

/// Fractional count tables with add-k smoothing over the legal set.
class CountScorer final : public ActionScorer {
 public:
  CountScorer(Vocabulary vocab, double k = 0.1) : vocab_(std::move(vocab)), k_(k) {}

  const Vocabulary& vocabulary() const override { return vocab_; }
  double smoothing() const { return k_; }

  void add(const ActionContext& ctx, const Action& action, double weight) {
    counts_[ctx][action] += weight;
  }
  double count(const ActionContext& ctx, const Action& action) const {
    auto it = counts_.find(ctx);
    if (it == counts_.end()) return 0.0;
    auto jt = it->second.find(action);
    return jt == it->second.end() ? 0.0 : jt->second;
  }
  const std::map<ActionContext, std::map<Action, double>>& table() const { return counts_; }

  std::vector<double> distribution(const ActionContext& ctx, std::span<const Action> legal,
                                   std::span<const Action>) const override {
    std::vector<double> out(legal.size(), k_);
    auto it = counts_.find(ctx);
    if (it != counts_.end()) {
      for (std::size_t i = 0; i < legal.size(); ++i) {
        auto jt = it->second.find(legal[i]);
        if (jt != it->second.end()) out[i] += jt->second;
      }
    }
    double z = 0.0;
    for (double c : out) z += c;
    if (z <= 0.0) {
      // k = 0 and an unseen context: fall back to uniform.
      std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(legal.size()));
      return out;
    }
    for (double& c : out) c /= z;
    return out;
  }

 private:
  Vocabulary vocab_;
  double k_;
  std::map<ActionContext, std::map<Action, double>> counts_;
};

// ---- persistence -------------------------------------------------------------

namespace io {

inline nlohmann::ordered_json symbol_to_json(const Grammar& g, Symbol s) {
  nlohmann::ordered_json j;
  j[s.is_nonterminal() ? "nt" : "tc"] = g.symbol_name(s);
  return j;
}

inline Symbol symbol_from_json(const Grammar& g, const nlohmann::json& j) {
  if (j.contains("nt")) {
    auto id = g.find_nonterminal(j.at("nt").get<std::string>());
    if (!id) throw Error("unknown nonterminal in scorer file");
    return Symbol::nonterminal(*id);
  }
  auto id = g.find_terminal(j.at("tc").get<std::string>());
  if (!id) throw Error("unknown terminal class in scorer file");
  return Symbol::terminal(*id);
}

inline const char* prev_kind_name(PrevAction::Kind k) {
  switch (k) {
    case PrevAction::Kind::Start: return "start";
    case PrevAction::Kind::Rule: return "rule";
    case PrevAction::Kind::Idiom: return "idiom";
    case PrevAction::Kind::Token: return "token";
  }
  return "start";
}

inline nlohmann::ordered_json action_to_json(const Action& a) {
  nlohmann::ordered_json j;
  switch (a.kind) {
    case Action::Kind::ApplyRule: j["rule"] = a.id; break;
    case Action::Kind::ApplyIdiom: j["idiom"] = a.id; break;
    case Action::Kind::GetToken: j["token"] = a.lexeme; break;
  }
  return j;
}

inline Action action_from_json(const nlohmann::json& j) {
  if (j.contains("rule")) return Action::rule(j.at("rule").get<int>());
  if (j.contains("idiom")) return Action::idiom(j.at("idiom").get<int>());
  return Action::token(j.at("token").get<std::string>());
}

inline nlohmann::ordered_json scorer_to_json(const Grammar& g, const CountScorer& s) {
  nlohmann::ordered_json j;
  j["k"] = s.smoothing();
  j["vocab"] = nlohmann::ordered_json::array();
  for (std::size_t tc = 0; tc < s.vocabulary().num_terminal_classes(); ++tc) {
    for (const auto& lex : s.vocabulary().lexemes(static_cast<int>(tc))) {
      j["vocab"].push_back({{"tc", g.terminal_name(static_cast<int>(tc))}, {"lex", lex}});
    }
  }
  j["counts"] = nlohmann::ordered_json::array();
  for (const auto& [ctx, row] : s.table()) {
    nlohmann::ordered_json cj;
    cj["frontier"] = symbol_to_json(g, ctx.frontier);
    cj["parent"] = ctx.parent_production;
    cj["child"] = ctx.child_index;
    cj["prev"] = {{"kind", prev_kind_name(ctx.prev.kind)}, {"id", ctx.prev.id}};
    for (const auto& [action, w] : row) {
      nlohmann::ordered_json rec;
      rec["ctx"] = cj;
      rec["action"] = action_to_json(action);
      rec["w"] = w;
      j["counts"].push_back(std::move(rec));
    }
  }
  return j;
}

inline CountScorer scorer_from_json(const Grammar& g, const nlohmann::json& j) {
  try {
    Vocabulary vocab(g.num_terminal_classes());
    for (const auto& v : j.at("vocab")) {
      auto tc = g.find_terminal(v.at("tc").get<std::string>());
      if (!tc) throw Error("unknown terminal class in scorer vocabulary");
      vocab.add(*tc, v.at("lex").get<std::string>());
    }
    CountScorer s(std::move(vocab), j.at("k").get<double>());
    for (const auto& rec : j.at("counts")) {
      const auto& cj = rec.at("ctx");
      ActionContext ctx;
      ctx.frontier = symbol_from_json(g, cj.at("frontier"));
      ctx.parent_production = cj.at("parent").get<int>();
      ctx.child_index = cj.at("child").get<int>();
      std::string kind = cj.at("prev").at("kind").get<std::string>();
      ctx.prev.id = cj.at("prev").at("id").get<int>();
      ctx.prev.kind = kind == "rule"    ? PrevAction::Kind::Rule
                      : kind == "idiom" ? PrevAction::Kind::Idiom
                      : kind == "token" ? PrevAction::Kind::Token
                                        : PrevAction::Kind::Start;
      s.add(ctx, action_from_json(rec.at("action")), rec.at("w").get<double>());
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed scorer file: ") + e.what());
  }
}

}  // namespace io
}  // namespace idiomkit
