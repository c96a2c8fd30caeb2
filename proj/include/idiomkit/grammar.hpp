#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace idiomkit {

/// Base class for every error raised by the library. The CLI maps these to
/// exit code 2 ("data error").
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GrammarError : public Error {
 public:
  using Error::Error;
};

/// A grammar symbol: either a nonterminal or a terminal (token) class. The id
/// indexes the owning Grammar's name table for that kind.
struct Symbol {
  enum class Kind : std::uint8_t { Nonterminal, Terminal };

  Kind kind = Kind::Nonterminal;
  int id = -1;

  static constexpr Symbol nonterminal(int id) { return {Kind::Nonterminal, id}; }
  static constexpr Symbol terminal(int id) { return {Kind::Terminal, id}; }

  constexpr bool is_nonterminal() const { return kind == Kind::Nonterminal; }
  constexpr bool is_terminal() const { return kind == Kind::Terminal; }

  friend constexpr auto operator<=>(const Symbol&, const Symbol&) = default;
};

struct Production {
  int id = -1;
  int lhs = -1;
  std::vector<Symbol> rhs;
};

/// Context-free grammar with positionally fixed-arity productions. Instances
/// are immutable once built and validated.
class Grammar {
 public:
  struct RhsSymbol {
    bool nonterminal = true;
    std::string name;
  };
  struct ProductionSpec {
    int id = -1;
    std::string lhs;
    std::vector<RhsSymbol> rhs;
  };

  Grammar() = default;

  /// Builds a grammar from named parts; throws GrammarError if any invariant
  /// fails (unknown rhs symbol, non-dense ids, missing start, dead nonterminal).
  static Grammar build(const std::string& start,
                       const std::vector<std::string>& terminal_classes,
                       const std::vector<ProductionSpec>& productions) {
    Grammar g;
    for (const auto& tc : terminal_classes) {
      if (g.terminal_index_.contains(tc)) {
        throw GrammarError("duplicate terminal class '" + tc + "'");
      }
      g.terminal_index_.emplace(tc, static_cast<int>(g.terminal_names_.size()));
      g.terminal_names_.push_back(tc);
    }
    // Nonterminals are exactly the production left-hand sides, in order of
    // first appearance.
    for (const auto& p : productions) {
      if (g.terminal_index_.contains(p.lhs)) {
        throw GrammarError("production " + std::to_string(p.id) + " has terminal class '" +
                           p.lhs + "' as lhs");
      }
      if (!g.nonterminal_index_.contains(p.lhs)) {
        g.nonterminal_index_.emplace(p.lhs, static_cast<int>(g.nonterminal_names_.size()));
        g.nonterminal_names_.push_back(p.lhs);
      }
    }
    std::vector<const ProductionSpec*> by_id(productions.size(), nullptr);
    for (const auto& p : productions) {
      if (p.id < 0 || static_cast<std::size_t>(p.id) >= productions.size()) {
        throw GrammarError("production ids must be dense from 0; got " + std::to_string(p.id));
      }
      if (by_id[p.id] != nullptr) {
        throw GrammarError("duplicate production id " + std::to_string(p.id));
      }
      by_id[p.id] = &p;
    }
    g.by_lhs_.resize(g.nonterminal_names_.size());
    for (const auto* spec : by_id) {
      Production prod;
      prod.id = spec->id;
      prod.lhs = g.nonterminal_index_.at(spec->lhs);
      for (const auto& s : spec->rhs) {
        if (s.nonterminal) {
          auto it = g.nonterminal_index_.find(s.name);
          if (it == g.nonterminal_index_.end()) {
            throw GrammarError("production " + std::to_string(spec->id) +
                               " references nonterminal '" + s.name +
                               "' which has no productions");
          }
          prod.rhs.push_back(Symbol::nonterminal(it->second));
        } else {
          auto it = g.terminal_index_.find(s.name);
          if (it == g.terminal_index_.end()) {
            throw GrammarError("production " + std::to_string(spec->id) +
                               " references undeclared terminal class '" + s.name + "'");
          }
          prod.rhs.push_back(Symbol::terminal(it->second));
        }
      }
      g.by_lhs_[prod.lhs].push_back(prod.id);
      g.productions_.push_back(std::move(prod));
    }
    auto it = g.nonterminal_index_.find(start);
    if (it == g.nonterminal_index_.end()) {
      throw GrammarError("start symbol '" + start + "' is not a nonterminal with productions");
    }
    g.start_ = it->second;
    return g;
  }

  int start() const { return start_; }
  Symbol start_symbol() const { return Symbol::nonterminal(start_); }

  std::size_t num_nonterminals() const { return nonterminal_names_.size(); }
  std::size_t num_terminal_classes() const { return terminal_names_.size(); }
  std::size_t num_productions() const { return productions_.size(); }

  const std::string& nonterminal_name(int id) const { return nonterminal_names_.at(id); }
  const std::string& terminal_name(int id) const { return terminal_names_.at(id); }
  const std::string& symbol_name(Symbol s) const {
    return s.is_nonterminal() ? nonterminal_name(s.id) : terminal_name(s.id);
  }
  std::span<const std::string> terminal_classes() const { return terminal_names_; }

  std::optional<int> find_nonterminal(std::string_view name) const {
    auto it = nonterminal_index_.find(std::string(name));
    if (it == nonterminal_index_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<int> find_terminal(std::string_view name) const {
    auto it = terminal_index_.find(std::string(name));
    if (it == terminal_index_.end()) return std::nullopt;
    return it->second;
  }

  bool has_production(int id) const {
    return id >= 0 && static_cast<std::size_t>(id) < productions_.size();
  }
  const Production& production(int id) const {
    if (!has_production(id)) throw GrammarError("unknown production " + std::to_string(id));
    return productions_[id];
  }
  std::span<const Production> productions() const { return productions_; }
  std::span<const int> productions_for(int nonterminal) const { return by_lhs_.at(nonterminal); }

 private:
  int start_ = -1;
  std::vector<std::string> nonterminal_names_;
  std::vector<std::string> terminal_names_;
  std::unordered_map<std::string, int> nonterminal_index_;
  std::unordered_map<std::string, int> terminal_index_;
  std::vector<Production> productions_;
  std::vector<std::vector<int>> by_lhs_;
};

/// Incremental helper for writing grammars in code. Symbols on the rhs are
/// resolved by name at build() time: declared terminal classes are terminals,
/// everything else is a nonterminal.
class GrammarBuilder {
 public:
  explicit GrammarBuilder(std::string start) : start_(std::move(start)) {}

  GrammarBuilder& terminal(std::string name) {
    terminals_.push_back(std::move(name));
    return *this;
  }

  /// Adds `lhs -> rhs...` and returns its production id.
  int rule(std::string lhs, std::vector<std::string> rhs) {
    rules_.push_back({std::move(lhs), std::move(rhs)});
    return static_cast<int>(rules_.size()) - 1;
  }

  Grammar build() const {
    std::vector<Grammar::ProductionSpec> specs;
    for (std::size_t i = 0; i < rules_.size(); ++i) {
      Grammar::ProductionSpec spec;
      spec.id = static_cast<int>(i);
      spec.lhs = rules_[i].first;
      for (const auto& s : rules_[i].second) {
        bool is_tc = std::find(terminals_.begin(), terminals_.end(), s) != terminals_.end();
        spec.rhs.push_back({!is_tc, s});
      }
      specs.push_back(std::move(spec));
    }
    return Grammar::build(start_, terminals_, specs);
  }

 private:
  std::string start_;
  std::vector<std::string> terminals_;
  std::vector<std::pair<std::string, std::vector<std::string>>> rules_;
};

}  // namespace idiomkit
