#pragma once

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "idiomkit/ast.hpp"
#include "idiomkit/fragment.hpp"
#include "idiomkit/grammar.hpp"

namespace idiomkit {

using ojson = nlohmann::ordered_json;

class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

namespace io {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out << content;
}

// ---- grammar -------------------------------------------------------------

inline ojson grammar_to_json(const Grammar& g) {
  ojson j;
  j["start"] = g.nonterminal_name(g.start());
  j["terminal_classes"] = ojson::array();
  for (const auto& tc : g.terminal_classes()) j["terminal_classes"].push_back(tc);
  j["productions"] = ojson::array();
  for (const auto& p : g.productions()) {
    ojson pj;
    pj["id"] = p.id;
    pj["lhs"] = g.nonterminal_name(p.lhs);
    pj["rhs"] = ojson::array();
    for (const auto& s : p.rhs) {
      ojson sj;
      sj[s.is_nonterminal() ? "nt" : "tc"] = g.symbol_name(s);
      pj["rhs"].push_back(std::move(sj));
    }
    j["productions"].push_back(std::move(pj));
  }
  return j;
}

inline Grammar grammar_from_json(const nlohmann::json& j) {
  try {
    std::vector<Grammar::ProductionSpec> prods;
    for (const auto& pj : j.at("productions")) {
      Grammar::ProductionSpec p;
      p.id = pj.at("id").get<int>();
      p.lhs = pj.at("lhs").get<std::string>();
      for (const auto& sj : pj.at("rhs")) {
        if (sj.contains("nt")) {
          p.rhs.push_back({true, sj.at("nt").get<std::string>()});
        } else if (sj.contains("tc")) {
          p.rhs.push_back({false, sj.at("tc").get<std::string>()});
        } else {
          throw GrammarError("rhs symbol needs \"nt\" or \"tc\"");
        }
      }
      prods.push_back(std::move(p));
    }
    return Grammar::build(j.at("start").get<std::string>(),
                          j.at("terminal_classes").get<std::vector<std::string>>(), prods);
  } catch (const nlohmann::json::exception& e) {
    throw GrammarError(std::string("malformed grammar: ") + e.what());
  }
}

inline Grammar load_grammar(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path, 1, e.what());
  }
  return grammar_from_json(j);
}

inline void save_grammar(const std::string& path, const Grammar& g) {
  write_file(path, grammar_to_json(g).dump(2) + "\n");
}

// ---- AST nodes -----------------------------------------------------------

inline ojson node_to_json(const Grammar& g, const AstNode& n) {
  ojson j;
  if (n.is_token()) {
    j["t"] = g.terminal_name(n.symbol);
    j["lex"] = n.lexeme;
    return j;
  }
  j["p"] = n.production;
  j["children"] = ojson::array();
  for (const auto& c : n.children) j["children"].push_back(node_to_json(g, c));
  return j;
}

inline AstNode node_from_json(const Grammar& g, const nlohmann::json& j) {
  if (j.contains("t")) {
    auto tc = g.find_terminal(j.at("t").get<std::string>());
    if (!tc) throw Error("unknown terminal class '" + j.at("t").get<std::string>() + "'");
    return AstNode::token(*tc, j.at("lex").get<std::string>());
  }
  int p = j.at("p").get<int>();
  AstNode n;
  n.production = p;
  n.symbol = g.has_production(p) ? g.production(p).lhs : -1;
  for (const auto& c : j.at("children")) n.children.push_back(node_from_json(g, c));
  return n;
}

inline ojson fragnode_to_json(const Grammar& g, const FragNode& n) {
  ojson j;
  switch (n.kind) {
    case FragNode::Kind::Hole:
      j["hole"] = n.text;
      j["nt"] = g.nonterminal_name(n.symbol);
      return j;
    case FragNode::Kind::Token:
      j["t"] = g.terminal_name(n.symbol);
      j["lex"] = n.text;
      return j;
    case FragNode::Kind::Interior:
      break;
  }
  j["p"] = n.production;
  j["children"] = ojson::array();
  for (const auto& c : n.children) j["children"].push_back(fragnode_to_json(g, c));
  return j;
}

inline FragNode fragnode_from_json(const Grammar& g, const nlohmann::json& j) {
  if (j.contains("hole")) {
    auto nt = g.find_nonterminal(j.at("nt").get<std::string>());
    if (!nt) throw Error("unknown nonterminal '" + j.at("nt").get<std::string>() + "'");
    return FragNode::hole(*nt, j.at("hole").get<std::string>());
  }
  if (j.contains("t")) {
    auto tc = g.find_terminal(j.at("t").get<std::string>());
    if (!tc) throw Error("unknown terminal class '" + j.at("t").get<std::string>() + "'");
    return FragNode::token(*tc, j.at("lex").get<std::string>());
  }
  FragNode n;
  n.production = j.at("p").get<int>();
  n.symbol = g.has_production(n.production) ? g.production(n.production).lhs : -1;
  for (const auto& c : j.at("children")) n.children.push_back(fragnode_from_json(g, c));
  return n;
}

inline ojson path_to_json(const NodePath& p) {
  ojson j = ojson::array();
  for (int i : p) j.push_back(i);
  return j;
}

// ---- corpus (JSON Lines) ---------------------------------------------------

inline ojson entry_to_json(const Grammar& g, const CorpusEntry& e) {
  ojson j;
  j["id"] = e.id;
  j["spec"] = e.spec;
  j["ast"] = node_to_json(g, e.ast);
  return j;
}

/// Parses one JSONL record; `line` is used for error messages.
inline CorpusEntry entry_from_json(const Grammar& g, const nlohmann::json& j,
                                   const std::string& source, std::size_t line) {
  CorpusEntry e;
  try {
    e.id = j.at("id").get<std::string>();
    e.spec = j.value("spec", std::string());
    e.ast = node_from_json(g, j.at("ast"));
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(source, line, std::string("malformed record: ") + ex.what());
  } catch (const GrammarError& ex) {
    throw ParseError(source, line, ex.what());
  } catch (const InvalidAst&) {
    throw;
  } catch (const Error& ex) {
    throw ParseError(source, line, ex.what());
  }
  auto vs = validate_ast(g, e.ast);
  if (!vs.empty()) throw InvalidAst("entry '" + e.id + "' (" + source + ":" + std::to_string(line) + ")", vs);
  return e;
}

/// Calls `fn(json, line_number)` for every non-blank line.
template <class Fn>
void for_each_jsonl(const std::string& text, const std::string& source, Fn&& fn) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(source, lineno, e.what());
    }
    fn(j, lineno);
  }
}

inline std::vector<CorpusEntry> parse_corpus(const Grammar& g, const std::string& text,
                                             const std::string& source = "<corpus>") {
  std::vector<CorpusEntry> out;
  std::set<std::string> ids;
  for_each_jsonl(text, source, [&](const nlohmann::json& j, std::size_t line) {
    out.push_back(entry_from_json(g, j, source, line));
    if (!ids.insert(out.back().id).second) {
      throw ParseError(source, line, "duplicate entry id '" + out.back().id + "'");
    }
  });
  return out;
}

inline std::string dump_corpus(const Grammar& g, const std::vector<CorpusEntry>& entries) {
  std::string out;
  for (const auto& e : entries) out += entry_to_json(g, e).dump() + "\n";
  return out;
}

inline Corpus load_corpus(const std::string& grammar_path, const std::string& corpus_path) {
  Corpus c;
  c.grammar = load_grammar(grammar_path);
  c.entries = parse_corpus(c.grammar, read_file(corpus_path), corpus_path);
  return c;
}

inline void save_corpus(const std::string& grammar_path, const std::string& corpus_path,
                        const Corpus& c) {
  save_grammar(grammar_path, c.grammar);
  write_file(corpus_path, dump_corpus(c.grammar, c.entries));
}

// ---- idioms ----------------------------------------------------------------

inline ojson fragment_to_json(const Grammar& g, const Fragment& f) {
  ojson j;
  j["id"] = f.id;
  j["root"] = fragnode_to_json(g, f.root);
  return j;
}

inline ojson idioms_to_json(const Grammar& g, const IdiomSet& s) {
  ojson j;
  j["idioms"] = ojson::array();
  for (const auto& f : s.fragments()) j["idioms"].push_back(fragment_to_json(g, f));
  return j;
}

/// Accepts any idiom file, including ranked and mined files whose records
/// carry extra fields.
inline IdiomSet idioms_from_json(const Grammar& g, const nlohmann::json& j) {
  std::vector<Fragment> frags;
  try {
    for (const auto& fj : j.at("idioms")) {
      Fragment f;
      f.id = fj.at("id").get<int>();
      f.root = fragnode_from_json(g, fj.at("root"));
      frags.push_back(std::move(f));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed idiom file: ") + e.what());
  }
  return IdiomSet::create(g, std::move(frags));
}

inline IdiomSet load_idioms(const Grammar& g, const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path, 1, e.what());
  }
  return idioms_from_json(g, j);
}

}  // namespace io
}  // namespace idiomkit
