#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "idiomkit/decode.hpp"
#include "idiomkit/io.hpp"
#include "idiomkit/marking.hpp"
#include "idiomkit/miner.hpp"
#include "idiomkit/ranking.hpp"

namespace idiomkit {

/// What survives of a mining run on disk: enough to rank without the state.
struct MinedArtifact {
  MinerConfig config;
  std::vector<double> base;
  std::vector<std::pair<long, long>> restaurants;  // per nonterminal: (customers, tables)
  std::vector<MinedFragment> fragments;
};

inline MinedArtifact to_artifact(const Grammar& g, const MinedGrammar& m) {
  MinedArtifact a;
  a.config = m.config;
  a.base.assign(m.base.probabilities().begin(), m.base.probabilities().end());
  for (std::size_t nt = 0; nt < g.num_nonterminals(); ++nt) {
    a.restaurants.emplace_back(m.counts.total(static_cast<int>(nt)), m.counts.tables(static_cast<int>(nt)));
  }
  a.fragments = m.fragments;
  return a;
}

namespace io {

namespace detail {

inline nlohmann::json parse_json_file(const std::string& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path, 1, e.what());
  }
}

}  // namespace detail

inline ojson mined_to_json(const Grammar& g, const MinedArtifact& a) {
  ojson j;
  j["config"] = {{"alpha", a.config.alpha},
                 {"discount", a.config.discount},
                 {"iterations", a.config.iterations},
                 {"p_stop", a.config.p_stop},
                 {"seed", a.config.seed},
                 {"blocking", a.config.blocking == Blocking::TypeBased ? "type" : "site"},
                 {"min_count", a.config.min_count}};
  j["base"] = a.base;
  j["restaurants"] = ojson::array();
  for (std::size_t nt = 0; nt < a.restaurants.size(); ++nt) {
    j["restaurants"].push_back({{"nt", g.nonterminal_name(static_cast<int>(nt))},
                                {"n", a.restaurants[nt].first},
                                {"k", a.restaurants[nt].second}});
  }
  j["idioms"] = ojson::array();
  for (const auto& m : a.fragments) {
    ojson fj = fragment_to_json(g, m.fragment);
    fj["count"] = m.count;
    fj["log_p0"] = m.log_p0;
    fj["p1"] = m.p1;
    j["idioms"].push_back(std::move(fj));
  }
  return j;
}

inline MinedArtifact mined_from_json(const Grammar& g, const nlohmann::json& j) {
  MinedArtifact a;
  try {
    const auto& c = j.at("config");
    a.config.alpha = c.at("alpha").get<double>();
    a.config.discount = c.at("discount").get<double>();
    a.config.iterations = c.at("iterations").get<int>();
    a.config.p_stop = c.at("p_stop").get<double>();
    a.config.seed = c.at("seed").get<std::uint64_t>();
    a.config.blocking = c.at("blocking").get<std::string>() == "type" ? Blocking::TypeBased : Blocking::PerSite;
    a.config.min_count = c.at("min_count").get<int>();
    a.base = j.at("base").get<std::vector<double>>();
    for (const auto& r : j.at("restaurants")) a.restaurants.emplace_back(r.at("n").get<long>(), r.at("k").get<long>());
    IdiomSet set = idioms_from_json(g, j);
    const auto& ij = j.at("idioms");
    for (std::size_t i = 0; i < ij.size(); ++i) {
      MinedFragment m;
      m.fragment = set.at(static_cast<int>(i));
      m.count = ij[i].at("count").get<long>();
      m.log_p0 = ij[i].at("log_p0").get<double>();
      m.p1 = ij[i].at("p1").get<double>();
      a.fragments.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed mined file: ") + e.what());
  }
  if (a.base.size() != g.num_productions()) throw Error("mined file does not match the grammar");
  return a;
}

inline MinedArtifact load_mined(const Grammar& g, const std::string& path) {
  return mined_from_json(g, detail::parse_json_file(path));
}

inline ojson ranked_to_json(const Grammar& g, const std::vector<RankedIdiom>& ranked, ScoreKind kind) {
  ojson j;
  j["score"] = kind == ScoreKind::Coverage ? "cov" : "cxe";
  j["idioms"] = ojson::array();
  for (const auto& r : ranked) {
    ojson fj = fragment_to_json(g, r.scored.fragment);
    fj["mined_id"] = r.original_id;
    fj["cov"] = r.scored.coverage_count;
    fj["cov_score"] = r.scored.cov_score;
    fj["cxe_score"] = r.scored.cxe_score;
    fj["size"] = r.scored.size;
    j["idioms"].push_back(std::move(fj));
  }
  return j;
}

// ---- marked corpus -------------------------------------------------------

inline ojson occurrence_to_json(const Occurrence& o) {
  ojson j;
  j["idiom"] = o.idiom_id;
  j["anchor"] = path_to_json(o.anchor);
  j["bindings"] = ojson::object();
  for (const auto& [label, path] : o.bindings) j["bindings"][label] = path_to_json(path);
  return j;
}

inline std::string dump_marked(const MarkedCorpus& m) {
  std::string out;
  for (const auto& e : m.entries) {
    ojson j = entry_to_json(m.grammar, e.entry);
    j["occurrences"] = ojson::array();
    for (const auto& o : e.occurrences) j["occurrences"].push_back(occurrence_to_json(o));
    out += j.dump() + "\n";
  }
  return out;
}

inline MarkedCorpus parse_marked(const Grammar& g, const IdiomSet& idioms, const std::string& text,
                                 const std::string& source = "<marked>") {
  std::vector<CorpusEntry> entries;
  std::vector<std::vector<Occurrence>> occs;
  for_each_jsonl(text, source, [&](const nlohmann::json& j, std::size_t line) {
    entries.push_back(entry_from_json(g, j, source, line));
    std::vector<Occurrence> list;
    try {
      for (const auto& oj : j.at("occurrences")) {
        Occurrence o;
        o.idiom_id = oj.at("idiom").get<int>();
        o.entry_id = entries.back().id;
        o.anchor = oj.at("anchor").get<NodePath>();
        for (const auto& [label, path] : oj.at("bindings").items()) o.bindings[label] = path.get<NodePath>();
        list.push_back(std::move(o));
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source, line, std::string("malformed occurrence: ") + e.what());
    }
    occs.push_back(std::move(list));
  });
  return mark_from_occurrences(g, std::move(entries), idioms, std::move(occs));
}

// ---- decoded outputs -----------------------------------------------------

inline ojson trace_to_json(const ActionTrace& trace) {
  ojson j = ojson::array();
  for (const auto& s : trace) j.push_back({{"frontier", path_to_json(s.frontier)}, {"action", action_to_json(s.action)}});
  return j;
}

inline ActionTrace trace_from_json(const nlohmann::json& j) {
  ActionTrace out;
  for (const auto& s : j) {
    out.push_back({static_cast<int>(out.size()) + 1, s.at("frontier").get<NodePath>(), action_from_json(s.at("action"))});
  }
  return out;
}

inline ojson decoded_to_json(const Grammar& g, const std::string& id, const DecodeResult& r) {
  ojson j;
  j["id"] = id;
  j["ast"] = node_to_json(g, r.ast);
  j["trace"] = trace_to_json(r.trace);
  j["idiom_actions"] = r.idiom_actions;
  j["log_prob"] = r.log_prob;
  return j;
}

}  // namespace io
}  // namespace idiomkit
