#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "idiomkit/marking.hpp"
#include "idiomkit/miner.hpp"
#include "idiomkit/scorer.hpp"

namespace idiomkit {

struct ChoiceSet {
  int t = 0;  // 1-based timestep of the original trace
  Action original;
  std::vector<int> matching_idioms;
  std::vector<Action> choices;  // original first, then idioms by ascending id
};

inline std::vector<ChoiceSet> choice_sets(const MarkedEntry& m) {
  std::vector<ChoiceSet> out;
  for (std::size_t s = 0; s < m.trace.size(); ++s) {
    ChoiceSet c;
    c.t = static_cast<int>(s) + 1;
    c.original = m.trace[s].action;
    for (int occ : m.anchored_at[s]) c.matching_idioms.push_back(m.occurrences[occ].idiom_id);
    std::sort(c.matching_idioms.begin(), c.matching_idioms.end());
    c.choices.push_back(c.original);
    for (int i : c.matching_idioms) c.choices.push_back(Action::idiom(i));
    out.push_back(std::move(c));
  }
  return out;
}

inline std::vector<ChoiceSet> choice_sets(const MarkedCorpus& marked, const std::string& entry_id) {
  return choice_sets(marked.entry(entry_id));
}

struct StepReport {
  int t = 0;
  std::vector<Action> choices;
  std::vector<double> log_probs;  // parallel to choices
  double loss = 0.0;              // -(1/|A|) sum log Pr
};

struct TraceSetStats {
  double num_traces = 0.0;
  double log_j = 0.0;        // by explicit enumeration
  double log_j_dp = 0.0;     // by sum-product over steps
  double mean_log_prob = 0.0;  // (1/|T|) sum over traces of sum_i log Pr
  double bound = 0.0;        // log|T| + mean_log_prob
  std::vector<long> admit;   // c(T,t): traces in which step t is a generation step
  std::vector<std::vector<long>> action_counts;  // n(t,a), parallel to choices
};

struct ObjectiveReport {
  std::string entry_id;
  std::vector<StepReport> steps;
  double loss = 0.0;
  std::optional<TraceSetStats> traces;
};

namespace detail {

/// Log-probabilities of every action in every choice set, evaluated in the
/// contexts of the original trace.
inline std::vector<StepReport> score_choices(const MarkedCorpus& marked, const MarkedEntry& m,
                                             const ActionScorer& scorer) {
  const Vocabulary& vocab = scorer.vocabulary();
  auto contexts = contexts_for(marked.grammar, m.entry.ast);
  auto sets = choice_sets(m);
  std::vector<Action> history;
  std::vector<StepReport> out;
  for (std::size_t s = 0; s < sets.size(); ++s) {
    const ActionContext& ctx = contexts[s];
    auto legal = legal_actions(marked.grammar, marked.idioms, vocab, ctx.frontier);
    auto probs = scorer.distribution(ctx, legal, history);
    check_distribution(probs, legal.size());
    StepReport r;
    r.t = sets[s].t;
    r.choices = sets[s].choices;
    double sum = 0.0;
    for (const Action& a : r.choices) {
      Action c = canonical_action(vocab, ctx.frontier, a);
      auto it = std::find(legal.begin(), legal.end(), c);
      if (it == legal.end()) throw ScorerContractError("action " + a.to_string() + " is not legal at step " + std::to_string(r.t));
      double lp = std::log(probs[static_cast<std::size_t>(it - legal.begin())]);
      r.log_probs.push_back(lp);
      sum += lp;
    }
    r.loss = -sum / static_cast<double>(r.choices.size());
    out.push_back(std::move(r));
    history.push_back(m.trace[s].action);
  }
  return out;
}

/// Steps that become frontiers after taking choice `c` at step `s`.
inline std::vector<std::vector<std::vector<int>>> successor_steps(const MarkedEntry& m) {
  PreorderIndex index(m.entry.ast);
  std::size_t n = m.trace.size();
  std::vector<std::vector<std::vector<int>>> out(n);
  std::vector<const AstNode*> nodes;
  for_each_node(m.entry.ast, [&](const AstNode& node, const NodePath&) { nodes.push_back(&node); });
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<int> kids;
    int c = static_cast<int>(s) + 1;
    for (std::size_t i = 0; i < nodes[s]->children.size(); ++i) {
      kids.push_back(c);
      c += index.subtree_size(c);
    }
    out[s].push_back(std::move(kids));
    std::vector<int> occs = m.anchored_at[s];
    std::sort(occs.begin(), occs.end(), [&](int a, int b) {
      return m.occurrences[a].idiom_id < m.occurrences[b].idiom_id;
    });
    for (int o : occs) out[s].push_back(m.layouts[o].hole_steps);
  }
  return out;
}

}  // namespace detail

inline ObjectiveReport objective(const MarkedCorpus& marked, const std::string& entry_id,
                                 const ActionScorer& scorer) {
  const MarkedEntry& m = marked.entry(entry_id);
  ObjectiveReport r;
  r.entry_id = entry_id;
  r.steps = detail::score_choices(marked, m, scorer);
  for (const auto& s : r.steps) r.loss += s.loss;
  return r;
}

class TraceCapExceeded : public Error {
 public:
  using Error::Error;
};

/// Enumerates every trace that generates the entry's tree. Refuses when the
/// count, computed first by dynamic programming, exceeds `cap`.
inline TraceSetStats enumerate_traces(const MarkedCorpus& marked, const std::string& entry_id,
                                      const ActionScorer& scorer, double cap = 1e6) {
  const MarkedEntry& m = marked.entry(entry_id);
  auto steps = detail::score_choices(marked, m, scorer);
  auto next = detail::successor_steps(m);
  std::size_t n = m.trace.size();

  // Sum-product from the last step backwards: successors always come later.
  std::vector<double> count(n, 0.0), logj(n, 0.0);
  for (std::size_t s = n; s-- > 0;) {
    double c = 0.0;
    double acc = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < next[s].size(); ++a) {
      double prod = 1.0, lp = steps[s].log_probs[a];
      for (int k : next[s][a]) {
        prod *= count[k];
        lp += logj[k];
      }
      c += prod;
      acc = log_add(acc, lp);
    }
    count[s] = c;
    logj[s] = acc;
  }
  if (count[0] > cap) {
    throw TraceCapExceeded("entry '" + entry_id + "' has " + std::to_string(count[0]) +
                           " traces, more than the cap of " + std::to_string(cap));
  }

  TraceSetStats st;
  st.log_j_dp = logj[0];
  st.admit.assign(n, 0);
  st.action_counts.resize(n);
  for (std::size_t s = 0; s < n; ++s) st.action_counts[s].assign(next[s].size(), 0);

  std::vector<int> pending{0};
  std::vector<std::pair<int, int>> path;
  long traces = 0;
  double log_j = -std::numeric_limits<double>::infinity();
  double sum_lp = 0.0;
  auto rec = [&](auto& self, double lp) -> void {
    if (pending.empty()) {
      ++traces;
      log_j = log_add(log_j, lp);
      sum_lp += lp;
      for (auto [s, a] : path) {
        ++st.admit[s];
        ++st.action_counts[s][a];
      }
      return;
    }
    int s = pending.back();
    pending.pop_back();
    for (std::size_t a = 0; a < next[s].size(); ++a) {
      const auto& kids = next[s][a];
      for (auto it = kids.rbegin(); it != kids.rend(); ++it) pending.push_back(*it);
      path.emplace_back(s, static_cast<int>(a));
      self(self, lp + steps[s].log_probs[a]);
      path.pop_back();
      pending.resize(pending.size() - kids.size());
    }
    pending.push_back(s);
  };
  rec(rec, 0.0);

  st.num_traces = static_cast<double>(traces);
  st.log_j = log_j;
  st.mean_log_prob = sum_lp / st.num_traces;
  st.bound = std::log(st.num_traces) + st.mean_log_prob;
  return st;
}

class TrainError : public Error {
 public:
  using Error::Error;
};

/// Soft multi-action targets: every action in A(T_t) receives 1/|A(T_t)|
/// per epoch in the original-trace context.
inline CountScorer train_count_scorer(const MarkedCorpus& marked, std::span<const std::string> entry_ids,
                                      int epochs = 1, double k = 0.1) {
  if (marked.entries.empty()) throw TrainError("cannot train on an empty marked corpus");
  std::vector<const MarkedEntry*> chosen;
  if (entry_ids.empty()) {
    for (const auto& m : marked.entries) chosen.push_back(&m);
  } else {
    for (const auto& id : entry_ids) chosen.push_back(&marked.entry(id));
  }
  Vocabulary vocab(marked.grammar.num_terminal_classes());
  for (const auto* m : chosen) {
    for_each_node(m->entry.ast, [&](const AstNode& n, const NodePath&) {
      if (n.is_token()) vocab.add(n.symbol, n.lexeme);
    });
  }
  CountScorer scorer(vocab, k);
  for (int e = 0; e < epochs; ++e) {
    for (const auto* m : chosen) {
      auto contexts = contexts_for(marked.grammar, m->entry.ast);
      for (const auto& c : choice_sets(*m)) {
        const ActionContext& ctx = contexts[c.t - 1];
        double w = 1.0 / static_cast<double>(c.choices.size());
        for (const Action& a : c.choices) scorer.add(ctx, canonical_action(vocab, ctx.frontier, a), w);
      }
    }
  }
  return scorer;
}

inline CountScorer train_count_scorer(const MarkedCorpus& marked, int epochs = 1, double k = 0.1) {
  return train_count_scorer(marked, std::span<const std::string>{}, epochs, k);
}

namespace io {

inline nlohmann::ordered_json objective_to_json(const ObjectiveReport& r) {
  nlohmann::ordered_json j;
  j["entry"] = r.entry_id;
  j["loss"] = r.loss;
  j["steps"] = nlohmann::ordered_json::array();
  for (const auto& s : r.steps) {
    nlohmann::ordered_json sj;
    sj["t"] = s.t;
    sj["choices"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < s.choices.size(); ++i) {
      sj["choices"].push_back({{"action", s.choices[i].to_string()}, {"log_prob", s.log_probs[i]}});
    }
    sj["loss"] = s.loss;
    j["steps"].push_back(std::move(sj));
  }
  if (r.traces) {
    const auto& st = *r.traces;
    nlohmann::ordered_json tj;
    tj["num_traces"] = st.num_traces;
    tj["log_j"] = st.log_j;
    tj["log_j_dp"] = st.log_j_dp;
    tj["bound"] = st.bound;
    tj["admit"] = st.admit;
    j["traces"] = std::move(tj);
  }
  return j;
}

}  // namespace io
}  // namespace idiomkit
