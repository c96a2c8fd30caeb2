#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "idiomkit/fragment.hpp"
#include "idiomkit/grammar.hpp"
#include "idiomkit/miner.hpp"
#include "idiomkit/scorer.hpp"
#include "idiomkit/trace.hpp"

namespace idiomkit {

struct DecodeStrategy {
  enum class Kind : std::uint8_t { Greedy, Beam, Sample };
  Kind kind = Kind::Greedy;
  int beam_width = 5;
  std::uint64_t seed = 0;

  static DecodeStrategy greedy() { return {}; }
  static DecodeStrategy beam(int width = 5) { return {Kind::Beam, width, 0}; }
  static DecodeStrategy sample(std::uint64_t seed) { return {Kind::Sample, 1, seed}; }
};

struct DecodeResult {
  AstNode ast;
  ActionTrace trace;            // compressed: idioms appear as single ApplyIdiom steps
  std::vector<Action> unrolled; // with idiom bodies spelled out
  double log_prob = 0.0;
  int idiom_actions = 0;
};

class DecodeError : public Error {
 public:
  DecodeError(const std::string& what, ActionTrace partial)
      : Error(what), partial_(std::move(partial)) {}
  const ActionTrace& partial() const { return partial_; }

 private:
  ActionTrace partial_;
};

namespace detail {

struct WorkItem {
  bool forced = false;  // a teacher-forced action from an idiom body
  Action action;
  Symbol symbol;
  int parent_production = -1;
  int child_index = -1;
  NodePath path;
};

struct Hypothesis {
  std::vector<WorkItem> stack;
  ActionTrace trace;
  std::vector<Action> unrolled;
  PrevAction prev;
  double log_prob = 0.0;
  int idiom_actions = 0;
};

/// Work items for an idiom body in generation order: body actions are
/// forced, first-occurrence holes become frontiers, repeated holes vanish.
inline void unroll_body(const Grammar& g, const FragNode& f, int parent, int position, NodePath& path,
                        std::set<std::string>& seen, std::vector<WorkItem>& out) {
  switch (f.kind) {
    case FragNode::Kind::Hole:
      if (seen.insert(f.text).second) {
        out.push_back({false, {}, Symbol::nonterminal(f.symbol), parent, position, path});
      }
      return;
    case FragNode::Kind::Token:
      out.push_back({true, Action::token(f.text), Symbol::terminal(f.symbol), parent, position, path});
      return;
    case FragNode::Kind::Interior:
      break;
  }
  out.push_back({true, Action::rule(f.production), Symbol::nonterminal(f.symbol), parent, position, path});
  for (std::size_t i = 0; i < f.children.size(); ++i) {
    path.push_back(static_cast<int>(i));
    unroll_body(g, f.children[i], f.production, child_position(g, f.production, static_cast<int>(i), parent, position),
                path, seen, out);
    path.pop_back();
  }
}

inline void advance(Hypothesis& h) {
  while (!h.stack.empty() && h.stack.back().forced) {
    WorkItem w = std::move(h.stack.back());
    h.stack.pop_back();
    h.unrolled.push_back(w.action);
    h.prev = PrevAction::of(w.action, w.symbol);
  }
}

/// Applies `a` at the top frontier of `h`.
inline void expand(const Grammar& g, const IdiomSet& idioms, Hypothesis& h, const Action& a) {
  WorkItem w = std::move(h.stack.back());
  h.stack.pop_back();
  h.trace.push_back({static_cast<int>(h.trace.size()) + 1, w.path, a});
  switch (a.kind) {
    case Action::Kind::GetToken:
      h.unrolled.push_back(a);
      h.prev = PrevAction::of(a, w.symbol);
      break;
    case Action::Kind::ApplyRule: {
      h.unrolled.push_back(a);
      h.prev = PrevAction::of(a, w.symbol);
      const Production& p = g.production(a.id);
      for (std::size_t c = p.rhs.size(); c-- > 0;) {
        NodePath path = w.path;
        path.push_back(static_cast<int>(c));
        int position = child_position(g, p.id, static_cast<int>(c), w.parent_production, w.child_index);
        h.stack.push_back({false, {}, p.rhs[c], p.id, position, std::move(path)});
      }
      break;
    }
    case Action::Kind::ApplyIdiom: {
      ++h.idiom_actions;
      std::vector<WorkItem> body;
      std::set<std::string> seen;
      NodePath path = w.path;
      unroll_body(g, idioms.at(a.id).root, w.parent_production, w.child_index, path, seen, body);
      for (auto it = body.rbegin(); it != body.rend(); ++it) h.stack.push_back(std::move(*it));
      break;
    }
  }
}

inline ActionContext context_of(const Hypothesis& h) {
  const WorkItem& w = h.stack.back();
  return {w.symbol, w.parent_production, w.child_index, h.prev};
}

inline std::size_t idiom_size_of(const IdiomSet& idioms, const Action& a) {
  return a.is_idiom() ? fragment_size(idioms.at(a.id)) : 0;
}

/// Highest probability; ties prefer an idiom, then a larger idiom, then a
/// smaller id.
inline std::size_t argmax(const IdiomSet& idioms, std::span<const Action> legal, std::span<const double> probs) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < legal.size(); ++i) {
    if (probs[i] != probs[best]) {
      if (probs[i] > probs[best]) best = i;
      continue;
    }
    const Action& a = legal[i];
    const Action& b = legal[best];
    if (a.is_idiom() != b.is_idiom()) {
      if (a.is_idiom()) best = i;
      continue;
    }
    std::size_t sa = idiom_size_of(idioms, a), sb = idiom_size_of(idioms, b);
    if (sa != sb) {
      if (sa > sb) best = i;
      continue;
    }
    if (a.is_idiom() && a.id < b.id) best = i;
  }
  return best;
}

inline DecodeResult finish(const Grammar& g, const IdiomSet& idioms, Hypothesis h, int start) {
  DecodeResult r;
  r.ast = from_trace(g, h.trace, idioms, Symbol::nonterminal(start));
  r.trace = std::move(h.trace);
  r.unrolled = std::move(h.unrolled);
  r.log_prob = h.log_prob;
  r.idiom_actions = h.idiom_actions;
  return r;
}

}  // namespace detail

/// Generates a tree action by action. Idiom bodies are unrolled on the fly:
/// their actions are teacher-forced into the history and scoring resumes at
/// each hole. `max_steps` bounds the number of scored decisions.
inline DecodeResult decode(const ActionScorer& scorer, const Grammar& g, const IdiomSet& idioms, int start,
                           const DecodeStrategy& strategy = {}, int max_steps = 1000) {
  if (max_steps < 1) throw DecodeError("max_steps must be at least 1", {});
  if (start < 0 || start >= static_cast<int>(g.num_nonterminals())) throw DecodeError("unknown start nonterminal", {});
  const Vocabulary& vocab = scorer.vocabulary();

  detail::Hypothesis init;
  init.stack.push_back({false, {}, Symbol::nonterminal(start), -1, -1, {}});

  auto scored = [&](const detail::Hypothesis& h, std::vector<Action>& legal) {
    ActionContext ctx = detail::context_of(h);
    legal = legal_actions(g, idioms, vocab, ctx.frontier);
    if (legal.empty()) throw Error("internal: no legal action at " + path_to_string(h.stack.back().path));
    auto probs = scorer.distribution(ctx, legal, h.unrolled);
    check_distribution(probs, legal.size());
    return probs;
  };

  if (strategy.kind != DecodeStrategy::Kind::Beam) {
    Rng rng(strategy.seed);
    detail::Hypothesis h = std::move(init);
    std::vector<Action> legal;
    for (;;) {
      detail::advance(h);
      if (h.stack.empty()) break;
      if (static_cast<int>(h.trace.size()) >= max_steps) {
        throw DecodeError("step budget of " + std::to_string(max_steps) + " exhausted", h.trace);
      }
      auto probs = scored(h, legal);
      std::size_t pick;
      if (strategy.kind == DecodeStrategy::Kind::Greedy) {
        pick = detail::argmax(idioms, legal, probs);
      } else {
        std::discrete_distribution<std::size_t> dist(probs.begin(), probs.end());
        pick = dist(rng);
      }
      h.log_prob += std::log(probs[pick]);
      detail::expand(g, idioms, h, legal[pick]);
    }
    return detail::finish(g, idioms, std::move(h), start);
  }

  const std::size_t width = static_cast<std::size_t>(std::max(1, strategy.beam_width));
  std::vector<detail::Hypothesis> beams{std::move(init)};
  std::vector<detail::Hypothesis> finished;
  ActionTrace longest;
  std::vector<Action> legal;
  while (!beams.empty() && finished.size() < width) {
    std::vector<detail::Hypothesis> candidates;
    for (auto& h : beams) {
      detail::advance(h);
      if (h.stack.empty()) {
        finished.push_back(std::move(h));
        continue;
      }
      if (static_cast<int>(h.trace.size()) >= max_steps) {
        if (h.trace.size() > longest.size()) longest = h.trace;
        continue;
      }
      auto probs = scored(h, legal);
      for (std::size_t i = 0; i < legal.size(); ++i) {
        detail::Hypothesis c = h;
        c.log_prob += std::log(probs[i]);
        detail::expand(g, idioms, c, legal[i]);
        candidates.push_back(std::move(c));
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const auto& a, const auto& b) { return a.log_prob > b.log_prob; });
    if (candidates.size() > width) candidates.resize(width);
    beams = std::move(candidates);
  }
  if (finished.empty()) throw DecodeError("step budget of " + std::to_string(max_steps) + " exhausted", longest);
  auto normalized = [](const detail::Hypothesis& h) {
    return h.log_prob / static_cast<double>(std::max<std::size_t>(1, h.trace.size()));
  };
  auto best = std::max_element(finished.begin(), finished.end(), [&](const auto& a, const auto& b) {
    return normalized(a) < normalized(b);
  });
  return detail::finish(g, idioms, std::move(*best), start);
}

struct UsageStats {
  std::vector<int> per_output;          // ApplyIdiom actions in each output
  std::map<int, long> histogram;        // idiom actions per output -> number of outputs
  std::set<int> distinct;               // idiom ids used anywhere
};

inline UsageStats idiom_usage_stats(std::span<const ActionTrace> outputs) {
  UsageStats s;
  for (const auto& trace : outputs) {
    int n = 0;
    for (const auto& step : trace) {
      if (step.action.is_idiom()) {
        ++n;
        s.distinct.insert(step.action.id);
      }
    }
    s.per_output.push_back(n);
    ++s.histogram[n];
  }
  return s;
}

}  // namespace idiomkit
