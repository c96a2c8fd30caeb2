// idiomkit command line: gen, mine, rank, mark, train-scorer, decode, stats.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include <idiomkit.hpp>
#include <idiomkit/artifacts.hpp>

namespace fs = std::filesystem;
using namespace idiomkit;

namespace {

void require(const std::string& path, const std::string& what, const std::string& stage) {
  if (path.empty() || !fs::exists(path)) {
    throw Error("missing " + what + " '" + path + "'; run `idiomkit " + stage + "` first");
  }
}

ScoreKind parse_score(const std::string& s) { return s == "cxe" ? ScoreKind::CrossEntropy : ScoreKind::Coverage; }

struct Paths {
  std::string grammar = "grammar.json";
  std::string corpus = "corpus.jsonl";
  std::string mined = "mined.json";
  std::string idioms = "idioms.json";
  std::string marked = "marked.jsonl";
  std::string scorer = "scorer.json";
  std::string decoded = "decoded.jsonl";
};

std::vector<RankedIdiom> rank_from(const Grammar& g, const MinedArtifact& a, const std::vector<CorpusEntry>& corpus,
                                   ScoreKind kind, int k) {
  return rank_idioms(score_all(g, std::span<const MinedFragment>(a.fragments), corpus), kind,
                     static_cast<std::size_t>(k));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mine, rank and mark code idioms; train and decode with an idiom-aware scorer"};
  app.require_subcommand(1);
  Paths paths;

  // gen
  PlantSpec plant;
  std::string truth_path = "truth.json";
  auto* gen = app.add_subcommand("gen", "Generate a synthetic corpus with planted idioms");
  gen->add_option("--trees", plant.trees, "Number of trees")->capture_default_str();
  gen->add_option("--plants", plant.plants, "Planted fragment indices (0-4)")->capture_default_str();
  gen->add_option("--min-plants", plant.min_plants)->capture_default_str();
  gen->add_option("--max-plants", plant.max_plants)->capture_default_str();
  gen->add_option("--noise-depth", plant.noise_depth)->capture_default_str();
  gen->add_option("--seed", plant.seed)->capture_default_str();
  gen->add_flag("--no-plants", [&](std::int64_t) { plant.plants.clear(); }, "Pure-noise corpus");
  gen->add_option("--grammar", paths.grammar)->capture_default_str();
  gen->add_option("--corpus", paths.corpus)->capture_default_str();
  gen->add_option("--truth", truth_path, "Ground-truth insertion log")->capture_default_str();

  // mine
  MinerConfig cfg;
  cfg.seed = 7;
  std::string blocking = "type";
  int top_k = 80;
  std::string score = "cov";
  auto add_miner_flags = [&](CLI::App* c) {
    c->add_option("--alpha", cfg.alpha, "PYP concentration")->capture_default_str();
    c->add_option("--discount", cfg.discount, "PYP discount")->capture_default_str();
    c->add_option("--iters", cfg.iterations, "Gibbs sweeps")->capture_default_str();
    c->add_option("--p-stop", cfg.p_stop)->capture_default_str();
    c->add_option("--seed", cfg.seed)->capture_default_str();
    c->add_option("--min-count", cfg.min_count)->capture_default_str();
    c->add_option("--blocking", blocking)->check(CLI::IsMember({"site", "type"}))->capture_default_str();
  };
  auto add_rank_flags = [&](CLI::App* c) {
    c->add_option("-K,--top", top_k, "Idioms to keep")->check(CLI::NonNegativeNumber)->capture_default_str();
    c->add_option("--score", score)->check(CLI::IsMember({"cov", "cxe"}))->capture_default_str();
  };
  auto* mine_cmd = app.add_subcommand("mine", "Mine fragments and write the top-K idioms");
  add_miner_flags(mine_cmd);
  add_rank_flags(mine_cmd);
  mine_cmd->add_option("--grammar", paths.grammar)->capture_default_str();
  mine_cmd->add_option("--corpus", paths.corpus)->capture_default_str();
  mine_cmd->add_option("--mined", paths.mined, "All mined fragments")->capture_default_str();
  mine_cmd->add_option("--out", paths.idioms, "Ranked idioms")->capture_default_str();

  auto* rank_cmd = app.add_subcommand("rank", "Re-rank a mined file");
  add_rank_flags(rank_cmd);
  rank_cmd->add_option("--grammar", paths.grammar)->capture_default_str();
  rank_cmd->add_option("--corpus", paths.corpus)->capture_default_str();
  rank_cmd->add_option("--mined", paths.mined)->capture_default_str();
  rank_cmd->add_option("--out", paths.idioms)->capture_default_str();

  unsigned threads = 1;
  auto* mark_cmd = app.add_subcommand("mark", "Mark idiom occurrences in the corpus");
  mark_cmd->add_option("--grammar", paths.grammar)->capture_default_str();
  mark_cmd->add_option("--corpus", paths.corpus)->capture_default_str();
  mark_cmd->add_option("--idioms", paths.idioms)->capture_default_str();
  mark_cmd->add_option("--out", paths.marked)->capture_default_str();
  mark_cmd->add_option("--threads", threads)->check(CLI::PositiveNumber)->capture_default_str();

  int epochs = 1;
  double smoothing = 0.1;
  auto* train_cmd = app.add_subcommand("train-scorer", "Train the count-based action scorer");
  train_cmd->add_option("--grammar", paths.grammar)->capture_default_str();
  train_cmd->add_option("--idioms", paths.idioms)->capture_default_str();
  train_cmd->add_option("--marked", paths.marked)->capture_default_str();
  train_cmd->add_option("--out", paths.scorer)->capture_default_str();
  train_cmd->add_option("--epochs", epochs)->check(CLI::PositiveNumber)->capture_default_str();
  train_cmd->add_option("--k", smoothing, "Add-k smoothing")->check(CLI::NonNegativeNumber)->capture_default_str();

  int count = 10;
  std::string strategy = "greedy";
  int beam_width = 5;
  int max_steps = 2000;
  std::uint64_t decode_seed = 7;
  auto* decode_cmd = app.add_subcommand("decode", "Generate programs with idiom unrolling");
  decode_cmd->add_option("--grammar", paths.grammar)->capture_default_str();
  decode_cmd->add_option("--idioms", paths.idioms)->capture_default_str();
  decode_cmd->add_option("--scorer", paths.scorer)->capture_default_str();
  decode_cmd->add_option("--out", paths.decoded)->capture_default_str();
  decode_cmd->add_option("-n,--count", count, "Programs to generate")->check(CLI::NonNegativeNumber)->capture_default_str();
  decode_cmd->add_option("--strategy", strategy)->check(CLI::IsMember({"greedy", "beam", "sample"}))->capture_default_str();
  decode_cmd->add_option("--beam-width", beam_width)->check(CLI::PositiveNumber)->capture_default_str();
  decode_cmd->add_option("--max-steps", max_steps)->check(CLI::PositiveNumber)->capture_default_str();
  decode_cmd->add_option("--seed", decode_seed)->capture_default_str();

  std::string report_path;
  auto* stats_cmd = app.add_subcommand("stats", "Overlap, objective and idiom-usage report");
  stats_cmd->add_option("--grammar", paths.grammar)->capture_default_str();
  stats_cmd->add_option("--idioms", paths.idioms)->capture_default_str();
  stats_cmd->add_option("--marked", paths.marked)->capture_default_str();
  stats_cmd->add_option("--scorer", paths.scorer, "Include objective values when present")->capture_default_str();
  stats_cmd->add_option("--decoded", paths.decoded, "Include usage statistics when present")->capture_default_str();
  stats_cmd->add_option("--out", report_path, "Write the report here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      SyntheticCorpus s = generate_synthetic(plant);
      io::save_corpus(paths.grammar, paths.corpus, s.corpus);
      io::write_file(truth_path, io::synthetic_truth_to_json(s.corpus.grammar, s).dump(2) + "\n");
      std::cout << "wrote " << s.corpus.entries.size() << " trees, " << s.insertions.size() << " insertions\n";
    } else if (mine_cmd->parsed()) {
      require(paths.grammar, "grammar", "gen");
      require(paths.corpus, "corpus", "gen");
      cfg.blocking = blocking == "type" ? Blocking::TypeBased : Blocking::PerSite;
      Corpus c = io::load_corpus(paths.grammar, paths.corpus);
      auto t0 = std::chrono::steady_clock::now();
      MinedGrammar m = mine(c.grammar, c.entries, cfg);
      std::chrono::duration<double> total = std::chrono::steady_clock::now() - t0;
      MinedArtifact a = to_artifact(c.grammar, m);
      io::write_file(paths.mined, io::mined_to_json(c.grammar, a).dump(2) + "\n");
      auto ranked = rank_from(c.grammar, a, c.entries, parse_score(score), top_k);
      io::write_file(paths.idioms, io::ranked_to_json(c.grammar, ranked, parse_score(score)).dump(2) + "\n");
      for (std::size_t i = 0; i < m.iteration_seconds.size(); ++i) {
        std::printf("iteration %zu: %.4f s\n", i + 1, m.iteration_seconds[i]);
      }
      std::printf("mined %zu fragments, kept %zu idioms in %.3f s\n", m.fragments.size(), ranked.size(), total.count());
    } else if (rank_cmd->parsed()) {
      require(paths.grammar, "grammar", "gen");
      require(paths.corpus, "corpus", "gen");
      require(paths.mined, "mined file", "mine");
      Corpus c = io::load_corpus(paths.grammar, paths.corpus);
      MinedArtifact a = io::load_mined(c.grammar, paths.mined);
      auto ranked = rank_from(c.grammar, a, c.entries, parse_score(score), top_k);
      io::write_file(paths.idioms, io::ranked_to_json(c.grammar, ranked, parse_score(score)).dump(2) + "\n");
      std::printf("kept %zu idioms\n", ranked.size());
    } else if (mark_cmd->parsed()) {
      require(paths.grammar, "grammar", "gen");
      require(paths.corpus, "corpus", "gen");
      require(paths.idioms, "idiom file", "mine");
      Corpus c = io::load_corpus(paths.grammar, paths.corpus);
      IdiomSet idioms = io::load_idioms(c.grammar, paths.idioms);
      MarkedCorpus m = mark(c.grammar, c.entries, idioms, threads);
      io::write_file(paths.marked, io::dump_marked(m));
      std::size_t n = 0;
      for (const auto& e : m.entries) n += e.occurrences.size();
      std::printf("marked %zu occurrences in %zu trees\n", n, m.entries.size());
    } else if (train_cmd->parsed()) {
      require(paths.grammar, "grammar", "gen");
      require(paths.idioms, "idiom file", "mine");
      require(paths.marked, "marked corpus", "mark");
      Grammar g = io::load_grammar(paths.grammar);
      IdiomSet idioms = io::load_idioms(g, paths.idioms);
      MarkedCorpus m = io::parse_marked(g, idioms, io::read_file(paths.marked), paths.marked);
      CountScorer s = train_count_scorer(m, epochs, smoothing);
      io::write_file(paths.scorer, io::scorer_to_json(g, s).dump(2) + "\n");
      std::printf("trained on %zu trees\n", m.entries.size());
    } else if (decode_cmd->parsed()) {
      require(paths.grammar, "grammar", "gen");
      require(paths.idioms, "idiom file", "mine");
      require(paths.scorer, "scorer", "train-scorer");
      Grammar g = io::load_grammar(paths.grammar);
      IdiomSet idioms = io::load_idioms(g, paths.idioms);
      CountScorer s = io::scorer_from_json(g, nlohmann::json::parse(io::read_file(paths.scorer)));
      std::string out;
      std::vector<ActionTrace> traces;
      for (int i = 0; i < count; ++i) {
        DecodeStrategy st = strategy == "beam"     ? DecodeStrategy::beam(beam_width)
                            : strategy == "sample" ? DecodeStrategy::sample(decode_seed + static_cast<std::uint64_t>(i))
                                                   : DecodeStrategy::greedy();
        DecodeResult r = decode(s, g, idioms, g.start(), st, max_steps);
        traces.push_back(r.trace);
        out += io::decoded_to_json(g, "d" + std::to_string(i), r).dump() + "\n";
      }
      io::write_file(paths.decoded, out);
      auto usage = idiom_usage_stats(traces);
      std::printf("decoded %d programs using %zu distinct idioms\n", count, usage.distinct.size());
    } else if (stats_cmd->parsed()) {
      require(paths.grammar, "grammar", "gen");
      require(paths.idioms, "idiom file", "mine");
      require(paths.marked, "marked corpus", "mark");
      Grammar g = io::load_grammar(paths.grammar);
      IdiomSet idioms = io::load_idioms(g, paths.idioms);
      MarkedCorpus m = io::parse_marked(g, idioms, io::read_file(paths.marked), paths.marked);
      GreedyRewrite rw = greedy_rewrite(m);
      ojson rep;
      rep["overlap"] = {{"total_occurrences", rw.stats.total_occurrences},
                        {"kept_by_greedy", rw.stats.kept_by_greedy},
                        {"discard_rate", rw.stats.discard_rate}};
      ojson usage_j = ojson::object();
      for (const auto& [id, n] : rw.stats.usage) usage_j[std::to_string(id)] = n;
      rep["overlap"]["usage"] = usage_j;
      if (fs::exists(paths.scorer)) {
        CountScorer s = io::scorer_from_json(g, nlohmann::json::parse(io::read_file(paths.scorer)));
        double total = 0.0;
        ojson per = ojson::array();
        for (const auto& e : m.entries) {
          ObjectiveReport r = objective(m, e.entry.id, s);
          total += r.loss;
          per.push_back({{"entry", e.entry.id}, {"loss", r.loss}});
        }
        rep["objective"] = {{"total", total}, {"entries", per}};
      }
      if (fs::exists(paths.decoded)) {
        std::vector<ActionTrace> traces;
        io::for_each_jsonl(io::read_file(paths.decoded), paths.decoded, [&](const nlohmann::json& j, std::size_t) {
          traces.push_back(io::trace_from_json(j.at("trace")));
        });
        UsageStats u = idiom_usage_stats(traces);
        ojson hist = ojson::object();
        for (const auto& [k, n] : u.histogram) hist[std::to_string(k)] = n;
        rep["usage"] = {{"outputs", traces.size()}, {"histogram", hist}, {"distinct_idioms", u.distinct.size()}};
      }
      std::string text = rep.dump(2) + "\n";
      if (report_path.empty()) std::cout << text;
      else io::write_file(report_path, text);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
