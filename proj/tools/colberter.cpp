// colberter: command-line front end for indexing, search, training and
// evaluation.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <map>

#include "colberter/error.hpp"
#include "colberter/evaluation.hpp"
#include "colberter/index.hpp"
#include "colberter/retrieve.hpp"
#include "colberter/service.hpp"
#include "colberter/synth.hpp"
#include "colberter/train.hpp"

namespace fs = std::filesystem;
using namespace colberter;

namespace {

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << "\n"; }

// -- stats -------------------------------------------------------------------

struct StatsArgs {
  fs::path corpus, vocab;
  bool no_stem = false;
};

int run_stats(const StatsArgs& a) {
  const auto vocab = Vocabulary::load(a.vocab);
  std::ifstream in(a.corpus);
  if (!in) throw Error("cannot open " + a.corpus.string());
  const auto s = corpus_stats(in, vocab, !a.no_stem);
  print_json({{"documents", s.documents},
              {"all_subwords", s.all_subwords},
              {"unique_subwords", s.unique_subwords},
              {"all_words", s.all_words},
              {"unique_words", s.unique_words},
              {"unique_stemmed_words", s.unique_stemmed_words},
              {"retained_pct", s.retained_pct},
              {"stemming", s.stemming},
              {"punctuation_counted", s.punctuation_counted}});
  return 0;
}

// -- build-index -------------------------------------------------------------

struct BuildArgs {
  fs::path corpus, vocab, heads, out;
  bool em = false, uni = false, no_gate = false;
  double threshold = 0.0;
  std::uint64_t seed = 0;
  std::size_t window = 2;
  std::size_t threads = 0;
};

int run_build(const BuildArgs& a) {
  auto heads = load_heads(a.heads);
  if (a.uni && !heads.uni()) throw Error("--uni needs heads with a uni layer (d_u = 1)");
  if (!a.uni && heads.uni()) {
    spdlog::info("heads carry a uni layer but --uni is off; indexing token vectors");
    heads.dims.uni = 0;
    heads.w_uni = {};
  }
  IndexConfig config;
  config.exact_match = a.em || a.uni;
  if (a.uni && !a.em) spdlog::info("--uni implies --em");
  config.reduce.gating = !a.no_gate;
  config.reduce.threshold = a.threshold;
  config.threads = a.threads;
  const auto vocab = Vocabulary::load(a.vocab);
  const auto corpus = read_corpus(a.corpus);
  const auto start = std::chrono::steady_clock::now();
  const auto index =
      IndexSet::build(corpus, vocab, heads, config, {a.seed, heads.dims.encoder, a.window});
  index.save(a.out);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  spdlog::info("indexed {} docs into {} in {:.2f}s", index.size(), a.out.string(), seconds);
  print_json(build_stats_response(index));
  return 0;
}

// -- search ------------------------------------------------------------------

struct SearchArgs {
  fs::path index;
  std::optional<fs::path> heads;
  std::string query;
  std::optional<fs::path> queries, out;
  std::string workflow = "DENSE_THEN_TOKEN";
  std::size_t k = 10;
  std::optional<std::size_t> k_cand;
  bool json = false;
  std::string tag;
};

int run_search(const SearchArgs& a) {
  const auto w = parse_workflow(a.workflow);
  if (!w) throw Error("unknown workflow: " + a.workflow);
  const auto index = IndexSet::load(a.index, a.heads);
  SearchOptions options{*w, a.k, a.k_cand};

  if (!a.queries) {
    const auto start = std::chrono::steady_clock::now();
    const auto ranked = search(index, a.query, options);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (a.json) {
      print_json(build_search_response(index, a.query, ranked, ms));
    } else {
      std::size_t rank = 1;
      for (const auto& e : ranked.entries) {
        const auto& b = e.breakdown;
        std::cout << rank++ << "\t" << e.doc_id << "\t" << b.s_total << "\t(cls " << b.s_cls
                  << ", token " << b.s_token << ")\t" << snippet(index.doc_text(e.ordinal), 80)
                  << "\n";
      }
    }
    return 0;
  }

  const auto tag = a.tag.empty() ? "colberter-" + std::string(workflow_name(*w)) : a.tag;
  Run run;
  for (const auto& q : synth::read_queries(*a.queries)) {
    const auto ranked = search(index, q.text, options);
    auto& entries = run[q.id];
    for (const auto& e : ranked.entries) {
      entries.push_back({e.doc_id, entries.size() + 1, e.breakdown.s_total, tag});
    }
  }
  if (a.out) {
    write_run(run, *a.out);
  } else {
    write_run(run, std::cout);
  }
  return 0;
}

// -- train -------------------------------------------------------------------

struct TrainArgs {
  fs::path triples, vocab, out_heads;
  std::optional<fs::path> init_heads;
  std::vector<double> alphas = {1.0, 0.1, 0.75};
  double lr = 0.05;
  std::size_t steps = 100;
  std::size_t batch = 0;  // 0 = every triple each step
  std::uint64_t seed = 0;
  std::vector<std::string> freeze;
  bool uni = false, em = false, uni_nonneg = false, no_stem = false, cs_per_word = false;
  std::size_t d_enc = 64, d_cls = 32, d_t = 8, window = 2;
  std::size_t log_every = 10;
};

int run_train(const TrainArgs& a) {
  TrainOptions options;
  options.weights = {a.alphas.at(0), a.alphas.at(1), a.alphas.at(2)};
  options.weights.validate();
  options.exact_match = a.em || a.uni;
  options.uni_nonneg = a.uni_nonneg;
  options.cs_per_word = a.cs_per_word;
  for (const auto& name : a.freeze) {
    const auto g = parse_param_group(name);
    if (!g) throw Error("unknown parameter group: " + name);
    options.frozen.insert(*g);
  }

  auto heads = a.init_heads ? load_heads(*a.init_heads)
                            : ReductionHeads::initialize({a.d_enc, a.d_cls, a.d_t, a.uni ? 1u : 0u}, a.seed);
  if (a.uni && !heads.uni()) {
    // Staged training: add a fresh uni layer on top of trained heads.
    heads.dims.uni = 1;
    heads.w_uni = ReductionHeads::initialize(heads.dims, a.seed).w_uni;
  }
  const ReferenceEncoder encoder({a.seed, heads.dims.encoder, a.window});
  const auto vocab = Vocabulary::load(a.vocab);
  std::vector<PreparedTriple> prepared;
  for (const auto& t : read_triples(a.triples)) {
    prepared.push_back(prepare_triple(t, vocab, encoder, !a.no_stem));
  }
  if (prepared.empty()) throw Error("no training triples");

  const std::size_t batch = a.batch == 0 ? prepared.size() : std::min(a.batch, prepared.size());
  nlohmann::json history = nlohmann::json::array();
  LossTerms last{};
  for (std::size_t step = 0; step < a.steps; ++step) {
    // Cycle through the triples in file order.
    std::vector<PreparedTriple> slice;
    for (std::size_t i = 0; i < batch; ++i) slice.push_back(prepared[(step * batch + i) % prepared.size()]);
    const auto record = train_step(slice, heads, options, a.lr);
    last = record.loss;
    if (a.log_every && (step % a.log_every == 0 || step + 1 == a.steps)) {
      spdlog::info("step {} loss {:.6f} (b {:.6f} cls {:.6f} cs {:.6f}) zero gates {}/{}", step,
                   record.loss.total, record.loss.bow, record.loss.cls, record.loss.cs,
                   record.loss.zero_gates, record.loss.gate_count);
      history.push_back({{"step", step}, {"loss", record.loss.total}, {"grad_norm", record.gradient_norm}});
    }
  }
  save_heads(a.out_heads, heads);
  const auto final_loss = total_loss(prepared, heads.rounded_to_float(), options);
  print_json({{"steps", a.steps},
              {"triples", prepared.size()},
              {"final_loss", final_loss.total},
              {"final_terms", {{"bow", final_loss.bow}, {"cls", final_loss.cls}, {"cs", final_loss.cs}}},
              {"zero_gate_fraction",
               final_loss.gate_count ? double(final_loss.zero_gates) / double(final_loss.gate_count) : 0.0},
              {"gamma", heads.gamma},
              {"last_step_loss", last.total},
              {"history", history}});
  return 0;
}

// -- eval / meta -------------------------------------------------------------

struct EvalArgs {
  fs::path run, qrels;
  bool condensed = false;
  int binarization = kDefaultBinarization;
  bool per_query = false;
};

int run_eval(const EvalArgs& a) {
  const auto qrels = parse_qrels(a.qrels);
  auto run = parse_run(a.run);
  if (a.condensed) run = condense_judged_only(run, qrels);
  MetricOptions options;
  options.binarization = a.binarization;
  const auto report = compute_metrics(run, qrels, options);
  auto j = report.to_json(options);
  j["condensed"] = a.condensed;
  if (!a.per_query) j.erase("per_query");
  print_json(j);
  return 0;
}

int run_meta(const fs::path& studies) {
  std::ifstream in(studies);
  if (!in) throw Error("cannot open " + studies.string());
  const auto spec = nlohmann::json::parse(in);
  print_json(dl_random_effects(studies_from_json(spec)).to_json());
  return 0;
}

// -- serve -------------------------------------------------------------------

SearchService* g_service = nullptr;

int run_serve(const fs::path& dir, const std::optional<fs::path>& heads, const std::string& host,
              int port) {
  auto index = std::make_shared<const IndexSet>(IndexSet::load(dir, heads));
  spdlog::info("loaded {} docs from {}", index->size(), dir.string());
  SearchService service(index);
  g_service = &service;
  std::signal(SIGINT, [](int) {
    if (g_service) g_service->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_service) g_service->stop();
  });
  service.serve(host, port);
  g_service = nullptr;
  return 0;
}

// -- synth -------------------------------------------------------------------

struct SynthArgs {
  fs::path out;
  synth::Options options;
  std::size_t triples = 200;
  std::size_t d_enc = 64, d_cls = 32, d_t = 8;
  bool uni = false;
};

int run_synth(const SynthArgs& a) {
  fs::create_directories(a.out);
  const auto c = synth::make_collection(a.options);
  c.vocab.save(a.out / "vocab.txt");
  write_corpus(a.out / "corpus.jsonl", c.docs);
  synth::write_queries(a.out / "queries.tsv", c.queries);
  {
    std::ofstream qrels(a.out / "qrels.txt");
    for (const auto& [qid, docs] : c.qrels.judgments) {
      for (const auto& [doc, grade] : docs) qrels << qid << " 0 " << doc << " " << grade << "\n";
    }
  }
  write_triples(a.out / "triples.jsonl", synth::make_triples(c, a.triples, a.options.seed));
  save_heads(a.out / "heads.bin",
             ReductionHeads::initialize({a.d_enc, a.d_cls, a.d_t, a.uni ? 1u : 0u}, a.options.seed));
  print_json({{"out", a.out.string()},
              {"docs", c.docs.size()},
              {"queries", c.queries.size()},
              {"vocab", c.vocab.size()},
              {"triples", a.triples}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ColBERTer late-interaction retrieval engine"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off")->capture_default_str();

  StatsArgs stats;
  auto* stats_cmd = app.add_subcommand("stats", "token statistics of a corpus as JSON");
  stats_cmd->add_option("--corpus", stats.corpus)->required()->check(CLI::ExistingFile);
  stats_cmd->add_option("--vocab", stats.vocab)->required()->check(CLI::ExistingFile);
  stats_cmd->add_flag("--no-stem", stats.no_stem);

  BuildArgs build;
  auto* build_cmd = app.add_subcommand("build-index", "encode a corpus into an index directory");
  build_cmd->add_option("--corpus", build.corpus)->required()->check(CLI::ExistingFile);
  build_cmd->add_option("--vocab", build.vocab)->required()->check(CLI::ExistingFile);
  build_cmd->add_option("--heads", build.heads)->required()->check(CLI::ExistingFile);
  build_cmd->add_option("--out", build.out)->required();
  build_cmd->add_flag("--em", build.em, "exact-match scoring plus inverted index");
  build_cmd->add_flag("--uni", build.uni, "store one weight per word (implies --em)");
  build_cmd->add_flag("--no-gate", build.no_gate, "keep every word regardless of its gate");
  build_cmd->add_option("--threshold", build.threshold, "drop words with gate <= threshold")
      ->capture_default_str();
  build_cmd->add_option("--seed", build.seed, "reference encoder seed")->capture_default_str();
  build_cmd->add_option("--window", build.window, "reference encoder context window")->capture_default_str();
  build_cmd->add_option("--threads", build.threads, "0 = all cores")->capture_default_str();

  SearchArgs srch;
  auto* search_cmd = app.add_subcommand("search", "query an index");
  search_cmd->add_option("--index", srch.index)->required()->check(CLI::ExistingDirectory);
  search_cmd->add_option("--heads", srch.heads, "override the index's heads")->check(CLI::ExistingFile);
  auto* q_opt = search_cmd->add_option("--query", srch.query);
  auto* qs_opt = search_cmd->add_option("--queries", srch.queries, "qid<TAB>text file; writes a TREC run")
                     ->check(CLI::ExistingFile);
  q_opt->excludes(qs_opt);
  search_cmd->add_option("--workflow", srch.workflow, "name or numeral 1-5")->capture_default_str();
  search_cmd->add_option("-k", srch.k)->capture_default_str();
  search_cmd->add_option("--k-cand", srch.k_cand, "default max(1000, 10k)");
  search_cmd->add_flag("--json", srch.json, "SearchResponse JSON for --query");
  search_cmd->add_option("--out", srch.out, "run file for --queries (default stdout)");
  search_cmd->add_option("--tag", srch.tag, "run tag (default colberter-WORKFLOW)");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train the reduction heads on MarginMSE triples");
  train_cmd->add_option("--triples", train.triples)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--vocab", train.vocab)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out-heads", train.out_heads)->required();
  train_cmd->add_option("--init-heads", train.init_heads, "continue from these heads")->check(CLI::ExistingFile);
  train_cmd->add_option("--alphas", train.alphas, "alpha_b,alpha_CLS,alpha_CS")
      ->delimiter(',')
      ->expected(3)
      ->capture_default_str();
  train_cmd->add_option("--lr", train.lr)->capture_default_str();
  train_cmd->add_option("--steps", train.steps)->capture_default_str();
  train_cmd->add_option("--batch", train.batch, "triples per step, 0 = all")->capture_default_str();
  train_cmd->add_option("--seed", train.seed, "encoder and initialization seed")->capture_default_str();
  train_cmd->add_option("--freeze", train.freeze, "cls|token|gate|gamma|uni")
      ->check(CLI::IsMember({"cls", "token", "gate", "gamma", "uni"}));
  train_cmd->add_flag("--uni", train.uni, "train with a uni layer (implies --em)");
  train_cmd->add_flag("--em", train.em, "exact-match token scoring");
  train_cmd->add_flag("--uni-nonneg", train.uni_nonneg, "ReLU on uni weights");
  train_cmd->add_flag("--no-stem", train.no_stem);
  train_cmd->add_flag("--cs-per-word", train.cs_per_word, "normalize the gate L1 term by passage length");
  train_cmd->add_option("--d-enc", train.d_enc)->capture_default_str();
  train_cmd->add_option("--d-cls", train.d_cls)->capture_default_str();
  train_cmd->add_option("--d-t", train.d_t)->capture_default_str();
  train_cmd->add_option("--window", train.window)->capture_default_str();
  train_cmd->add_option("--log-every", train.log_every)->capture_default_str();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "nDCG@10, MRR@10 and Recall@1000 of a run");
  eval_cmd->add_option("--run", eval.run)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--qrels", eval.qrels)->required()->check(CLI::ExistingFile);
  eval_cmd->add_flag("--condensed", eval.condensed, "judged documents only");
  eval_cmd->add_option("--binarization", eval.binarization, "minimum relevant grade")->capture_default_str();
  eval_cmd->add_flag("--per-query", eval.per_query);

  fs::path studies;
  auto* meta_cmd = app.add_subcommand("meta", "random-effects meta-analysis as forest JSON");
  meta_cmd->add_option("--studies", studies)->required()->check(CLI::ExistingFile);

  fs::path serve_index;
  std::optional<fs::path> serve_heads;
  std::string host = "127.0.0.1";
  int port = 7878;
  auto* serve_cmd = app.add_subcommand("serve", "HTTP JSON API over an index");
  serve_cmd->add_option("--index", serve_index)->required()->check(CLI::ExistingDirectory);
  serve_cmd->add_option("--heads", serve_heads)->check(CLI::ExistingFile);
  serve_cmd->add_option("--host", host)->capture_default_str();
  serve_cmd->add_option("--port", port)->capture_default_str();

  SynthArgs syn;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic collection and initial heads");
  synth_cmd->add_option("--out", syn.out)->required();
  synth_cmd->add_option("--seed", syn.options.seed)->capture_default_str();
  synth_cmd->add_option("--docs", syn.options.docs)->capture_default_str();
  synth_cmd->add_option("--queries", syn.options.queries)->capture_default_str();
  synth_cmd->add_option("--content-words", syn.options.content_words)->capture_default_str();
  synth_cmd->add_option("--triples", syn.triples)->capture_default_str();
  synth_cmd->add_option("--d-enc", syn.d_enc)->capture_default_str();
  synth_cmd->add_option("--d-cls", syn.d_cls)->capture_default_str();
  synth_cmd->add_option("--d-t", syn.d_t)->capture_default_str();
  synth_cmd->add_flag("--uni", syn.uni, "initial heads get a uni layer");

  CLI11_PARSE(app, argc, argv);
  // Logs go to stderr so stdout stays machine-readable.
  spdlog::set_default_logger(spdlog::stderr_color_mt("colberter"));
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*stats_cmd) return run_stats(stats);
    if (*build_cmd) return run_build(build);
    if (*search_cmd) {
      if (srch.query.empty() && !srch.queries) throw Error("search needs --query or --queries");
      return run_search(srch);
    }
    if (*train_cmd) return run_train(train);
    if (*eval_cmd) return run_eval(eval);
    if (*meta_cmd) return run_meta(studies);
    if (*serve_cmd) return run_serve(serve_index, serve_heads, host, port);
    if (*synth_cmd) return run_synth(syn);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
