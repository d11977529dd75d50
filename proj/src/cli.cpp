#include "memadapter/cli.hpp"

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "memadapter/checkpoint.hpp"
#include "memadapter/error.hpp"
#include "memadapter/pipeline.hpp"
#include "memadapter/rng.hpp"

namespace memadapter {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
};

struct CorpusOptions {
  std::string path;
  std::string range;  // "begin:end", either side optional
};

EngineConfig resolve_config(const GlobalOptions& g) {
  EngineConfig c = g.config_path.empty() ? EngineConfig{} : load_config(g.config_path);
  if (g.seed) c.apply_seed(*g.seed);
  c.data.d_c = c.d_c;
  c.validate();
  return c;
}

std::string out_path(const GlobalOptions& g, const std::string& name) {
  std::error_code ec;
  fs::create_directories(g.out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + g.out_dir);
  return (fs::path(g.out_dir) / name).string();
}

std::vector<CorpusInstance> load_selected(const CorpusOptions& opt, const EngineConfig& c) {
  auto corpus = load_corpus(opt.path, c.data, c.seed);
  if (opt.range.empty()) return corpus;
  const auto colon = opt.range.find(':');
  if (colon == std::string::npos) throw ValidationError("--range must look like begin:end");
  auto parse_bound = [&](const std::string& s, std::size_t fallback) -> std::size_t {
    if (s.empty()) return fallback;
    try {
      std::size_t used = 0;
      const auto v = std::stoull(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw ValidationError("--range bound '" + s + "' is not a number");
    }
  };
  const std::size_t begin = parse_bound(opt.range.substr(0, colon), 0);
  const std::size_t end = std::min(parse_bound(opt.range.substr(colon + 1), corpus.size()), corpus.size());
  if (begin >= end) throw ValidationError("--range selects no instances");
  return {corpus.begin() + static_cast<std::ptrdiff_t>(begin),
          corpus.begin() + static_cast<std::ptrdiff_t>(end)};
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

void write_json(const std::string& path, const ojson& j) { write_file(path, j.dump(2) + "\n"); }

struct Models {
  Vocabulary vocab;
  RetrieverModel retriever;
};

Models load_models(const std::string& retriever_path, const std::string& vocab_path) {
  return {Vocabulary::from_jsonl(read_file(vocab_path)),
          retriever_from_sections(load_checkpoint(retriever_path))};
}

// Parses "name=path" alignment checkpoint arguments.
std::vector<std::pair<std::string, std::string>> split_assignments(const std::vector<std::string>& items) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const std::string& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == item.size()) {
      throw ValidationError("expected paradigm=checkpoint, got '" + item + "'");
    }
    out.emplace_back(item.substr(0, eq), item.substr(eq + 1));
  }
  return out;
}

int cmd_gen_data(const GlobalOptions& g, std::optional<std::size_t> n, std::ostream& out) {
  const EngineConfig c = resolve_config(g);
  const auto corpus = generate_synthetic_corpus(n.value_or(c.data_instances), c.seed, c.data);
  const std::string path = out_path(g, "corpus.jsonl");
  write_file(path, corpus_to_jsonl(corpus));
  out << "wrote " << corpus.size() << " instances to " << path << "\n";
  return 0;
}

int cmd_train_retriever(const GlobalOptions& g, const CorpusOptions& co, std::ostream& out,
                        std::ostream& err) {
  const EngineConfig c = resolve_config(g);
  const Engine engine(c);
  const auto corpus = load_selected(co, c);
  const Vocabulary vocab = Engine::build_vocabulary(corpus);
  RetrieverTrainReport report;
  const RetrieverModel model = train_retriever(engine.init_retriever(vocab.size()),
                                               engine.retriever_examples(corpus), vocab,
                                               c.distill, &report);
  save_checkpoint(to_sections(model), out_path(g, "retriever.ckpt"));
  write_file(out_path(g, "vocab.jsonl"), vocab.to_jsonl());
  ojson j;
  j["instances"] = corpus.size();
  j["vocab_size"] = vocab.size();
  j["parameters"] = model.parameter_count();
  j["epoch_losses"] = report.epoch_losses;
  write_json(out_path(g, "retriever_report.json"), j);
  err << "train-retriever: " << report.seconds << " s\n";
  out << "final epoch loss " << report.epoch_losses.back() << "\n";
  return 0;
}

int cmd_train_align(const GlobalOptions& g, const CorpusOptions& co, const std::string& paradigm,
                    std::ostream& out, std::ostream& err) {
  const EngineConfig c = resolve_config(g);
  const Engine engine(c);
  const auto corpus = load_selected(co, c);
  const AlignResult r = engine.align_paradigm(paradigm, corpus);
  save_checkpoint(to_sections(r.module), out_path(g, "align_" + paradigm + ".ckpt"));
  ojson j;
  j["paradigm"] = paradigm;
  j["epoch_losses"] = r.report.epoch_losses;
  j["heldout_top1"] = r.report.heldout_top1;
  j["same_instance_cos"] = r.report.same_instance_cos;
  j["different_instance_cos"] = r.report.different_instance_cos;
  j["cosine_gap"] = r.report.cosine_gap();
  j["anchor_digest_before"] = hex64(fnv1a64(r.report.anchor_digest_before));
  j["anchor_digest_after"] = hex64(fnv1a64(r.report.anchor_digest_after));
  j["anchor_frozen"] = r.report.anchor_digest_before == r.report.anchor_digest_after;
  write_json(out_path(g, "align_" + paradigm + "_report.json"), j);
  err << "train-align: " << r.report.seconds << " s\n";
  out << paradigm << ": held-out top-1 " << r.report.heldout_top1 << ", cosine gap "
      << r.report.cosine_gap() << "\n";
  return 0;
}

int cmd_retrieve(const GlobalOptions& g, const CorpusOptions& co, const std::string& retriever,
                 const std::string& vocab_path, const std::string& paradigm_arg,
                 const std::string& align_path, double coverage, std::ostream& out) {
  const EngineConfig c = resolve_config(g);
  const Engine engine(c);
  const auto corpus = load_selected(co, c);
  const Models m = load_models(retriever, vocab_path);
  const std::string paradigm = paradigm_arg.empty() ? c.anchor : paradigm_arg;
  AlignmentModule module = engine.anchor_module();
  if (paradigm != c.anchor) {
    if (align_path.empty()) throw ValidationError("--align is required for paradigm " + paradigm);
    module = alignment_from_sections(load_checkpoint(align_path));
  }
  std::vector<std::string> ids;
  std::vector<EvidenceSubgraph> results;
  for (const CorpusInstance& inst : corpus) {
    const auto mask = coverage_segments(inst.segment_count, coverage);
    const Vec h = align_forward(module, engine.state(paradigm, inst, mask));
    results.push_back(generate_subgraph(m.retriever, inst.full_graph, m.vocab,
                                        engine.query_embedding(inst.query), h));
    ids.push_back(inst.id);
  }
  const std::string path = out_path(g, "retrieved.txt");
  write_file(path, format_retrievals(ids, results));
  out << "wrote " << results.size() << " retrievals to " << path << "\n";
  return 0;
}

int cmd_fuse_retrieve(const GlobalOptions& g, const CorpusOptions& co, const std::string& retriever,
                      const std::string& vocab_path, const std::vector<std::string>& aligns,
                      double coverage, std::ostream& out) {
  const EngineConfig c = resolve_config(g);
  const Engine engine(c);
  const auto corpus = load_selected(co, c);
  const Models m = load_models(retriever, vocab_path);
  std::map<std::string, AlignmentModule> modules;
  std::vector<std::string> order;
  for (const auto& [name, path] : split_assignments(aligns)) {
    if (!engine.registry().contains(name)) throw ValidationError("paradigm " + name + " is not registered");
    modules[name] = name == c.anchor && path == "anchor" ? engine.anchor_module()
                                                        : alignment_from_sections(load_checkpoint(path));
    order.push_back(name);
  }
  if (order.empty()) throw ValidationError("fuse-retrieve needs at least one --align");
  std::vector<std::string> ids;
  std::vector<EvidenceSubgraph> results;
  for (const CorpusInstance& inst : corpus) {
    // Paradigm i holds the visible segments congruent to i.
    const auto visible = coverage_segments(inst.segment_count, coverage);
    std::vector<MemoryState> states;
    for (std::size_t p = 0; p < order.size(); ++p) {
      std::vector<std::size_t> mine;
      for (std::size_t s : visible) {
        if (s % order.size() == p) mine.push_back(s);
      }
      if (!mine.empty()) states.push_back(engine.state(order[p], inst, mine));
    }
    results.push_back(retrieve_fused(states, modules, m.retriever, inst.full_graph, m.vocab,
                                     engine.query_embedding(inst.query)));
    ids.push_back(inst.id);
  }
  const std::string path = out_path(g, "fused.txt");
  write_file(path, format_retrievals(ids, results));
  out << "wrote " << results.size() << " fused retrievals to " << path << "\n";
  return 0;
}

int cmd_eval(const GlobalOptions& g, const CorpusOptions& co, const std::string& retrieved_path,
             std::ostream& out) {
  const EngineConfig c = resolve_config(g);
  const auto corpus = load_selected(co, c);
  const auto retrieved = parse_retrievals(read_file(retrieved_path));
  std::vector<EvidenceSubgraph> ordered;
  for (const CorpusInstance& inst : corpus) {
    const auto it = retrieved.find(inst.id);
    if (it == retrieved.end()) throw ValidationError("no retrieval for instance " + inst.id);
    const VerificationReport v = verify_subset(it->second, inst.full_graph);
    if (!v.accepted()) throw ValidationError("retrieval for " + inst.id + " fails verification");
    ordered.push_back(it->second);
  }
  const std::string report = eval_report_json(evaluate(corpus, ordered));
  write_file(out_path(g, "eval.json"), report);
  out << report;
  return 0;
}

int cmd_verify(const std::string& full_path, const std::string& sub_path, std::ostream& out) {
  const MemoryGraph full = parse_full_graph(read_file(full_path));
  const EvidenceSubgraph sub = parse_evidence(read_file(sub_path));
  const VerificationReport report = verify_subset(sub, full);
  if (report.accepted()) {
    out << "ACCEPTED\n";
    return 0;
  }
  out << "REJECTED\n";
  for (const Violation& v : report.violations) out << to_string(v.kind) << "\t" << v.element << "\n";
  return 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Memory-graph retrieval engine with cross-paradigm alignment", "memadapter"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_path, "Engine config file");
  auto* seed_opt = app.add_option("--seed", seed, "Global seed (overrides the config)");
  app.add_option("--out", g.out_dir, "Output directory");

  CorpusOptions co;
  auto add_corpus = [&](CLI::App* cmd) {
    cmd->add_option("--corpus", co.path, "Corpus JSONL")->required();
    cmd->add_option("--range", co.range, "Instance slice begin:end");
  };

  std::optional<std::size_t> n;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus");
  gen->add_option("--n", n, "Number of instances");

  auto* train_ret = app.add_subcommand("train-retriever", "Distill the subgraph retriever");
  add_corpus(train_ret);

  std::string paradigm;
  auto* train_align = app.add_subcommand("train-align", "Contrastive alignment of one paradigm");
  add_corpus(train_align);
  train_align->add_option("--paradigm", paradigm, "Target paradigm")->required();

  std::string retriever_path, vocab_path, align_path;
  double coverage = 1.0;
  std::vector<std::string> aligns;
  auto* retrieve = app.add_subcommand("retrieve", "Single-paradigm retrieval");
  add_corpus(retrieve);
  retrieve->add_option("--retriever", retriever_path, "Retriever checkpoint")->required();
  retrieve->add_option("--vocab", vocab_path, "Vocabulary JSONL")->required();
  retrieve->add_option("--paradigm", paradigm, "Memory paradigm (default: the anchor)");
  retrieve->add_option("--align", align_path, "Alignment checkpoint for a non-anchor paradigm");
  retrieve->add_option("--coverage", coverage, "Fraction of segments visible")->check(CLI::Range(0.0, 1.0));

  auto* fuse = app.add_subcommand("fuse-retrieve", "Max-pool fusion over several paradigms");
  add_corpus(fuse);
  fuse->add_option("--retriever", retriever_path, "Retriever checkpoint")->required();
  fuse->add_option("--vocab", vocab_path, "Vocabulary JSONL")->required();
  fuse->add_option("--align", aligns, "paradigm=checkpoint, repeatable; 'anchor' names the frozen anchor")
      ->required();
  fuse->add_option("--coverage", coverage, "Fraction of segments visible")->check(CLI::Range(0.0, 1.0));

  std::string retrieved_path;
  auto* eval = app.add_subcommand("eval", "Answer and memory metrics");
  add_corpus(eval);
  eval->add_option("--retrieved", retrieved_path, "Retrieval output file")->required();

  std::string full_path, sub_path;
  auto* verify = app.add_subcommand("verify", "Check a subgraph against a full graph");
  verify->add_option("--full", full_path, "Full graph document")->required();
  verify->add_option("--sub", sub_path, "Evidence subgraph document")->required();

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n\n" << app.help();
    return 1;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*gen) return cmd_gen_data(g, n, out);
    if (*train_ret) return cmd_train_retriever(g, co, out, err);
    if (*train_align) return cmd_train_align(g, co, paradigm, out, err);
    if (*retrieve) return cmd_retrieve(g, co, retriever_path, vocab_path, paradigm, align_path, coverage, out);
    if (*fuse) return cmd_fuse_retrieve(g, co, retriever_path, vocab_path, aligns, coverage, out);
    if (*eval) return cmd_eval(g, co, retrieved_path, out);
    if (*verify) return cmd_verify(full_path, sub_path, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace memadapter
