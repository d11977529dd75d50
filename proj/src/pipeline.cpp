#include "memadapter/pipeline.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "memadapter/error.hpp"
#include "memadapter/rng.hpp"
#include "text_util.hpp"

namespace memadapter {

Engine::Engine(EngineConfig config) : config_(std::move(config)), registry_(config_.d_c) {
  config_.validate();
  for (const ParadigmSpec& p : config_.paradigms) {
    registry_.register_paradigm(p.name, p.d_t, subseed("encoder:" + p.name, config_.seed));
  }
  anchor_ = init_module(config_.anchor);
}

AlignmentModule Engine::init_module(const std::string& paradigm) const {
  const Paradigm& p = registry_.get(paradigm);
  return AlignmentModule::init(p.d_t, config_.d_s, config_.d_s,
                               subseed("align-init:" + paradigm, config_.seed));
}

MemoryState Engine::state(const std::string& paradigm, const CorpusInstance& instance,
                          const SegmentMask& mask) const {
  return registry_.encode_state(paradigm, instance.content(), instance.segment_count, mask);
}

Vec Engine::anchor_vector(const CorpusInstance& instance, const SegmentMask& mask) const {
  return align_forward(anchor_, state(config_.anchor, instance, mask));
}

Vec Engine::query_embedding(const std::string& query) const {
  const auto words = detail::split_whitespace(query);
  std::string kept;
  for (std::size_t i = 0; i < words.size() && i < config_.distill.max_input_length; ++i) {
    if (i > 0) kept += ' ';
    kept += words[i];
  }
  return embed_query(kept, config_.d_q, subseed("query-embedder", config_.seed));
}

Vocabulary Engine::build_vocabulary(const std::vector<CorpusInstance>& corpus) {
  Vocabulary vocab(Vocabulary::Mode::open);
  for (const CorpusInstance& c : corpus) vocab.add_graph_words(c.full_graph);
  vocab.set_mode(Vocabulary::Mode::closed);
  return vocab;
}

std::vector<RetrieverExample> Engine::retriever_examples(
    const std::vector<CorpusInstance>& corpus) const {
  std::vector<RetrieverExample> out;
  out.reserve(corpus.size());
  for (const CorpusInstance& c : corpus) {
    out.push_back({c.id, c.full_graph, c.gold.graph, query_embedding(c.query), anchor_vector(c)});
  }
  return out;
}

RetrieverModel Engine::init_retriever(std::size_t vocab_size) const {
  return RetrieverModel::init(vocab_size, config_.d_q, config_.d_s, config_.d_m,
                              subseed("retriever-init", config_.seed));
}

AlignResult Engine::align_paradigm(const std::string& paradigm,
                                   const std::vector<CorpusInstance>& corpus) const {
  if (paradigm == config_.anchor) {
    throw ValidationError("the anchor paradigm is frozen and cannot be aligned");
  }
  if (corpus.size() < config_.align.N) {
    throw ValidationError("alignment needs " + std::to_string(config_.align.N) +
                          " instances, corpus has " + std::to_string(corpus.size()));
  }
  std::vector<MemoryState> anchor_states, target_states;
  for (std::size_t i = 0; i < config_.align.N; ++i) {
    anchor_states.push_back(state(config_.anchor, corpus[i]));
    target_states.push_back(state(paradigm, corpus[i]));
  }
  return train_alignment(anchor_, init_module(paradigm), anchor_states, target_states,
                         config_.align);
}

std::vector<std::size_t> coverage_segments(std::size_t segment_count, double fraction) {
  if (segment_count == 0) throw ValidationError("segment count must be positive");
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(segment_count)));
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < std::clamp<std::size_t>(k, 1, segment_count); ++s) out.push_back(s);
  return out;
}

std::string predict_answer(const EvidenceSubgraph& retrieved) {
  if (retrieved.graph.nodes().empty()) return "";
  return std::string(detail::split_spaces(retrieved.graph.nodes().back().description).front());
}

EvalReport evaluate(const std::vector<CorpusInstance>& corpus,
                    const std::vector<EvidenceSubgraph>& retrieved) {
  if (corpus.size() != retrieved.size() || corpus.empty()) {
    throw ValidationError("evaluation needs one retrieval per instance");
  }
  EvalReport r;
  r.n = corpus.size();
  std::vector<MemoryRecord> records;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const std::string prediction = predict_answer(retrieved[i]);
    const std::vector<std::string> golds = {corpus[i].gold_answer};
    r.em += exact_match(prediction, golds);
    r.f1 += token_f1(prediction, golds);
    r.rouge1 += rouge1(prediction, golds);
    records.push_back({emit(retrieved[i]), corpus[i].gold_answer, true});
  }
  const double n = static_cast<double>(r.n);
  r.em /= n;
  r.f1 /= n;
  r.rouge1 /= n;
  r.mem_length = mem_length(records);
  r.unique_ratio = unique_ratio(records);
  r.utilization = memory_utilization(records);
  return r;
}

std::string eval_report_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["em"] = r.em;
  j["f1"] = r.f1;
  j["rouge1"] = r.rouge1;
  j["mem_length"] = r.mem_length;
  j["unique_ratio"] = r.unique_ratio;
  j["utilization"] = r.utilization;
  j["n"] = r.n;
  return j.dump(2) + "\n";
}

std::string format_retrievals(const std::vector<std::string>& ids,
                              const std::vector<EvidenceSubgraph>& retrieved) {
  if (ids.size() != retrieved.size()) throw ValidationError("ids and retrievals differ in count");
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += '\n';
    out += "# " + ids[i] + "\n" + emit(retrieved[i]);
  }
  return out;
}

std::map<std::string, EvidenceSubgraph> parse_retrievals(const std::string& text) {
  std::map<std::string, EvidenceSubgraph> out;
  std::string id, body;
  auto flush = [&] {
    if (id.empty()) return;
    if (!out.emplace(id, parse_evidence(body)).second) {
      throw ValidationError("duplicate retrieval for " + id);
    }
  };
  std::size_t line_no = 0;
  for (std::string_view line : detail::split_lines(text)) {
    ++line_no;
    if (line.rfind("# ", 0) == 0) {
      flush();
      id = std::string(detail::trim(line.substr(2)));
      body.clear();
      continue;
    }
    if (id.empty()) {
      if (detail::trim(line).empty()) continue;
      throw ParseError(line_no, "retrieval without a '# <id>' line");
    }
    body += line;
    body += '\n';
  }
  flush();
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("cannot read " + path);
  return buf.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("cannot write " + path);
}

}  // namespace memadapter
