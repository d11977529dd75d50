#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "memadapter/config.hpp"
#include "memadapter/contrastive.hpp"
#include "memadapter/corpus.hpp"
#include "memadapter/decoding.hpp"
#include "memadapter/fusion.hpp"
#include "memadapter/metrics.hpp"
#include "memadapter/retriever.hpp"

namespace memadapter {

using SegmentMask = std::optional<std::vector<std::size_t>>;

// Wires the configured components together. Every random choice derives
// from the config's global seed through subseed().
class Engine {
 public:
  explicit Engine(EngineConfig config);

  const EngineConfig& config() const { return config_; }
  const ParadigmRegistry& registry() const { return registry_; }
  // Seed-initialized and never trained.
  const AlignmentModule& anchor_module() const { return anchor_; }
  AlignmentModule init_module(const std::string& paradigm) const;

  MemoryState state(const std::string& paradigm, const CorpusInstance& instance,
                    const SegmentMask& mask = std::nullopt) const;
  Vec anchor_vector(const CorpusInstance& instance, const SegmentMask& mask = std::nullopt) const;
  Vec query_embedding(const std::string& query) const;

  static Vocabulary build_vocabulary(const std::vector<CorpusInstance>& corpus);
  std::vector<RetrieverExample> retriever_examples(const std::vector<CorpusInstance>& corpus) const;
  RetrieverModel init_retriever(std::size_t vocab_size) const;

  // Contrastive alignment on the first config.align.N instances.
  AlignResult align_paradigm(const std::string& paradigm,
                             const std::vector<CorpusInstance>& corpus) const;

 private:
  EngineConfig config_;
  ParadigmRegistry registry_;
  AlignmentModule anchor_;
};

// First max(1, round(fraction * count)) segments.
std::vector<std::size_t> coverage_segments(std::size_t segment_count, double fraction);

// Stand-in answerer: first word of the last retrieved node's description.
std::string predict_answer(const EvidenceSubgraph& retrieved);

struct EvalReport {
  double em = 0.0;
  double f1 = 0.0;
  double rouge1 = 0.0;
  double mem_length = 0.0;
  double unique_ratio = 0.0;
  double utilization = 0.0;
  std::size_t n = 0;
};

EvalReport evaluate(const std::vector<CorpusInstance>& corpus,
                    const std::vector<EvidenceSubgraph>& retrieved);
std::string eval_report_json(const EvalReport& report);

// Evidence documents, one per instance, separated by blank lines and keyed
// by "# <id>" lines.
std::string format_retrievals(const std::vector<std::string>& ids,
                              const std::vector<EvidenceSubgraph>& retrieved);
std::map<std::string, EvidenceSubgraph> parse_retrievals(const std::string& text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace memadapter
