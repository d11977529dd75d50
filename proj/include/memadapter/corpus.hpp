#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "memadapter/graph.hpp"
#include "memadapter/unified_space.hpp"

namespace memadapter {

struct CorpusInstance {
  std::string id;
  std::string query;
  std::string gold_answer;
  std::string full_graph_text;
  std::string gold_subgraph_text;
  std::vector<double> content_vector;
  std::size_t segment_count = 8;

  // Parsed views, filled by load/generate.
  MemoryGraph full_graph;
  EvidenceSubgraph gold;

  Vec content() const { return Eigen::Map<const Vec>(content_vector.data(), static_cast<Eigen::Index>(content_vector.size())); }
};

// Shape of the synthetic corpus and of the content vectors.
//
// Node N<k> owns slot k. Slots are spread over `segment_count` blocks of the
// content vector; each slot's scalar is repeated over its coordinates with a
// fixed positive weight pattern plus Gaussian noise. Gold nodes get
// +U(lo, hi), other nodes -U(lo, hi) * non_gold_scale, and slots without a
// node are zero unless `absent_random` gives them a random sign.
struct SyntheticShape {
  int nodes_min = 4;
  int nodes_max = 8;
  int edges_min = 3;
  int edges_max = 8;
  int gold_min = 2;
  int gold_max = 3;
  std::size_t segment_count = 8;
  std::size_t d_c = 64;
  std::size_t vocab_size = 140;  // pseudo-word pool
  double noise = 0.02;
  double magnitude_lo = 0.1;
  double magnitude_hi = 0.9;
  double non_gold_scale = 0.67;
  bool absent_random = false;

  void validate() const;
};

std::vector<CorpusInstance> generate_synthetic_corpus(std::size_t n, std::uint64_t seed,
                                                      const SyntheticShape& shape = {});

// Deterministic content vector for a graph and its gold node ids.
std::vector<double> synthesize_content(const MemoryGraph& full, const MemoryGraph& gold,
                                       const SyntheticShape& shape, std::uint64_t seed);

std::string corpus_to_jsonl(const std::vector<CorpusInstance>& corpus);
// Validates every line: JSON, fields, parses, subset check, unique ids.
// Missing content vectors are synthesized with `shape` and `seed`.
std::vector<CorpusInstance> parse_corpus(const std::string& text,
                                         const SyntheticShape& shape = {},
                                         std::uint64_t seed = 0);
std::vector<CorpusInstance> load_corpus(const std::string& path,
                                        const SyntheticShape& shape = {},
                                        std::uint64_t seed = 0);

}  // namespace memadapter
