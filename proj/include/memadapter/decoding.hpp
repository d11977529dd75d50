#pragma once

#include <optional>

#include "memadapter/graph.hpp"
#include "memadapter/retriever.hpp"
#include "memadapter/vocabulary.hpp"

namespace memadapter {

// Upper bound on the tokens a constrained decode over `full` can emit.
std::size_t default_max_len(const MemoryGraph& full);

// Greedy decoding under a grammar and subset mask. Nodes are emitted in the
// full graph's order and each at most once; an edge may only follow edges
// with smaller index and needs both endpoints already emitted. Node and edge
// text is replayed token by token from the full graph. Elements whose words
// are missing from the vocabulary are never offered. The confidence is the
// geometric mean of the masked-softmax probability of every chosen token.
// Throws DecodeError on a dead end or when max_len is exhausted.
EvidenceSubgraph generate_subgraph(const RetrieverModel& model,
                                   const MemoryGraph& full, const Vocabulary& vocab,
                                   const Vec& q, const Vec& h,
                                   std::optional<std::size_t> max_len = std::nullopt);

}  // namespace memadapter
