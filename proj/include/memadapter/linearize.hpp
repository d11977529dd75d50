#pragma once

#include <optional>
#include <vector>

#include "memadapter/graph.hpp"
#include "memadapter/vocabulary.hpp"

namespace memadapter {

using TokenSequence = std::vector<TokenId>;

// BOS HDR NODES EOL {id COLON word* EOL} EDGES EOL
//   {src ARROW dst COLON word* EOL} [CONF value EOL] EOS
// Descriptions and relations split on single spaces, so repeated spaces
// survive as empty-word tokens.
TokenSequence linearize(const MemoryGraph& graph, const Vocabulary& vocab,
                        std::optional<double> confidence = std::nullopt);

// Inverse of linearize. A stream without a confidence section yields 1.0.
// Throws DecodeError on anything outside the grammar.
EvidenceSubgraph delinearize(const TokenSequence& seq, const Vocabulary& vocab);

}  // namespace memadapter
