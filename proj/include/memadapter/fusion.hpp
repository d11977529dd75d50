#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "memadapter/decoding.hpp"
#include "memadapter/unified_space.hpp"

namespace memadapter {

struct Provenance {
  std::string paradigm;
  std::uint64_t state_digest;  // FNV-1a of the raw state's float64 bytes
  bool operator==(const Provenance&) const = default;
};

struct FusedMemory {
  Vec values;
  std::vector<Provenance> provenance;
};

std::uint64_t state_digest(const Vec& raw);

// Elementwise max. Provenance lists inputs in the given order.
FusedMemory fuse_max(const std::vector<Vec>& vectors,
                     const std::vector<Provenance>& provenance = {});

// Projects every state through its paradigm's module, fuses, and decodes.
EvidenceSubgraph retrieve_fused(const std::vector<MemoryState>& states,
                                const std::map<std::string, AlignmentModule>& modules,
                                const RetrieverModel& retriever,
                                const MemoryGraph& full_graph,
                                const Vocabulary& vocab, const Vec& q);

}  // namespace memadapter
