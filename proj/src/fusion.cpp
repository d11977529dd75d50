#include "memadapter/fusion.hpp"

#include <cstring>

#include "memadapter/error.hpp"
#include "memadapter/rng.hpp"

namespace memadapter {

std::uint64_t state_digest(const Vec& raw) {
  std::string bytes(static_cast<std::size_t>(raw.size()) * sizeof(double), '\0');
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, &raw(i), sizeof bits);
    for (int b = 0; b < 8; ++b) {
      bytes[static_cast<std::size_t>(i) * 8 + static_cast<std::size_t>(b)] =
          static_cast<char>((bits >> (8 * b)) & 0xff);
    }
  }
  return fnv1a64(bytes);
}

FusedMemory fuse_max(const std::vector<Vec>& vectors,
                     const std::vector<Provenance>& provenance) {
  if (vectors.empty()) throw ValidationError("fuse_max: no inputs");
  if (!provenance.empty() && provenance.size() != vectors.size()) {
    throw ValidationError("fuse_max: provenance does not match inputs");
  }
  FusedMemory out;
  out.values = vectors.front();
  for (std::size_t i = 1; i < vectors.size(); ++i) {
    if (vectors[i].size() != out.values.size()) {
      throw ValidationError("fuse_max: dimension mismatch");
    }
    out.values = out.values.cwiseMax(vectors[i]);
  }
  if (provenance.empty()) {
    for (const Vec& v : vectors) out.provenance.push_back({"", state_digest(v)});
  } else {
    out.provenance = provenance;
  }
  return out;
}

EvidenceSubgraph retrieve_fused(const std::vector<MemoryState>& states,
                                const std::map<std::string, AlignmentModule>& modules,
                                const RetrieverModel& retriever,
                                const MemoryGraph& full_graph,
                                const Vocabulary& vocab, const Vec& q) {
  if (states.empty()) throw ValidationError("retrieve_fused: no memory states");
  std::vector<Vec> projected;
  std::vector<Provenance> provenance;
  for (const MemoryState& s : states) {
    const auto it = modules.find(s.paradigm);
    if (it == modules.end()) {
      throw ValidationError("no alignment module for paradigm " + s.paradigm);
    }
    projected.push_back(align_forward(it->second, s));
    provenance.push_back({s.paradigm, state_digest(s.raw)});
  }
  const FusedMemory fused = fuse_max(projected, provenance);
  return generate_subgraph(retriever, full_graph, vocab, q, fused.values);
}

}  // namespace memadapter
