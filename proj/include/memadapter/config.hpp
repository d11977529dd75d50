#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "memadapter/contrastive.hpp"
#include "memadapter/corpus.hpp"
#include "memadapter/retriever.hpp"

namespace memadapter {

struct ParadigmSpec {
  std::string name;
  std::size_t d_t;
};

struct EngineConfig {
  std::uint64_t seed = 42;
  std::size_t d_c = 64;
  std::size_t d_s = 64;
  std::size_t d_q = 64;
  std::size_t d_m = 128;
  std::string anchor = "anchor-graph";
  std::vector<ParadigmSpec> paradigms = {{"anchor-graph", 64},
                                         {"explicit-sim", 96},
                                         {"parametric-sim", 64},
                                         {"latent-sim", 48}};
  AlignConfig align;
  DistillConfig distill;
  SyntheticShape data;
  std::size_t data_instances = 2500;

  void validate() const;
  // Propagates the global seed into the component configs.
  void apply_seed(std::uint64_t seed);
};

// INI-style text: `key = value` lines under [engine], [paradigms], [align],
// [distill] and [data]. Unknown sections or keys are errors; absent keys
// keep their defaults.
EngineConfig parse_config(const std::string& text);
EngineConfig load_config(const std::string& path);
std::string format_config(const EngineConfig& config);

}  // namespace memadapter
