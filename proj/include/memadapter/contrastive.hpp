#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "memadapter/rng.hpp"
#include "memadapter/unified_space.hpp"

namespace memadapter {

// 0 when either norm is below 1e-12.
double cosine_sim(const Vec& u, const Vec& v);
// d cos(a, t) / d t, zero under the same threshold.
Vec cosine_grad_wrt_second(const Vec& a, const Vec& t);

struct InfoNceResult {
  double loss = 0.0;
  Vec grad_h_t;
};

// -log softmax of the positive logit sim(h_a, h_t)/tau against
// sim(h_a, n)/tau for each negative n. Negatives are anchor-side and constant.
InfoNceResult infonce_loss(const Vec& h_a, const Vec& h_t,
                           const std::vector<Vec>& negatives, double tau);

// Same loss from precomputed similarities; d loss / d positive_sim.
struct InfoNceScalar {
  double loss;
  double dloss_dpos;
};
InfoNceScalar infonce_from_sims(double positive_sim,
                                const std::vector<double>& negative_sims,
                                double tau);

// C distinct 0-based indices from [0, pool_size) without `exclude`.
std::vector<std::size_t> sample_negatives(std::size_t pool_size,
                                          std::size_t exclude, std::size_t C,
                                          Rng& rng);

struct AlignConfig {
  std::size_t N = 2500;
  std::size_t C = 64;
  std::size_t B = 32;
  double tau = 0.07;
  std::size_t epochs = 20;
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  double warmup_ratio = 0.1;
  double mse_weight = 0.1;
  std::size_t holdout = 500;  // last instances, excluded from training
  std::uint64_t seed = 0;

  void validate() const;
};

struct AlignTrainReport {
  std::vector<double> epoch_losses;
  double heldout_top1 = 0.0;
  double same_instance_cos = 0.0;
  double different_instance_cos = 0.0;
  double seconds = 0.0;
  std::string anchor_digest_before;
  std::string anchor_digest_after;

  double cosine_gap() const { return same_instance_cos - different_instance_cos; }
};

struct AlignmentGeometry {
  double top1 = 0.0;
  double same_cos = 0.0;
  double different_cos = 0.0;
};

// Top-1 nearest-anchor matching and mean same/different-instance cosine.
AlignmentGeometry evaluate_alignment(const std::vector<Vec>& anchor,
                                     const std::vector<Vec>& target);

struct AlignResult {
  AlignmentModule module;
  AlignTrainReport report;
};

// Minibatch contrastive training of `target_init` against the frozen anchor.
AlignResult train_alignment(const AlignmentModule& anchor,
                            const AlignmentModule& target_init,
                            const std::vector<MemoryState>& anchor_states,
                            const std::vector<MemoryState>& target_states,
                            const AlignConfig& config);

}  // namespace memadapter
