#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "memadapter/graph.hpp"
#include "memadapter/linearize.hpp"
#include "memadapter/unified_space.hpp"
#include "memadapter/vocabulary.hpp"

namespace memadapter {

// Seeded feature hashing of lowercased whitespace tokens, L2-normalized.
Vec embed_query(const std::string& query, std::size_t d_q, std::uint64_t seed);

// (1 - eps) * onehot(gold[step]) + eps / V.
Vec teacher_distribution(const TokenSequence& gold, std::size_t step,
                         double epsilon, std::size_t V);

struct DistillConfig {
  double kl_weight = 0.5;
  double kl_temperature = 2.0;
  double ce_weight = 1.0;
  double label_smoothing = 0.05;
  std::size_t epochs = 3;
  double learning_rate = 1e-5;
  double weight_decay = 0.01;
  double warmup_ratio = 0.05;
  std::size_t batch_size = 4;
  std::size_t max_input_length = 4096;
  std::size_t max_output_length = 512;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DistillLoss {
  double loss = 0.0;
  double kl = 0.0;  // mean KL * T^2, before kl_weight
  double ce = 0.0;  // mean CE, before ce_weight
  Mat grad_logits;  // V x L
};

// Columns of `teacher` and `logits` are steps. `gold` holds the CE target
// for each step.
DistillLoss distill_loss(const Mat& teacher, const Mat& logits,
                         const std::vector<TokenId>& gold,
                         const DistillConfig& config);

// Memory input as the decoder sees it: zero mean and unit variance over the
// vector's coordinates (variance floor 1e-5), so that the small, dense
// unified vector is not drowned out by the query embedding.
Vec standardize_memory(const Vec& h);

// Gated recurrent decoder. The conditioning vector
// c = tanh(Wc [q; standardize_memory(h)] + bc) is the initial state and is
// also concatenated to every step's input.
struct RetrieverModel {
  Mat embedding;  // d_m x V, one column per token
  Mat w_cond;     // d_m x (d_q + D_s)
  Vec b_cond;
  Mat w_input;    // 3 d_m x 2 d_m, gate rows ordered r, z, n
  Vec b_input;
  Mat w_hidden;   // 3 d_m x d_m
  Vec b_hidden;
  Mat w_out;      // V x d_m
  Vec b_out;

  static RetrieverModel init(std::size_t vocab_size, std::size_t d_q,
                             std::size_t d_s, std::size_t d_m,
                             std::uint64_t seed);
  static RetrieverModel zeros(std::size_t vocab_size, std::size_t d_q,
                              std::size_t d_s, std::size_t d_m);

  std::size_t vocab_size() const { return static_cast<std::size_t>(w_out.rows()); }
  std::size_t d_m() const { return static_cast<std::size_t>(embedding.rows()); }
  std::size_t cond_dim() const { return static_cast<std::size_t>(w_cond.cols()); }
  std::size_t parameter_count() const;
  void check_shapes() const;

  // Parameter blocks in a fixed order, with their names.
  std::vector<std::pair<std::string, Mat*>> matrices();
  std::vector<std::pair<std::string, Vec*>> vectors();
  std::vector<std::pair<std::string, const Mat*>> matrices() const;
  std::vector<std::pair<std::string, const Vec*>> vectors() const;

  bool operator==(const RetrieverModel& o) const;
};

// Incremental decoding state.
struct StudentState {
  Vec cond;
  Vec hidden;
};

StudentState student_start(const RetrieverModel& model, const Vec& q, const Vec& h);
// Feeds one token and returns logits for the next one.
Vec student_advance(const RetrieverModel& model, StudentState& state, TokenId token);

struct StudentStep {
  Vec logits;
  Vec state;
};
// Runs the whole prefix (which starts with BOS).
StudentStep student_step(const RetrieverModel& model, const TokenSequence& prefix,
                         const Vec& q, const Vec& h);

struct RetrieverExample {
  std::string id;
  MemoryGraph full_graph;
  MemoryGraph gold;
  Vec query;  // embedded
  Vec memory;  // unified vector
};

struct RetrieverGradients {
  std::vector<Mat> matrices;
  std::vector<Vec> vectors;
};

// Mean over sequences of the per-sequence distill loss, with gradients in
// the order of RetrieverModel::matrices()/vectors().
double sequence_batch_loss(const RetrieverModel& model,
                           const std::vector<const TokenSequence*>& sequences,
                           const Mat& queries, const Mat& memories,
                           const DistillConfig& config,
                           RetrieverGradients* grads);

struct RetrieverTrainReport {
  std::vector<double> epoch_losses;
  double seconds = 0.0;
};

RetrieverModel train_retriever(const RetrieverModel& init,
                               const std::vector<RetrieverExample>& corpus,
                               const Vocabulary& vocab,
                               const DistillConfig& config,
                               RetrieverTrainReport* report = nullptr);

}  // namespace memadapter
