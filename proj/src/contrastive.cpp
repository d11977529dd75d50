#include "memadapter/contrastive.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <unordered_set>

#include "memadapter/error.hpp"
#include "memadapter/optim.hpp"

namespace memadapter {

namespace {

constexpr double kNormFloor = 1e-12;

void check_same_dim(const Vec& u, const Vec& v) {
  if (u.size() != v.size()) {
    throw ValidationError("dimension mismatch: " + std::to_string(u.size()) +
                          " vs " + std::to_string(v.size()));
  }
}

}  // namespace

double cosine_sim(const Vec& u, const Vec& v) {
  check_same_dim(u, v);
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu < kNormFloor || nv < kNormFloor) return 0.0;
  const double c = u.dot(v) / (nu * nv);
  return std::clamp(c, -1.0, 1.0);
}

Vec cosine_grad_wrt_second(const Vec& a, const Vec& t) {
  check_same_dim(a, t);
  const double na = a.norm();
  const double nt = t.norm();
  if (na < kNormFloor || nt < kNormFloor) return Vec::Zero(t.size());
  const double c = a.dot(t) / (na * nt);
  return a / (na * nt) - c * t / (nt * nt);
}

InfoNceScalar infonce_from_sims(double positive_sim,
                                const std::vector<double>& negative_sims,
                                double tau) {
  if (negative_sims.empty()) throw ValidationError("infonce: no negatives");
  if (!(tau > 0.0)) throw ValidationError("infonce: temperature must be positive");
  const double pos = positive_sim / tau;
  double max_logit = pos;
  for (double s : negative_sims) max_logit = std::max(max_logit, s / tau);
  // Loss = log(sum_k exp(l_k - l_0)); log1p keeps tiny losses exact.
  double rest = 0.0;
  for (double s : negative_sims) rest += std::exp(s / tau - max_logit);
  const double pos_term = std::exp(pos - max_logit);
  double loss;
  if (pos == max_logit) {
    loss = std::log1p(rest);
  } else {
    loss = max_logit + std::log(pos_term + rest) - pos;
  }
  const double p_pos = pos_term / (pos_term + rest);
  return {loss, (p_pos - 1.0) / tau};
}

InfoNceResult infonce_loss(const Vec& h_a, const Vec& h_t,
                           const std::vector<Vec>& negatives, double tau) {
  check_same_dim(h_a, h_t);
  std::vector<double> sims;
  sims.reserve(negatives.size());
  for (const Vec& n : negatives) sims.push_back(cosine_sim(h_a, n));
  const InfoNceScalar s = infonce_from_sims(cosine_sim(h_a, h_t), sims, tau);
  return {s.loss, s.dloss_dpos * cosine_grad_wrt_second(h_a, h_t)};
}

std::vector<std::size_t> sample_negatives(std::size_t pool_size,
                                          std::size_t exclude, std::size_t C,
                                          Rng& rng) {
  if (exclude >= pool_size) throw ValidationError("excluded index out of range");
  if (C > pool_size - 1) {
    throw ValidationError("cannot draw " + std::to_string(C) +
                          " negatives from a pool of " + std::to_string(pool_size));
  }
  // Floyd's algorithm over the pool with `exclude` removed.
  const std::size_t m = pool_size - 1;
  std::vector<std::size_t> picked;
  std::unordered_set<std::size_t> seen;
  picked.reserve(C);
  for (std::size_t j = m - C; j < m; ++j) {
    std::size_t t = rng.below(j + 1);
    if (seen.count(t) != 0) t = j;
    seen.insert(t);
    picked.push_back(t);
  }
  for (std::size_t& p : picked) {
    if (p >= exclude) ++p;
  }
  return picked;
}

void AlignConfig::validate() const {
  if (holdout >= N) throw ValidationError("holdout must be smaller than N");
  const std::size_t train = N - holdout;
  if (C < 1 || C > train - 1) {
    throw ValidationError("negative sample size C must be in [1, N_train - 1]");
  }
  if (B < 1 || B > train) throw ValidationError("batch size must be in [1, N_train]");
  if (!(tau > 0.0)) throw ValidationError("tau must be positive");
  if (epochs < 1) throw ValidationError("epochs must be positive");
  if (mse_weight < 0.0) throw ValidationError("mse_weight must be nonnegative");
  if (warmup_ratio < 0.0 || warmup_ratio > 1.0) {
    throw ValidationError("warmup_ratio must be in [0, 1]");
  }
}

AlignmentGeometry evaluate_alignment(const std::vector<Vec>& anchor,
                                     const std::vector<Vec>& target) {
  if (anchor.size() != target.size() || anchor.empty()) {
    throw ValidationError("alignment evaluation needs equal nonempty lists");
  }
  const std::size_t n = anchor.size();
  AlignmentGeometry g;
  std::size_t hits = 0;
  double same = 0.0, diff = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    double best_sim = -2.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double s = cosine_sim(target[i], anchor[k]);
      if (k == i) same += s; else diff += s;
      if (s > best_sim) {
        best_sim = s;
        best = k;
      }
    }
    if (best == i) ++hits;
  }
  g.top1 = static_cast<double>(hits) / static_cast<double>(n);
  g.same_cos = same / static_cast<double>(n);
  g.different_cos = n > 1 ? diff / static_cast<double>(n * (n - 1)) : 0.0;
  return g;
}

AlignResult train_alignment(const AlignmentModule& anchor,
                            const AlignmentModule& target_init,
                            const std::vector<MemoryState>& anchor_states,
                            const std::vector<MemoryState>& target_states,
                            const AlignConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  config.validate();
  if (anchor_states.size() != target_states.size()) {
    throw ValidationError("anchor and target state lists differ in length");
  }
  if (anchor_states.size() != config.N) {
    throw ValidationError("expected " + std::to_string(config.N) +
                          " states, got " + std::to_string(anchor_states.size()));
  }
  for (const auto* list : {&anchor_states, &target_states}) {
    for (const MemoryState& s : *list) {
      if (s.paradigm != list->front().paradigm) {
        throw ValidationError("paradigm mismatch within a state list");
      }
    }
  }
  if (anchor.output_dim() != target_init.output_dim()) {
    throw ValidationError("anchor and target modules map to different spaces");
  }

  AlignResult result{target_init, {}};
  AlignTrainReport& report = result.report;
  AlignmentModule& target = result.module;
  report.anchor_digest_before = parameter_digest(anchor);

  const std::size_t n = config.N;
  const std::size_t n_train = n - config.holdout;
  const std::size_t d_t = target.input_dim();

  std::vector<Vec> h_anchor(n);
  for (std::size_t i = 0; i < n; ++i) h_anchor[i] = align_forward(anchor, anchor_states[i]);
  Mat target_raw(d_t, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (static_cast<std::size_t>(target_states[i].raw.size()) != d_t) {
      throw ValidationError("target state dimension does not match module");
    }
    target_raw.col(i) = target_states[i].raw;
  }

  // Anchor-side similarities only depend on frozen vectors.
  std::vector<Vec> anchor_unit(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double norm = h_anchor[i].norm();
    anchor_unit[i] = norm < kNormFloor ? Vec::Zero(h_anchor[i].size()) : Vec(h_anchor[i] / norm);
  }

  Rng rng(config.seed);
  const std::size_t batches_per_epoch = (n_train + config.B - 1) / config.B;
  const std::size_t total_steps = batches_per_epoch * config.epochs;
  AdamW opt(config.weight_decay);
  std::size_t step = 0;
  const double d_s = static_cast<double>(target.output_dim());

  std::vector<std::size_t> order(n_train);
  for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
  std::vector<double> neg_sims(config.C);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t b0 = 0; b0 < n_train; b0 += config.B) {
      const std::size_t b1 = std::min(n_train, b0 + config.B);
      const std::size_t bs = b1 - b0;
      Mat raw(d_t, bs);
      for (std::size_t k = 0; k < bs; ++k) raw.col(k) = target_raw.col(order[b0 + k]);
      const Mat h_t = align_forward_batch(target, raw);
      Mat upstream(h_t.rows(), bs);
      for (std::size_t k = 0; k < bs; ++k) {
        const std::size_t j = order[b0 + k];
        const auto negs = sample_negatives(n_train, j, config.C, rng);
        for (std::size_t c = 0; c < config.C; ++c) {
          neg_sims[c] = anchor_unit[j].dot(anchor_unit[negs[c]]);
        }
        const Vec ht = h_t.col(k);
        const InfoNceScalar s =
            infonce_from_sims(cosine_sim(h_anchor[j], ht), neg_sims, config.tau);
        const Vec diff = ht - h_anchor[j];
        const double mse = diff.squaredNorm() / d_s;
        epoch_loss += s.loss + config.mse_weight * mse;
        upstream.col(k) = s.dloss_dpos * cosine_grad_wrt_second(h_anchor[j], ht) +
                          config.mse_weight * 2.0 / d_s * diff;
      }
      upstream /= static_cast<double>(bs);
      const AlignGradients g = align_gradients_batch(target, raw, upstream);
      opt.step({{target.w1.data(), g.w1.data(), static_cast<std::size_t>(g.w1.size())},
                {target.b1.data(), g.b1.data(), static_cast<std::size_t>(g.b1.size())},
                {target.w2.data(), g.w2.data(), static_cast<std::size_t>(g.w2.size())},
                {target.b2.data(), g.b2.data(), static_cast<std::size_t>(g.b2.size())}},
               cosine_lr(config.learning_rate, step, total_steps, config.warmup_ratio));
      ++step;
    }
    report.epoch_losses.push_back(epoch_loss / static_cast<double>(n_train));
  }

  const std::size_t eval_begin = config.holdout > 0 ? n_train : 0;
  std::vector<Vec> eval_anchor, eval_target;
  for (std::size_t i = eval_begin; i < n; ++i) {
    eval_anchor.push_back(h_anchor[i]);
    eval_target.push_back(align_forward(target, target_states[i]));
  }
  const AlignmentGeometry geo = evaluate_alignment(eval_anchor, eval_target);
  report.heldout_top1 = geo.top1;
  report.same_instance_cos = geo.same_cos;
  report.different_instance_cos = geo.different_cos;
  report.anchor_digest_after = parameter_digest(anchor);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace memadapter
