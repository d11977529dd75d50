#include <cmath>
#include <set>

#include "doctest.h"
#include "generators.hpp"
#include "memadapter/contrastive.hpp"
#include "memadapter/error.hpp"

using namespace memadapter;
using testing::random_vec;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST_CASE("cosine similarity") {
  CHECK(cosine_sim(v2(1, 0), v2(1, 0)) == 1.0);
  CHECK(cosine_sim(v2(1, 0), v2(0, 1)) == 0.0);
  CHECK(cosine_sim(v2(1, 1), v2(1, 0)) == doctest::Approx(0.70710678).epsilon(1e-8));
  CHECK(cosine_sim(v2(0, 0), v2(1, 0)) == 0.0);
  CHECK(cosine_sim(v2(1e-13, 0), v2(1, 0)) == 0.0);
  CHECK_THROWS_AS(cosine_sim(v2(1, 0), Vec::Ones(3)), ValidationError);
}

TEST_CASE("infonce closed forms") {
  SUBCASE("one negative at tau 1") {
    const auto r = infonce_loss(v2(1, 0), v2(1, 0), {v2(0, 1)}, 1.0);
    CHECK(std::abs(r.loss - 0.31326169) < 1e-6);
    CHECK(std::abs(r.loss + std::log(std::exp(1.0) / (std::exp(1.0) + 1.0))) < 1e-12);
  }
  SUBCASE("aligned positive, opposite negatives") {
    const Vec h = v2(0.6, -0.8);
    const auto r = infonce_loss(h, h, std::vector<Vec>(16, -h), 0.07);
    CHECK(r.loss >= 0.0);
    CHECK(r.loss < 1e-9);
  }
  SUBCASE("equal similarities") {
    const Vec h = v2(1, 0);
    for (std::size_t C : {1u, 4u, 64u}) {
      const auto r = infonce_loss(h, h, std::vector<Vec>(C, h), 0.07);
      CHECK(std::abs(r.loss - std::log(1.0 + static_cast<double>(C))) < 1e-12);
    }
  }
  CHECK_THROWS_AS(infonce_loss(v2(1, 0), v2(1, 0), {}, 1.0), ValidationError);
  CHECK_THROWS_AS(infonce_loss(v2(1, 0), v2(1, 0), {v2(0, 1)}, 0.0), ValidationError);
}

TEST_CASE("infonce is nonnegative and its gradient matches finite differences") {
  Rng rng(12);
  for (int i = 0; i < 50; ++i) {
    const Vec h_a = random_vec(rng, 6);
    Vec h_t = random_vec(rng, 6);
    std::vector<Vec> negs;
    for (int k = 0; k < 5; ++k) negs.push_back(random_vec(rng, 6));
    const double tau = rng.uniform(0.05, 1.0);
    const auto r = infonce_loss(h_a, h_t, negs, tau);
    CHECK(r.loss >= 0.0);
    auto loss = [&] { return infonce_loss(h_a, h_t, negs, tau).loss; };
    CHECK(testing::max_fd_error(h_t, r.grad_h_t, loss) < 1e-4);
  }
}

TEST_CASE("sample_negatives") {
  Rng rng(13);
  CHECK(sample_negatives(2, 0, 1, rng) == std::vector<std::size_t>{1});
  for (int i = 0; i < 500; ++i) {
    const std::size_t n = 2 + rng.below(40);
    const std::size_t j = rng.below(n);
    const std::size_t c = 1 + rng.below(n - 1);
    const auto out = sample_negatives(n, j, c, rng);
    const std::set<std::size_t> distinct(out.begin(), out.end());
    CHECK(out.size() == c);
    CHECK(distinct.size() == c);
    CHECK(distinct.count(j) == 0);
    CHECK(*distinct.rbegin() < n);
  }
  CHECK_THROWS_AS(sample_negatives(5, 0, 5, rng), ValidationError);
  CHECK_THROWS_AS(sample_negatives(5, 5, 1, rng), ValidationError);

  Rng a(99), b(99);
  CHECK(sample_negatives(50, 3, 10, a) == sample_negatives(50, 3, 10, b));
}

TEST_CASE("sample_negatives is uniform") {
  Rng rng(14);
  std::vector<double> counts(100, 0.0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    for (std::size_t k : sample_negatives(100, 0, 5, rng)) counts[k] += 1.0;
  }
  CHECK(counts[0] == 0.0);
  const double expected = draws * 5.0 / 99.0;
  double chi2 = 0.0;
  for (std::size_t k = 1; k < 100; ++k) chi2 += (counts[k] - expected) * (counts[k] - expected) / expected;
  // 98 degrees of freedom: mean 98, standard deviation 14.
  CHECK(chi2 < 98.0 + 3.0 * 14.0);
}

TEST_CASE("align config validation") {
  AlignConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.N == 2500);
  CHECK(c.B == 32);
  CHECK(c.tau == 0.07);
  CHECK(c.epochs == 20);
  CHECK(c.learning_rate == 1e-4);
  CHECK(c.weight_decay == 0.01);
  CHECK(c.warmup_ratio == 0.1);
  CHECK(c.mse_weight == 0.1);
  AlignConfig bad = c;
  bad.tau = 0.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = c;
  bad.C = c.N;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = c;
  bad.B = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

namespace {

struct SmallAlignSetup {
  AlignConfig config;
  AlignmentModule anchor, target;
  std::vector<MemoryState> anchor_states, target_states;
};

SmallAlignSetup small_setup() {
  SmallAlignSetup s;
  s.config.N = 120;
  s.config.holdout = 20;
  s.config.C = 8;
  s.config.B = 16;
  s.config.epochs = 3;
  s.config.seed = 5;
  ParadigmRegistry r(12);
  r.register_paradigm("a", 10, 1);
  r.register_paradigm("t", 14, 2);
  Rng rng(21);
  for (std::size_t i = 0; i < s.config.N; ++i) {
    const Vec x = random_vec(rng, 12);
    s.anchor_states.push_back(r.encode_state("a", x, 4));
    s.target_states.push_back(r.encode_state("t", x, 4));
  }
  s.anchor = AlignmentModule::init(10, 8, 8, 3);
  s.target = AlignmentModule::init(14, 8, 8, 4);
  return s;
}

}  // namespace

TEST_CASE("train_alignment contracts") {
  const SmallAlignSetup s = small_setup();
  const AlignmentModule anchor_copy = s.anchor;
  const AlignResult r = train_alignment(s.anchor, s.target, s.anchor_states, s.target_states, s.config);
  CHECK(s.anchor == anchor_copy);
  CHECK(r.report.anchor_digest_before == r.report.anchor_digest_after);
  CHECK(r.report.anchor_digest_before == parameter_digest(s.anchor));
  CHECK(r.report.epoch_losses.size() == 3);
  CHECK_FALSE(r.module == s.target);
  CHECK(r.report.heldout_top1 >= 0.0);
  CHECK(r.report.heldout_top1 <= 1.0);

  const AlignResult again = train_alignment(s.anchor, s.target, s.anchor_states, s.target_states, s.config);
  CHECK(again.module == r.module);
  CHECK(again.report.epoch_losses == r.report.epoch_losses);

  auto short_list = s.target_states;
  short_list.pop_back();
  CHECK_THROWS_AS(train_alignment(s.anchor, s.target, s.anchor_states, short_list, s.config), ValidationError);
  auto mixed = s.target_states;
  mixed[3].paradigm = "other";
  CHECK_THROWS_AS(train_alignment(s.anchor, s.target, s.anchor_states, mixed, s.config), ValidationError);
}

TEST_CASE("perfectly aligned start") {
  SmallAlignSetup s = small_setup();
  const AlignResult r = train_alignment(s.anchor, s.anchor, s.anchor_states, s.anchor_states, s.config);
  CHECK(r.report.epoch_losses[0] >= 0.0);
  CHECK(r.report.epoch_losses[0] <= std::log(1.0 + static_cast<double>(s.config.C)));
  CHECK(r.report.heldout_top1 == 1.0);
}

TEST_CASE("evaluate_alignment") {
  std::vector<Vec> anchor = {v2(1, 0), v2(0, 1), v2(-1, 0)};
  const AlignmentGeometry same = evaluate_alignment(anchor, anchor);
  CHECK(same.top1 == 1.0);
  CHECK(same.same_cos == doctest::Approx(1.0));
  CHECK(same.different_cos == doctest::Approx(-1.0 / 3.0));
  std::vector<Vec> rotated = {v2(0, 1), v2(-1, 0), v2(1, 0)};
  CHECK(evaluate_alignment(anchor, rotated).top1 == 0.0);
}
