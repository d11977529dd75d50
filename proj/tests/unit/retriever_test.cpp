#include <cmath>

#include "doctest.h"
#include "generators.hpp"
#include "memadapter/error.hpp"
#include "memadapter/linearize.hpp"
#include "memadapter/retriever.hpp"

using namespace memadapter;
using testing::random_vec;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Step-by-step recurrence written with scalar loops.
Vec student_oracle(const RetrieverModel& m, const TokenSequence& prefix, const Vec& q, const Vec& h) {
  const Eigen::Index dm = m.embedding.rows();
  Vec in(q.size() + h.size());
  for (Eigen::Index i = 0; i < q.size(); ++i) in(i) = q(i);
  double mean = 0.0, var = 0.0;
  for (Eigen::Index i = 0; i < h.size(); ++i) mean += h(i) / static_cast<double>(h.size());
  for (Eigen::Index i = 0; i < h.size(); ++i) var += (h(i) - mean) * (h(i) - mean) / static_cast<double>(h.size());
  for (Eigen::Index i = 0; i < h.size(); ++i) in(q.size() + i) = (h(i) - mean) / std::sqrt(var + 1e-5);
  Vec c(dm);
  for (Eigen::Index i = 0; i < dm; ++i) {
    double a = m.b_cond(i);
    for (Eigen::Index j = 0; j < in.size(); ++j) a += m.w_cond(i, j) * in(j);
    c(i) = std::tanh(a);
  }
  Vec state = c;
  Vec logits;
  for (TokenId tok : prefix) {
    Vec x(2 * dm);
    for (Eigen::Index i = 0; i < dm; ++i) {
      x(i) = m.embedding(i, tok);
      x(dm + i) = c(i);
    }
    auto row = [&](const Mat& w, const Vec& b, Eigen::Index r, const Vec& v) {
      double a = b(r);
      for (Eigen::Index j = 0; j < v.size(); ++j) a += w(r, j) * v(j);
      return a;
    };
    Vec next(dm);
    for (Eigen::Index i = 0; i < dm; ++i) {
      const double r = sigmoid(row(m.w_input, m.b_input, i, x) + row(m.w_hidden, m.b_hidden, i, state));
      const double z = sigmoid(row(m.w_input, m.b_input, dm + i, x) + row(m.w_hidden, m.b_hidden, dm + i, state));
      const double n = std::tanh(row(m.w_input, m.b_input, 2 * dm + i, x) +
                                 r * row(m.w_hidden, m.b_hidden, 2 * dm + i, state));
      next(i) = (1 - z) * n + z * state(i);
    }
    state = next;
    logits = Vec(m.w_out.rows());
    for (Eigen::Index v = 0; v < m.w_out.rows(); ++v) logits(v) = row(m.w_out, m.b_out, v, state);
  }
  return logits;
}

RetrieverModel small_model(std::uint64_t seed, std::size_t V = 14) {
  RetrieverModel m = RetrieverModel::init(V, 3, 3, 4, seed);
  Rng rng(seed + 1);
  for (auto& [name, v] : m.vectors()) *v = random_vec(rng, static_cast<std::size_t>(v->size()), 0.3);
  return m;
}

TokenSequence random_sequence(Rng& rng, std::size_t V) {
  TokenSequence s = {tokens::bos};
  const int len = rng.range(1, 6);
  for (int i = 0; i < len; ++i) s.push_back(static_cast<TokenId>(rng.below(V)));
  s.push_back(tokens::eos);
  return s;
}

}  // namespace

TEST_CASE("memory standardization") {
  Vec h(4);
  h << 1.0, 2.0, 3.0, 6.0;
  // mean 3, variance 3.5
  Vec expected(4);
  expected << -2.0, -1.0, 0.0, 3.0;
  expected /= std::sqrt(3.5 + 1e-5);
  CHECK((standardize_memory(h) - expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(standardize_memory(Vec::Constant(5, 0.7)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(standardize_memory(Vec()).size() == 0);

  Rng rng(12);
  for (int i = 0; i < 50; ++i) {
    const Vec small = random_vec(rng, 3 + rng.below(60), rng.uniform(0.01, 0.1));
    CHECK(std::abs(standardize_memory(small).mean()) < 1e-12);
    CHECK(standardize_memory(small).squaredNorm() / static_cast<double>(small.size()) <= 1.0);
    // Invariant to shifting and positive scaling once the variance is far
    // above the floor.
    const Vec v = random_vec(rng, 3 + rng.below(60), rng.uniform(1.0, 5.0));
    const Vec z = standardize_memory(v);
    CHECK((standardize_memory(Vec((3.0 * v).array() + 2.0)) - z).cwiseAbs().maxCoeff() < 1e-4);
  }
}

TEST_CASE("teacher distribution") {
  const TokenSequence gold = {0, 2, 1};
  const Vec onehot = teacher_distribution(gold, 1, 0.0, 5);
  CHECK(onehot == (Vec(5) << 0, 0, 1, 0, 0).finished());
  const Vec smooth = teacher_distribution(gold, 1, 0.1, 5);
  CHECK(smooth(2) == doctest::Approx(0.92).epsilon(1e-15));
  CHECK(smooth(0) == doctest::Approx(0.02).epsilon(1e-15));
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double eps = rng.uniform(0.0, 0.99);
    const std::size_t V = 3 + rng.below(50);
    CHECK(std::abs(teacher_distribution(gold, 0, eps, V).sum() - 1.0) < 1e-12);
  }
  CHECK_THROWS_AS(teacher_distribution(gold, 3, 0.1, 5), ValidationError);
  CHECK_THROWS_AS(teacher_distribution(gold, 0, 1.0, 5), ValidationError);
}

TEST_CASE("distill config defaults") {
  const DistillConfig c;
  CHECK(c.kl_weight == 0.5);
  CHECK(c.kl_temperature == 2.0);
  CHECK(c.ce_weight == 1.0);
  CHECK(c.epochs == 3);
  CHECK(c.learning_rate == 1e-5);
  CHECK(c.weight_decay == 0.01);
  CHECK(c.batch_size == 4);
  CHECK(c.warmup_ratio == 0.05);
  CHECK(c.max_input_length == 4096);
  CHECK(c.max_output_length == 512);
}

TEST_CASE("distill loss closed forms") {
  SUBCASE("one-hot teacher, uniform student") {
    DistillConfig c;
    c.kl_weight = 1.0;
    c.kl_temperature = 1.0;
    c.ce_weight = 0.0;
    const Mat teacher = (Mat(4, 1) << 0, 1, 0, 0).finished();
    const DistillLoss r = distill_loss(teacher, Mat::Zero(4, 1), {1}, c);
    CHECK(std::abs(r.loss - std::log(4.0)) < 1e-6);
  }
  SUBCASE("student equals teacher") {
    Rng rng(3);
    const DistillConfig c;
    Mat teacher(6, 3), logits(6, 3);
    std::vector<TokenId> gold;
    for (int t = 0; t < 3; ++t) {
      Vec p = random_vec(rng, 6).array().exp();
      p /= p.sum();
      teacher.col(t) = p;
      logits.col(t) = c.kl_temperature * p.array().log();
      gold.push_back(static_cast<TokenId>(t));
    }
    const DistillLoss r = distill_loss(teacher, logits, gold, c);
    CHECK(std::abs(r.kl) < 1e-9);
    double ce = 0.0;
    for (int t = 0; t < 3; ++t) {
      const Vec z = logits.col(t);
      ce -= z(t) - std::log(z.array().exp().sum());
    }
    CHECK(r.loss == doctest::Approx(c.ce_weight * ce / 3).epsilon(1e-12));
  }
  SUBCASE("temperature one is plain KL") {
    DistillConfig c;
    c.kl_temperature = 1.0;
    const Mat teacher = (Mat(3, 1) << 0.2, 0.5, 0.3).finished();
    const Mat logits = (Mat(3, 1) << 0.1, -0.4, 1.2).finished();
    const Vec q = logits.col(0).array().exp() / logits.col(0).array().exp().sum();
    double kl = 0.0;
    for (int i = 0; i < 3; ++i) kl += teacher(i, 0) * std::log(teacher(i, 0) / q(i));
    CHECK(distill_loss(teacher, logits, {1}, c).kl == doctest::Approx(kl).epsilon(1e-12));
  }
  SUBCASE("errors") {
    const DistillConfig c;
    const Mat bad = (Mat(3, 1) << 0.2, 0.5, 0.2).finished();
    CHECK_THROWS_AS(distill_loss(bad, Mat::Zero(3, 1), {0}, c), ValidationError);
    CHECK_THROWS_AS(distill_loss(Mat::Constant(3, 2, 1.0 / 3), Mat::Zero(3, 1), {0}, c), ValidationError);
  }
}

TEST_CASE("distill loss is nonnegative and its gradient matches finite differences") {
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    DistillConfig c;
    c.kl_temperature = rng.uniform(0.5, 3.0);
    const std::size_t V = 3 + rng.below(6), L = 1 + rng.below(4);
    Mat teacher(V, L);
    std::vector<TokenId> gold;
    for (std::size_t t = 0; t < L; ++t) {
      Vec p = random_vec(rng, V).array().exp();
      teacher.col(static_cast<Eigen::Index>(t)) = p / p.sum();
      gold.push_back(static_cast<TokenId>(rng.below(V)));
    }
    Mat logits = testing::random_mat(rng, V, L, 2.0);
    const DistillLoss r = distill_loss(teacher, logits, gold, c);
    CHECK(r.kl >= -1e-12);
    auto loss = [&] { return distill_loss(teacher, logits, gold, c).loss; };
    CHECK(testing::max_fd_error(logits, r.grad_logits, loss) < 1e-4);
  }
}

TEST_CASE("student step") {
  SUBCASE("zero model gives uniform logits") {
    const RetrieverModel m = RetrieverModel::zeros(12, 3, 3, 4);
    const StudentStep s = student_step(m, {tokens::bos, 10, 11}, Vec::Ones(3), Vec::Ones(3));
    CHECK(s.logits.size() == 12);
    CHECK(s.logits.maxCoeff() == s.logits.minCoeff());
  }
  SUBCASE("deterministic and equal to the loop oracle") {
    Rng rng(5);
    for (int i = 0; i < 20; ++i) {
      const RetrieverModel m = small_model(rng.next_u64());
      const Vec q = random_vec(rng, 3), h = random_vec(rng, 3);
      const TokenSequence prefix = random_sequence(rng, 14);
      const StudentStep a = student_step(m, prefix, q, h);
      const StudentStep b = student_step(m, prefix, q, h);
      CHECK(a.logits == b.logits);
      CHECK((a.logits - student_oracle(m, prefix, q, h)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("incremental and whole-prefix agree") {
    const RetrieverModel m = small_model(8);
    const Vec q = Vec::Constant(3, 0.2), h = Vec::Constant(3, -0.1);
    StudentState st = student_start(m, q, h);
    const TokenSequence prefix = {tokens::bos, 12, 13, 4};
    Vec last;
    for (TokenId t : prefix) last = student_advance(m, st, t);
    CHECK(last == student_step(m, prefix, q, h).logits);
    CHECK(st.hidden == student_step(m, prefix, q, h).state);
  }
  SUBCASE("errors") {
    const RetrieverModel m = small_model(9);
    CHECK_THROWS_AS(student_step(m, {tokens::bos, 14}, Vec::Zero(3), Vec::Zero(3)), ValidationError);
    CHECK_THROWS_AS(student_step(m, {10}, Vec::Zero(3), Vec::Zero(3)), ValidationError);
    CHECK_THROWS_AS(student_step(m, {tokens::bos}, Vec::Zero(2), Vec::Zero(3)), ValidationError);
  }
}

TEST_CASE("sequence loss equals per-sequence distill loss") {
  Rng rng(6);
  const DistillConfig c;
  const RetrieverModel m = small_model(10);
  std::vector<TokenSequence> seqs;
  for (int i = 0; i < 4; ++i) seqs.push_back(random_sequence(rng, 14));
  std::vector<const TokenSequence*> ptrs;
  for (const auto& s : seqs) ptrs.push_back(&s);
  const Mat qs = testing::random_mat(rng, 3, 4), hs = testing::random_mat(rng, 3, 4);

  double expected = 0.0;
  for (int b = 0; b < 4; ++b) {
    const TokenSequence& s = seqs[static_cast<std::size_t>(b)];
    const std::size_t L = s.size() - 1;
    Mat teacher(14, static_cast<Eigen::Index>(L)), logits(14, static_cast<Eigen::Index>(L));
    std::vector<TokenId> gold;
    for (std::size_t t = 0; t < L; ++t) {
      const TokenSequence prefix(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(t) + 1);
      logits.col(static_cast<Eigen::Index>(t)) = student_step(m, prefix, qs.col(b), hs.col(b)).logits;
      teacher.col(static_cast<Eigen::Index>(t)) = teacher_distribution(s, t + 1, c.label_smoothing, 14);
      gold.push_back(s[t + 1]);
    }
    expected += distill_loss(teacher, logits, gold, c).loss;
  }
  CHECK(sequence_batch_loss(m, ptrs, qs, hs, c, nullptr) == doctest::Approx(expected / 4).epsilon(1e-12));
}

TEST_CASE("retriever parameter gradients match finite differences") {
  Rng rng(7);
  const DistillConfig c;
  for (int trial = 0; trial < 3; ++trial) {
    RetrieverModel m = small_model(rng.next_u64());
    std::vector<TokenSequence> seqs;
    for (int i = 0; i < 3; ++i) seqs.push_back(random_sequence(rng, 14));
    std::vector<const TokenSequence*> ptrs;
    for (const auto& s : seqs) ptrs.push_back(&s);
    const Mat qs = testing::random_mat(rng, 3, 3), hs = testing::random_mat(rng, 3, 3);
    RetrieverGradients g;
    sequence_batch_loss(m, ptrs, qs, hs, c, &g);
    auto loss = [&] { return sequence_batch_loss(m, ptrs, qs, hs, c, nullptr); };
    auto mats = m.matrices();
    for (std::size_t i = 0; i < mats.size(); ++i) {
      INFO(mats[i].first);
      CHECK(testing::max_fd_error(*mats[i].second, g.matrices[i], loss) < 1e-4);
    }
    auto vecs = m.vectors();
    for (std::size_t i = 0; i < vecs.size(); ++i) {
      INFO(vecs[i].first);
      CHECK(testing::max_fd_error(*vecs[i].second, g.vectors[i], loss) < 1e-4);
    }
  }
}

TEST_CASE("query embedding") {
  const Vec a = embed_query("What is the Color of the sky", 64, 1);
  CHECK(a.size() == 64);
  CHECK(a.norm() == doctest::Approx(1.0));
  CHECK(a == embed_query("what is the color   of the sky", 64, 1));
  CHECK_FALSE(a == embed_query("what is the color of the sky", 64, 2));
  CHECK(embed_query("", 8, 1).isZero());
}

TEST_CASE("model shapes and initialization") {
  const RetrieverModel m = RetrieverModel::init(20, 4, 5, 6, 1);
  CHECK(m.vocab_size() == 20);
  CHECK(m.d_m() == 6);
  CHECK(m.cond_dim() == 9);
  CHECK(m.parameter_count() == 6 * 20 + 6 * 9 + 6 + 18 * 12 + 18 + 18 * 6 + 18 + 20 * 6 + 20);
  CHECK(m == RetrieverModel::init(20, 4, 5, 6, 1));
  CHECK_FALSE(m == RetrieverModel::init(20, 4, 5, 6, 2));
}

TEST_CASE("train_retriever") {
  const MemoryGraph full({{NodeId::parse("N1"), "red apple"}, {NodeId::parse("N2"), "tree"}},
                         {{NodeId::parse("N1"), NodeId::parse("N2"), "grows on"}});
  const MemoryGraph gold({{NodeId::parse("N1"), "red apple"}}, {});
  Vocabulary vocab(Vocabulary::Mode::open);
  vocab.add_graph_words(full);
  vocab.set_mode(Vocabulary::Mode::closed);

  std::vector<RetrieverExample> corpus;
  Rng rng(8);
  for (int i = 0; i < 6; ++i) {
    corpus.push_back({"ex" + std::to_string(i), full, gold, random_vec(rng, 3), random_vec(rng, 3)});
  }
  DistillConfig c;
  c.epochs = 5;
  c.learning_rate = 1e-2;
  c.seed = 3;
  const RetrieverModel init = RetrieverModel::init(vocab.size(), 3, 3, 8, 4);
  RetrieverTrainReport report;
  const RetrieverModel trained = train_retriever(init, corpus, vocab, c, &report);
  CHECK(report.epoch_losses.size() == 5);
  CHECK(report.epoch_losses.back() < report.epoch_losses.front());
  CHECK(trained == train_retriever(init, corpus, vocab, c));

  corpus[4].gold = MemoryGraph({{NodeId::parse("N1"), "green apple"}}, {});
  try {
    train_retriever(init, corpus, vocab, c);
    FAIL("accepted an inconsistent instance");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("ex4") != std::string::npos);
    CHECK(std::string(e.what()).find("description-mismatch") != std::string::npos);
  }
}
