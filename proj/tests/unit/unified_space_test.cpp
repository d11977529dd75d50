#include <cmath>

#include "doctest.h"
#include "generators.hpp"
#include "memadapter/contrastive.hpp"
#include "memadapter/error.hpp"
#include "memadapter/unified_space.hpp"

using namespace memadapter;
using testing::random_vec;

namespace {

// Plain loops, written independently of the Eigen expressions.
Vec forward_oracle(const AlignmentModule& m, const Vec& x) {
  std::vector<double> hidden(static_cast<std::size_t>(m.w1.rows()));
  for (Eigen::Index i = 0; i < m.w1.rows(); ++i) {
    double a = m.b1(i);
    for (Eigen::Index j = 0; j < m.w1.cols(); ++j) a += m.w1(i, j) * x(j);
    hidden[static_cast<std::size_t>(i)] = m.activation == Activation::tanh ? std::tanh(a) : a;
  }
  Vec out(m.w2.rows());
  for (Eigen::Index i = 0; i < m.w2.rows(); ++i) {
    double a = m.b2(i);
    for (Eigen::Index j = 0; j < m.w2.cols(); ++j) a += m.w2(i, j) * hidden[static_cast<std::size_t>(j)];
    out(i) = a;
  }
  return out;
}

}  // namespace

TEST_CASE("paradigm registration") {
  ParadigmRegistry a(16), b(16);
  a.register_paradigm("latent-sim", 48, 7);
  b.register_paradigm("latent-sim", 48, 7);
  Rng rng(1);
  const Vec probe = random_vec(rng, 16);
  CHECK(a.encode_state("latent-sim", probe, 4).raw == b.encode_state("latent-sim", probe, 4).raw);
  CHECK(a.get("latent-sim").projection == b.get("latent-sim").projection);
  CHECK_THROWS_AS(a.register_paradigm("x", 0, 1), ValidationError);
  CHECK_THROWS_AS(a.register_paradigm("latent-sim", 8, 1), ValidationError);
  CHECK_THROWS_AS(a.encode_state("missing", probe, 4), ValidationError);
  CHECK(a.names() == std::vector<std::string>{"latent-sim"});
}

TEST_CASE("projection statistics") {
  ParadigmRegistry r(64);
  const Mat& p = r.register_paradigm("p", 256, 3).projection;
  const double mean = p.mean();
  const double var = (p.array() - mean).square().mean();
  CHECK(std::abs(mean) < 0.01);
  CHECK(var * 64 == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("different encoder seeds give unrelated encodings") {
  ParadigmRegistry r(64);
  r.register_paradigm("a", 64, 1);
  r.register_paradigm("b", 64, 2);
  Rng rng(9);
  double total = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Vec x = random_vec(rng, 64);
    total += cosine_sim(r.encode_state("a", x, 8).raw, r.encode_state("b", x, 8).raw);
  }
  CHECK(std::abs(total / 100) < 0.3);
}

TEST_CASE("segment masks") {
  ParadigmRegistry r(64);
  r.register_paradigm("p", 32, 5);
  Rng rng(2);
  const std::vector<std::size_t> all = {0, 1, 2, 3, 4, 5, 6, 7};
  const std::vector<std::size_t> evens = {0, 2, 4, 6}, odds = {1, 3, 5, 7};
  const Vec zero_state = r.encode_state("p", Vec::Zero(64), 8).raw;
  for (int i = 0; i < 100; ++i) {
    const Vec x = random_vec(rng, 64);
    const Vec full = r.encode_state("p", x, 8).raw;
    CHECK(r.encode_state("p", x, 8, all).raw == full);
    CHECK(r.encode_state("p", x, 8, std::vector<std::size_t>{}).raw == zero_state);
    CHECK(r.encode_state("p", x, 8, evens).raw != full);
    CHECK(r.encode_state("p", x, 8, odds).raw != full);
  }
  CHECK_THROWS_AS(r.encode_state("p", Vec::Zero(64), 8, std::vector<std::size_t>{8}), ValidationError);
  CHECK_THROWS_AS(r.encode_state("p", Vec::Zero(63), 8), ValidationError);
  CHECK(segment_bounds(64, 8, 3) == std::pair<std::size_t, std::size_t>{24, 32});
  CHECK(segment_bounds(10, 3, 2) == std::pair<std::size_t, std::size_t>{6, 10});
}

TEST_CASE("align_forward special cases") {
  Rng rng(4);
  AlignmentModule constant = AlignmentModule::init(5, 6, 3, 1);
  constant.w1.setZero();
  constant.w2.setZero();
  constant.b2 = Vec::LinSpaced(3, -1, 1);
  CHECK(align_forward(constant, random_vec(rng, 5)) == constant.b2);

  AlignmentModule identity = AlignmentModule::init(4, 4, 4, 1);
  identity.w1.setIdentity();
  identity.w2.setIdentity();
  identity.activation = Activation::identity;
  const Vec x = random_vec(rng, 4);
  CHECK(align_forward(identity, x) == x);

  CHECK_THROWS_AS(align_forward(identity, random_vec(rng, 5)), ValidationError);
}

TEST_CASE("align_forward matches a loop oracle") {
  Rng rng(6);
  for (int i = 0; i < 50; ++i) {
    AlignmentModule m = AlignmentModule::init(7, 5, 4, rng.next_u64());
    m.b1 = random_vec(rng, 5);
    m.b2 = random_vec(rng, 4);
    const Vec x = random_vec(rng, 7);
    CHECK((align_forward(m, x) - forward_oracle(m, x)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("bias shift moves the output by the shift") {
  Rng rng(8);
  const AlignmentModule m = AlignmentModule::init(6, 6, 6, 2);
  AlignmentModule shifted = m;
  const Vec delta = Vec::Constant(6, 0.25);
  shifted.b2 += delta;
  const Vec x = random_vec(rng, 6);
  CHECK((align_forward(shifted, x) - align_forward(m, x) - delta).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(align_forward(m, x).size() == 6);
}

TEST_CASE("init ranges and determinism") {
  const AlignmentModule m = AlignmentModule::init(16, 8, 4, 77);
  CHECK(m.w1.cwiseAbs().maxCoeff() <= 1.0 / 4.0);
  CHECK(m.w2.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(8.0));
  CHECK(m.b1.isZero());
  CHECK(m.b2.isZero());
  CHECK(m == AlignmentModule::init(16, 8, 4, 77));
  CHECK_FALSE(m == AlignmentModule::init(16, 8, 4, 78));
  CHECK(parameter_digest(m).size() == m.parameter_count() * 8);
}

TEST_CASE("align_gradients") {
  Rng rng(10);
  SUBCASE("zero upstream") {
    const AlignmentModule m = AlignmentModule::init(3, 4, 2, 1);
    const AlignGradients g = align_gradients(m, random_vec(rng, 3), Vec::Zero(2));
    CHECK(g.w1.isZero());
    CHECK(g.b1.isZero());
    CHECK(g.w2.isZero());
    CHECK(g.b2.isZero());
  }
  SUBCASE("single unit by hand") {
    AlignmentModule m = AlignmentModule::init(1, 1, 1, 1);
    m.w1(0, 0) = 0.7;
    m.b1(0) = -0.2;
    m.w2(0, 0) = 1.3;
    m.b2(0) = 0.4;
    Vec x(1), u(1);
    x << 0.9;
    u << -2.0;
    const double a = 0.7 * 0.9 - 0.2;
    const double t = std::tanh(a);
    const AlignGradients g = align_gradients(m, x, u);
    CHECK(g.w2(0, 0) == doctest::Approx(-2.0 * t).epsilon(1e-14));
    CHECK(g.b2(0) == doctest::Approx(-2.0).epsilon(1e-14));
    CHECK(g.b1(0) == doctest::Approx(-2.0 * 1.3 * (1 - t * t)).epsilon(1e-14));
    CHECK(g.w1(0, 0) == doctest::Approx(-2.0 * 1.3 * (1 - t * t) * 0.9).epsilon(1e-14));
  }
  SUBCASE("finite differences") {
    for (int i = 0; i < 20; ++i) {
      AlignmentModule m = AlignmentModule::init(5, 4, 3, rng.next_u64());
      m.b1 = random_vec(rng, 4, 0.5);
      const Vec x = random_vec(rng, 5);
      const Vec u = random_vec(rng, 3);
      const AlignGradients g = align_gradients(m, x, u);
      auto loss = [&] { return u.dot(align_forward(m, x)); };
      CHECK(testing::max_fd_error(m.w1, g.w1, loss) < 1e-4);
      CHECK(testing::max_fd_error(m.b1, g.b1, loss) < 1e-4);
      CHECK(testing::max_fd_error(m.w2, g.w2, loss) < 1e-4);
      CHECK(testing::max_fd_error(m.b2, g.b2, loss) < 1e-4);
    }
  }
  SUBCASE("batch sums columns") {
    const AlignmentModule m = AlignmentModule::init(3, 3, 2, 4);
    const Mat x = testing::random_mat(rng, 3, 5);
    const Mat u = testing::random_mat(rng, 2, 5);
    const AlignGradients total = align_gradients_batch(m, x, u);
    Mat w1 = Mat::Zero(3, 3);
    for (int c = 0; c < 5; ++c) w1 += align_gradients(m, x.col(c), u.col(c)).w1;
    CHECK((total.w1 - w1).cwiseAbs().maxCoeff() < 1e-12);
    const Mat out = align_forward_batch(m, x);
    CHECK((out.col(2) - align_forward(m, Vec(x.col(2)))).cwiseAbs().maxCoeff() < 1e-12);
  }
}
