#include "memadapter/retriever.hpp"

#include <chrono>
#include <cmath>

#include "memadapter/error.hpp"
#include "memadapter/optim.hpp"
#include "memadapter/rng.hpp"
#include "text_util.hpp"

namespace memadapter {

namespace {

Mat sigmoid(const Mat& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }

void fill_uniform(Mat& m, double bound, Rng& rng) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-bound, bound);
}

void fill_uniform(Vec& v, double bound, Rng& rng) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(-bound, bound);
}

Vec log_softmax(const Vec& z) {
  const double m = z.maxCoeff();
  return (z.array() - m - std::log((z.array() - m).exp().sum())).matrix();
}

}  // namespace

Vec embed_query(const std::string& query, std::size_t d_q, std::uint64_t seed) {
  if (d_q == 0) throw ValidationError("query dimension must be positive");
  Vec v = Vec::Zero(d_q);
  std::string lower = query;
  for (char& c : lower) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  for (const std::string& word : detail::split_whitespace(lower)) {
    const std::uint64_t h = fnv1a64(word) ^ seed;
    char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((h >> (8 * b)) & 0xff);
    const std::uint64_t mixed = fnv1a64(std::string_view(bytes, sizeof bytes));
    v(mixed % d_q) += ((mixed >> 32) & 1) ? 1.0 : -1.0;
  }
  const double n = v.norm();
  if (n > 0.0) v /= n;
  return v;
}

Vec teacher_distribution(const TokenSequence& gold, std::size_t step,
                         double epsilon, std::size_t V) {
  if (step >= gold.size()) throw ValidationError("teacher step out of range");
  if (!(epsilon >= 0.0 && epsilon < 1.0)) {
    throw ValidationError("label smoothing must be in [0, 1)");
  }
  const auto g = static_cast<std::size_t>(gold[step]);
  if (g >= V) throw ValidationError("gold token outside the vocabulary");
  Vec p = Vec::Constant(V, epsilon / static_cast<double>(V));
  p(g) += 1.0 - epsilon;
  return p;
}

void DistillConfig::validate() const {
  if (!(kl_temperature > 0.0)) throw ValidationError("kl_temperature must be positive");
  if (kl_weight < 0.0 || ce_weight < 0.0) {
    throw ValidationError("loss weights must be nonnegative");
  }
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
    throw ValidationError("label smoothing must be in [0, 1)");
  }
  if (batch_size == 0) throw ValidationError("batch size must be positive");
  if (max_output_length < 2) throw ValidationError("max_output_length too small");
}

DistillLoss distill_loss(const Mat& teacher, const Mat& logits,
                         const std::vector<TokenId>& gold,
                         const DistillConfig& config) {
  if (!(config.kl_temperature > 0.0)) {
    throw ValidationError("kl_temperature must be positive");
  }
  if (teacher.rows() != logits.rows() || teacher.cols() != logits.cols() ||
      static_cast<std::size_t>(logits.cols()) != gold.size()) {
    throw ValidationError("teacher, student and gold step counts differ");
  }
  const Eigen::Index L = logits.cols();
  if (L == 0) throw ValidationError("distill_loss needs at least one step");
  const double T = config.kl_temperature;
  DistillLoss out;
  out.grad_logits = Mat::Zero(logits.rows(), L);
  for (Eigen::Index t = 0; t < L; ++t) {
    const Vec p = teacher.col(t);
    if (std::abs(p.sum() - 1.0) > 1e-9 || (p.array() < 0.0).any()) {
      throw ValidationError("teacher distribution at step " + std::to_string(t) +
                            " is not normalized");
    }
    const auto g = gold[static_cast<std::size_t>(t)];
    if (g < 0 || g >= logits.rows()) throw ValidationError("gold token out of range");

    const Vec log_q = log_softmax(logits.col(t) / T);
    double kl = 0.0;
    for (Eigen::Index v = 0; v < p.size(); ++v) {
      if (p(v) > 0.0) kl += p(v) * (std::log(p(v)) - log_q(v));
    }
    const Vec log_s = log_softmax(logits.col(t));
    out.kl += kl * T * T;
    out.ce += -log_s(g);
    // d(T^2 KL)/dz = T (q - p); d CE/dz = softmax(z) - onehot.
    Vec ce_grad = log_s.array().exp().matrix();
    ce_grad(g) -= 1.0;
    out.grad_logits.col(t) = config.kl_weight * T * (log_q.array().exp().matrix() - p) +
                             config.ce_weight * ce_grad;
  }
  const double inv_l = 1.0 / static_cast<double>(L);
  out.kl *= inv_l;
  out.ce *= inv_l;
  out.grad_logits *= inv_l;
  out.loss = config.kl_weight * out.kl + config.ce_weight * out.ce;
  return out;
}

RetrieverModel RetrieverModel::zeros(std::size_t V, std::size_t d_q,
                                     std::size_t d_s, std::size_t d_m) {
  if (V == 0 || d_q == 0 || d_s == 0 || d_m == 0) {
    throw ValidationError("retriever dimensions must be positive");
  }
  RetrieverModel m;
  m.embedding = Mat::Zero(d_m, V);
  m.w_cond = Mat::Zero(d_m, d_q + d_s);
  m.b_cond = Vec::Zero(d_m);
  m.w_input = Mat::Zero(3 * d_m, 2 * d_m);
  m.b_input = Vec::Zero(3 * d_m);
  m.w_hidden = Mat::Zero(3 * d_m, d_m);
  m.b_hidden = Vec::Zero(3 * d_m);
  m.w_out = Mat::Zero(V, d_m);
  m.b_out = Vec::Zero(V);
  return m;
}

RetrieverModel RetrieverModel::init(std::size_t V, std::size_t d_q,
                                    std::size_t d_s, std::size_t d_m,
                                    std::uint64_t seed) {
  RetrieverModel m = zeros(V, d_q, d_s, d_m);
  Rng rng(seed);
  for (Eigen::Index r = 0; r < m.embedding.rows(); ++r)
    for (Eigen::Index c = 0; c < m.embedding.cols(); ++c) m.embedding(r, c) = rng.normal();
  const double cond_bound = 1.0 / std::sqrt(static_cast<double>(d_q + d_s));
  fill_uniform(m.w_cond, cond_bound, rng);
  fill_uniform(m.b_cond, cond_bound, rng);
  const double rec_bound = 1.0 / std::sqrt(static_cast<double>(d_m));
  fill_uniform(m.w_input, rec_bound, rng);
  fill_uniform(m.b_input, rec_bound, rng);
  fill_uniform(m.w_hidden, rec_bound, rng);
  fill_uniform(m.b_hidden, rec_bound, rng);
  fill_uniform(m.w_out, rec_bound, rng);
  fill_uniform(m.b_out, rec_bound, rng);
  return m;
}

std::vector<std::pair<std::string, Mat*>> RetrieverModel::matrices() {
  return {{"embedding", &embedding}, {"w_cond", &w_cond}, {"w_input", &w_input},
          {"w_hidden", &w_hidden}, {"w_out", &w_out}};
}

std::vector<std::pair<std::string, Vec*>> RetrieverModel::vectors() {
  return {{"b_cond", &b_cond}, {"b_input", &b_input}, {"b_hidden", &b_hidden},
          {"b_out", &b_out}};
}

std::vector<std::pair<std::string, const Mat*>> RetrieverModel::matrices() const {
  return {{"embedding", &embedding}, {"w_cond", &w_cond}, {"w_input", &w_input},
          {"w_hidden", &w_hidden}, {"w_out", &w_out}};
}

std::vector<std::pair<std::string, const Vec*>> RetrieverModel::vectors() const {
  return {{"b_cond", &b_cond}, {"b_input", &b_input}, {"b_hidden", &b_hidden},
          {"b_out", &b_out}};
}

bool RetrieverModel::operator==(const RetrieverModel& o) const {
  const auto a = matrices();
  const auto b = o.matrices();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].second->rows() != b[i].second->rows() ||
        a[i].second->cols() != b[i].second->cols() || *a[i].second != *b[i].second) {
      return false;
    }
  }
  const auto va = vectors();
  const auto vb = o.vectors();
  for (std::size_t i = 0; i < va.size(); ++i) {
    if (va[i].second->size() != vb[i].second->size() || *va[i].second != *vb[i].second) {
      return false;
    }
  }
  return true;
}

std::size_t RetrieverModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, m] : matrices()) n += static_cast<std::size_t>(m->size());
  for (const auto& [name, v] : vectors()) n += static_cast<std::size_t>(v->size());
  return n;
}

void RetrieverModel::check_shapes() const {
  const Eigen::Index dm = embedding.rows();
  const Eigen::Index V = embedding.cols();
  const bool ok = dm > 0 && V > 0 && w_cond.rows() == dm && b_cond.size() == dm &&
                  w_input.rows() == 3 * dm && w_input.cols() == 2 * dm &&
                  b_input.size() == 3 * dm && w_hidden.rows() == 3 * dm &&
                  w_hidden.cols() == dm && b_hidden.size() == 3 * dm &&
                  w_out.rows() == V && w_out.cols() == dm && b_out.size() == V;
  if (!ok) throw ValidationError("retriever parameter shapes are inconsistent");
}

Vec standardize_memory(const Vec& h) {
  if (h.size() == 0) return h;
  const Vec centered = h.array() - h.mean();
  const double variance = centered.squaredNorm() / static_cast<double>(h.size());
  return centered / std::sqrt(variance + 1e-5);
}

StudentState student_start(const RetrieverModel& model, const Vec& q, const Vec& h) {
  model.check_shapes();
  if (static_cast<std::size_t>(q.size() + h.size()) != model.cond_dim()) {
    throw ValidationError("conditioning inputs do not match the retriever");
  }
  Vec x(q.size() + h.size());
  x << q, standardize_memory(h);
  StudentState s;
  s.cond = (model.w_cond * x + model.b_cond).array().tanh();
  s.hidden = s.cond;
  return s;
}

Vec student_advance(const RetrieverModel& model, StudentState& state, TokenId token) {
  if (token < 0 || static_cast<std::size_t>(token) >= model.vocab_size()) {
    throw ValidationError("token id " + std::to_string(token) + " out of range");
  }
  const Eigen::Index dm = model.embedding.rows();
  Vec x(2 * dm);
  x << model.embedding.col(token), state.cond;
  const Vec gi = model.w_input * x + model.b_input;
  const Vec gh = model.w_hidden * state.hidden + model.b_hidden;
  const Vec r = sigmoid(gi.head(dm) + gh.head(dm));
  const Vec z = sigmoid(gi.segment(dm, dm) + gh.segment(dm, dm));
  const Vec n = (gi.tail(dm).array() + r.array() * gh.tail(dm).array()).tanh();
  state.hidden = ((1.0 - z.array()) * n.array() + z.array() * state.hidden.array()).matrix();
  return model.w_out * state.hidden + model.b_out;
}

StudentStep student_step(const RetrieverModel& model, const TokenSequence& prefix,
                         const Vec& q, const Vec& h) {
  if (prefix.empty() || prefix.front() != tokens::bos) {
    throw ValidationError("prefix must begin with BOS");
  }
  StudentState s = student_start(model, q, h);
  Vec logits;
  for (TokenId t : prefix) logits = student_advance(model, s, t);
  return {logits, s.hidden};
}

double sequence_batch_loss(const RetrieverModel& model,
                           const std::vector<const TokenSequence*>& sequences,
                           const Mat& queries, const Mat& memories,
                           const DistillConfig& config, RetrieverGradients* grads) {
  model.check_shapes();
  const auto B = static_cast<Eigen::Index>(sequences.size());
  if (B == 0 || queries.cols() != B || memories.cols() != B) {
    throw ValidationError("batch inputs disagree in size");
  }
  const Eigen::Index dm = model.embedding.rows();
  const auto V = static_cast<Eigen::Index>(model.vocab_size());
  const double T = config.kl_temperature;
  const double eps = config.label_smoothing;

  std::size_t steps = 0;
  for (const TokenSequence* s : sequences) {
    if (s->size() < 2) throw ValidationError("sequence too short to train on");
    steps = std::max(steps, s->size() - 1);
  }

  Mat cond_in(queries.rows() + memories.rows(), B);
  cond_in.topRows(queries.rows()) = queries;
  for (Eigen::Index b = 0; b < B; ++b) {
    cond_in.col(b).tail(memories.rows()) = standardize_memory(memories.col(b));
  }
  const Mat cond = ((model.w_cond * cond_in).colwise() + model.b_cond).array().tanh();

  std::vector<Mat> xs(steps), states(steps + 1), rs(steps), zs(steps), ns(steps), ghn(steps);
  std::vector<Mat> dlogits(steps);
  states[0] = cond;
  double total = 0.0;

  for (std::size_t k = 0; k < steps; ++k) {
    Mat x(2 * dm, B);
    for (Eigen::Index b = 0; b < B; ++b) {
      const TokenSequence& s = *sequences[static_cast<std::size_t>(b)];
      const TokenId tok = k < s.size() ? s[k] : tokens::eos;
      x.col(b).head(dm) = model.embedding.col(tok);
    }
    x.bottomRows(dm) = cond;
    const Mat gi = (model.w_input * x).colwise() + model.b_input;
    const Mat gh = (model.w_hidden * states[k]).colwise() + model.b_hidden;
    rs[k] = sigmoid(gi.topRows(dm) + gh.topRows(dm));
    zs[k] = sigmoid(gi.middleRows(dm, dm) + gh.middleRows(dm, dm));
    ghn[k] = gh.bottomRows(dm);
    ns[k] = (gi.bottomRows(dm).array() + rs[k].array() * ghn[k].array()).tanh();
    states[k + 1] = ((1.0 - zs[k].array()) * ns[k].array() +
                     zs[k].array() * states[k].array()).matrix();
    xs[k] = std::move(x);

    const Mat logits = (model.w_out * states[k + 1]).colwise() + model.b_out;
    dlogits[k] = Mat::Zero(V, B);
    for (Eigen::Index b = 0; b < B; ++b) {
      const TokenSequence& s = *sequences[static_cast<std::size_t>(b)];
      if (k + 1 >= s.size()) continue;
      const double inv_l = 1.0 / static_cast<double>(s.size() - 1);
      const TokenId g = s[k + 1];
      const Vec z = logits.col(b);
      const Vec log_q = log_softmax(z / T);
      const Vec log_s = log_softmax(z);
      // Label-smoothed teacher: p = eps/V everywhere plus (1 - eps) on g.
      const double base = eps / static_cast<double>(V);
      const double pg = base + (1.0 - eps);
      double entropy_term = pg * std::log(pg);
      if (base > 0.0) entropy_term += static_cast<double>(V - 1) * base * std::log(base);
      const double cross = base * log_q.sum() + (1.0 - eps) * log_q(g);
      const double kl = entropy_term - cross;
      total += inv_l * (config.kl_weight * kl * T * T - config.ce_weight * log_s(g));
      Vec grad = config.kl_weight * T * (log_q.array().exp() - base).matrix();
      grad(g) -= config.kl_weight * T * (1.0 - eps);
      Vec sm = log_s.array().exp();
      sm(g) -= 1.0;
      grad += config.ce_weight * sm;
      dlogits[k].col(b) = grad * (inv_l / static_cast<double>(B));
    }
  }
  total /= static_cast<double>(B);
  if (grads == nullptr) return total;

  Mat d_emb = Mat::Zero(dm, V), d_wc = Mat::Zero(model.w_cond.rows(), model.w_cond.cols());
  Mat d_wi = Mat::Zero(3 * dm, 2 * dm), d_wh = Mat::Zero(3 * dm, dm), d_wo = Mat::Zero(V, dm);
  Vec d_bc = Vec::Zero(dm), d_bi = Vec::Zero(3 * dm), d_bh = Vec::Zero(3 * dm), d_bo = Vec::Zero(V);
  Mat d_cond = Mat::Zero(dm, B);
  Mat d_state = Mat::Zero(dm, B);
  Mat d_gi(3 * dm, B), d_gh(3 * dm, B);

  for (std::size_t kk = steps; kk-- > 0;) {
    d_wo.noalias() += dlogits[kk] * states[kk + 1].transpose();
    d_bo += dlogits[kk].rowwise().sum();
    d_state.noalias() += model.w_out.transpose() * dlogits[kk];

    const Mat& r = rs[kk];
    const Mat& z = zs[kk];
    const Mat& n = ns[kk];
    const Mat dn = (d_state.array() * (1.0 - z.array())).matrix();
    const Mat dz = (d_state.array() * (states[kk].array() - n.array())).matrix();
    Mat d_prev = (d_state.array() * z.array()).matrix();
    const Mat da_n = (dn.array() * (1.0 - n.array().square())).matrix();
    const Mat dr = (da_n.array() * ghn[kk].array()).matrix();
    const Mat da_r = (dr.array() * r.array() * (1.0 - r.array())).matrix();
    const Mat da_z = (dz.array() * z.array() * (1.0 - z.array())).matrix();
    d_gi << da_r, da_z, da_n;
    d_gh << da_r, da_z, (da_n.array() * r.array()).matrix();

    d_wi.noalias() += d_gi * xs[kk].transpose();
    d_bi += d_gi.rowwise().sum();
    d_wh.noalias() += d_gh * states[kk].transpose();
    d_bh += d_gh.rowwise().sum();
    d_prev.noalias() += model.w_hidden.transpose() * d_gh;
    const Mat dx = model.w_input.transpose() * d_gi;
    d_cond += dx.bottomRows(dm);
    for (Eigen::Index b = 0; b < B; ++b) {
      const TokenSequence& s = *sequences[static_cast<std::size_t>(b)];
      const TokenId tok = kk < s.size() ? s[kk] : tokens::eos;
      d_emb.col(tok) += dx.col(b).head(dm);
    }
    d_state = std::move(d_prev);
  }
  d_cond += d_state;
  const Mat da_c = (d_cond.array() * (1.0 - cond.array().square())).matrix();
  d_wc.noalias() += da_c * cond_in.transpose();
  d_bc += da_c.rowwise().sum();

  grads->matrices = {d_emb, d_wc, d_wi, d_wh, d_wo};
  grads->vectors = {d_bc, d_bi, d_bh, d_bo};
  return total;
}

RetrieverModel train_retriever(const RetrieverModel& init,
                               const std::vector<RetrieverExample>& corpus,
                               const Vocabulary& vocab, const DistillConfig& config,
                               RetrieverTrainReport* report) {
  const auto start = std::chrono::steady_clock::now();
  config.validate();
  init.check_shapes();
  if (corpus.empty()) throw ValidationError("empty training corpus");
  if (init.vocab_size() != vocab.size()) {
    throw ValidationError("retriever vocabulary size does not match vocabulary");
  }
  std::vector<TokenSequence> sequences;
  sequences.reserve(corpus.size());
  for (const RetrieverExample& ex : corpus) {
    const VerificationReport v = verify_subset(EvidenceSubgraph{ex.gold, 1.0}, ex.full_graph);
    if (!v.accepted()) {
      const Violation& first = v.violations.front();
      throw ValidationError("instance " + ex.id + ": " +
                            std::string(to_string(first.kind)) + " " + first.element);
    }
    sequences.push_back(linearize(ex.gold, vocab));
    if (sequences.back().size() > config.max_output_length) {
      throw ValidationError("instance " + ex.id + ": gold sequence exceeds max_output_length");
    }
  }

  RetrieverModel model = init;
  Rng rng(config.seed);
  AdamW opt(config.weight_decay);
  const std::size_t n = corpus.size();
  const std::size_t per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = per_epoch * config.epochs;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::size_t step = 0;
  RetrieverGradients grads;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t b0 = 0; b0 < n; b0 += config.batch_size) {
      const std::size_t b1 = std::min(n, b0 + config.batch_size);
      const auto bs = static_cast<Eigen::Index>(b1 - b0);
      std::vector<const TokenSequence*> batch;
      Mat q(corpus[order[b0]].query.size(), bs), h(corpus[order[b0]].memory.size(), bs);
      for (std::size_t k = b0; k < b1; ++k) {
        const RetrieverExample& ex = corpus[order[k]];
        batch.push_back(&sequences[order[k]]);
        q.col(static_cast<Eigen::Index>(k - b0)) = ex.query;
        h.col(static_cast<Eigen::Index>(k - b0)) = ex.memory;
      }
      const double loss = sequence_batch_loss(model, batch, q, h, config, &grads);
      epoch_loss += loss * static_cast<double>(bs);
      std::vector<ParamRef> refs;
      const auto mats = model.matrices();
      const auto vecs = model.vectors();
      for (std::size_t i = 0; i < mats.size(); ++i) {
        refs.push_back({mats[i].second->data(), grads.matrices[i].data(),
                        static_cast<std::size_t>(grads.matrices[i].size())});
      }
      for (std::size_t i = 0; i < vecs.size(); ++i) {
        refs.push_back({vecs[i].second->data(), grads.vectors[i].data(),
                        static_cast<std::size_t>(grads.vectors[i].size())});
      }
      opt.step(refs, cosine_lr(config.learning_rate, step, total_steps, config.warmup_ratio));
      ++step;
    }
    if (report) report->epoch_losses.push_back(epoch_loss / static_cast<double>(n));
  }
  if (report) {
    report->seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return model;
}

}  // namespace memadapter
