#include "memadapter/unified_space.hpp"

#include <cmath>
#include <cstring>

#include "memadapter/error.hpp"
#include "memadapter/rng.hpp"

namespace memadapter {

namespace {

Mat activate(const Mat& z, Activation a) {
  return a == Activation::tanh ? Mat(z.array().tanh()) : z;
}

Mat activate_derivative(const Mat& activated, Activation a) {
  if (a == Activation::identity) return Mat::Ones(activated.rows(), activated.cols());
  return (1.0 - activated.array().square()).matrix();
}

void append_bytes(std::string& out, const double* data, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, &data[i], sizeof bits);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
  }
}

}  // namespace

const Paradigm& ParadigmRegistry::register_paradigm(const std::string& name,
                                                    std::size_t d_t,
                                                    std::uint64_t encoder_seed) {
  if (name.empty()) throw ValidationError("paradigm name must be nonempty");
  if (d_t == 0) throw ValidationError("paradigm " + name + ": zero dimension");
  if (paradigms_.count(name) != 0) {
    throw ValidationError("paradigm " + name + " already registered");
  }
  Rng rng(encoder_seed);
  Mat projection(d_t, d_c_);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_c_));
  // Row-major fill so the map does not depend on Eigen's storage order.
  for (std::size_t r = 0; r < d_t; ++r) {
    for (std::size_t c = 0; c < d_c_; ++c) projection(r, c) = rng.normal() * scale;
  }
  return paradigms_.emplace(name, Paradigm{name, d_t, encoder_seed, projection})
      .first->second;
}

bool ParadigmRegistry::contains(const std::string& name) const {
  return paradigms_.count(name) != 0;
}

const Paradigm& ParadigmRegistry::get(const std::string& name) const {
  const auto it = paradigms_.find(name);
  if (it == paradigms_.end()) {
    throw ValidationError("paradigm " + name + " is not registered");
  }
  return it->second;
}

std::vector<std::string> ParadigmRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, p] : paradigms_) out.push_back(name);
  return out;
}

std::pair<std::size_t, std::size_t> segment_bounds(std::size_t d_c,
                                                   std::size_t count,
                                                   std::size_t s) {
  return {s * d_c / count, (s + 1) * d_c / count};
}

MemoryState ParadigmRegistry::encode_state(
    const std::string& paradigm, const Vec& content, std::size_t segment_count,
    const std::optional<std::vector<std::size_t>>& segment_mask) const {
  const Paradigm& p = get(paradigm);
  if (static_cast<std::size_t>(content.size()) != d_c_) {
    throw ValidationError("content vector has dimension " +
                          std::to_string(content.size()) + ", expected " +
                          std::to_string(d_c_));
  }
  if (!content.allFinite()) throw ValidationError("content vector is not finite");
  Vec visible = content;
  if (segment_mask) {
    if (segment_count == 0 || segment_count > d_c_) {
      throw ValidationError("segment count out of range");
    }
    std::vector<bool> keep(segment_count, false);
    for (std::size_t s : *segment_mask) {
      if (s >= segment_count) {
        throw ValidationError("segment index " + std::to_string(s) +
                              " out of range");
      }
      keep[s] = true;
    }
    for (std::size_t s = 0; s < segment_count; ++s) {
      if (keep[s]) continue;
      const auto [begin, end] = segment_bounds(d_c_, segment_count, s);
      visible.segment(begin, end - begin).setZero();
    }
  }
  return MemoryState{paradigm, (p.projection * visible).array().tanh()};
}

AlignmentModule AlignmentModule::init(std::size_t d_in, std::size_t d_hidden,
                                      std::size_t d_out, std::uint64_t seed) {
  if (d_in == 0 || d_hidden == 0 || d_out == 0) {
    throw ValidationError("alignment module dimensions must be positive");
  }
  Rng rng(seed);
  AlignmentModule m;
  const double a1 = 1.0 / std::sqrt(static_cast<double>(d_in));
  const double a2 = 1.0 / std::sqrt(static_cast<double>(d_hidden));
  m.w1.resize(d_hidden, d_in);
  for (std::size_t r = 0; r < d_hidden; ++r)
    for (std::size_t c = 0; c < d_in; ++c) m.w1(r, c) = rng.uniform(-a1, a1);
  m.w2.resize(d_out, d_hidden);
  for (std::size_t r = 0; r < d_out; ++r)
    for (std::size_t c = 0; c < d_hidden; ++c) m.w2(r, c) = rng.uniform(-a2, a2);
  m.b1 = Vec::Zero(d_hidden);
  m.b2 = Vec::Zero(d_out);
  return m;
}

void AlignmentModule::check_shapes() const {
  if (b1.size() != w1.rows() || w2.cols() != w1.rows() || b2.size() != w2.rows()) {
    throw ValidationError("alignment module shapes are inconsistent");
  }
}

bool AlignmentModule::operator==(const AlignmentModule& o) const {
  return activation == o.activation && w1.rows() == o.w1.rows() &&
         w1.cols() == o.w1.cols() && w2.rows() == o.w2.rows() && w1 == o.w1 &&
         b1 == o.b1 && w2 == o.w2 && b2 == o.b2;
}

Mat align_forward_batch(const AlignmentModule& module, const Mat& raw) {
  module.check_shapes();
  if (raw.rows() != module.w1.cols()) {
    throw ValidationError("state dimension " + std::to_string(raw.rows()) +
                          " does not match module input " +
                          std::to_string(module.w1.cols()));
  }
  const Mat hidden =
      activate((module.w1 * raw).colwise() + module.b1, module.activation);
  return (module.w2 * hidden).colwise() + module.b2;
}

Vec align_forward(const AlignmentModule& module, const Vec& raw) {
  return align_forward_batch(module, raw);
}

Vec align_forward(const AlignmentModule& module, const MemoryState& state) {
  return align_forward(module, state.raw);
}

AlignGradients align_gradients_batch(const AlignmentModule& module,
                                     const Mat& raw, const Mat& upstream) {
  module.check_shapes();
  if (raw.rows() != module.w1.cols() || upstream.rows() != module.w2.rows() ||
      raw.cols() != upstream.cols()) {
    throw ValidationError("alignment gradient dimension mismatch");
  }
  const Mat hidden =
      activate((module.w1 * raw).colwise() + module.b1, module.activation);
  AlignGradients g;
  g.w2 = upstream * hidden.transpose();
  g.b2 = upstream.rowwise().sum();
  const Mat dz = ((module.w2.transpose() * upstream).array() *
                  activate_derivative(hidden, module.activation).array())
                     .matrix();
  g.w1 = dz * raw.transpose();
  g.b1 = dz.rowwise().sum();
  return g;
}

AlignGradients align_gradients(const AlignmentModule& module, const Vec& raw,
                               const Vec& upstream) {
  return align_gradients_batch(module, raw, upstream);
}

std::string parameter_digest(const AlignmentModule& module) {
  std::string out;
  for (const Mat* m : {&module.w1, &module.w2}) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = *m;
    append_bytes(out, rm.data(), rm.size());
  }
  append_bytes(out, module.b1.data(), module.b1.size());
  append_bytes(out, module.b2.data(), module.b2.size());
  return out;
}

}  // namespace memadapter
