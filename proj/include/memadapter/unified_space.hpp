#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace memadapter {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline const std::vector<std::string>& default_paradigm_names() {
  static const std::vector<std::string> names = {
      "anchor-graph", "explicit-sim", "parametric-sim", "latent-sim"};
  return names;
}

struct Paradigm {
  std::string name;
  std::size_t d_t = 0;
  std::uint64_t seed = 0;
  Mat projection;  // d_t x d_c, N(0,1)/sqrt(d_c)
};

struct MemoryState {
  std::string paradigm;
  Vec raw;
};

// Synthetic paradigm encoders: raw = tanh(E * masked content).
class ParadigmRegistry {
 public:
  explicit ParadigmRegistry(std::size_t d_c) : d_c_(d_c) {}

  const Paradigm& register_paradigm(const std::string& name, std::size_t d_t,
                                    std::uint64_t encoder_seed);
  bool contains(const std::string& name) const;
  const Paradigm& get(const std::string& name) const;
  std::vector<std::string> names() const;
  std::size_t d_c() const { return d_c_; }

  // `segment_mask` lists the visible segments; the content vector is split
  // into `segment_count` contiguous blocks and hidden blocks are zeroed.
  MemoryState encode_state(const std::string& paradigm, const Vec& content,
                           std::size_t segment_count,
                           const std::optional<std::vector<std::size_t>>&
                               segment_mask = std::nullopt) const;

 private:
  std::size_t d_c_;
  std::map<std::string, Paradigm> paradigms_;
};

// [begin, end) of segment `s` among `count` blocks over `d_c` coordinates.
std::pair<std::size_t, std::size_t> segment_bounds(std::size_t d_c,
                                                   std::size_t count,
                                                   std::size_t s);

enum class Activation { tanh, identity };

struct AlignmentModule {
  Mat w1;  // D_h x d_in
  Vec b1;
  Mat w2;  // D_s x D_h
  Vec b2;
  Activation activation = Activation::tanh;

  // Weights uniform in +-1/sqrt(fan_in), biases zero.
  static AlignmentModule init(std::size_t d_in, std::size_t d_hidden,
                              std::size_t d_out, std::uint64_t seed);

  std::size_t input_dim() const { return static_cast<std::size_t>(w1.cols()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(w2.rows()); }
  std::size_t parameter_count() const {
    return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size());
  }
  void check_shapes() const;
  bool operator==(const AlignmentModule& o) const;
};

struct AlignGradients {
  Mat w1;
  Vec b1;
  Mat w2;
  Vec b2;
};

Vec align_forward(const AlignmentModule& module, const Vec& raw);
Vec align_forward(const AlignmentModule& module, const MemoryState& state);
// Columns of `raw` are states; returns D_s x batch.
Mat align_forward_batch(const AlignmentModule& module, const Mat& raw);

AlignGradients align_gradients(const AlignmentModule& module, const Vec& raw,
                               const Vec& upstream);
// Sum over columns of the per-column gradients.
AlignGradients align_gradients_batch(const AlignmentModule& module,
                                     const Mat& raw, const Mat& upstream);

// Flat little-endian float64 bytes of all parameters, for frozen checks.
std::string parameter_digest(const AlignmentModule& module);

}  // namespace memadapter
