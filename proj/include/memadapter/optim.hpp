#pragma once

#include <cstddef>
#include <vector>

namespace memadapter {

struct ParamRef {
  double* value;
  const double* grad;
  std::size_t size;
};

// Decoupled weight decay Adam, bias-corrected, applied to every block.
class AdamW {
 public:
  AdamW(double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8)
      : weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<ParamRef>& params, double lr);
  std::size_t steps_taken() const { return t_; }

 private:
  double weight_decay_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Linear warmup over floor(warmup_ratio * total) steps, then cosine decay
// to zero at `total`.
double cosine_lr(double base_lr, std::size_t step, std::size_t total,
                 double warmup_ratio);

}  // namespace memadapter
