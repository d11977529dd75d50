#include "memadapter/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace memadapter {

void AdamW::step(const std::vector<ParamRef>& params, double lr) {
  if (m_.empty()) {
    for (const ParamRef& p : params) {
      m_.emplace_back(p.size, 0.0);
      v_.emplace_back(p.size, 0.0);
    }
  }
  if (m_.size() != params.size()) {
    throw std::logic_error("AdamW: parameter layout changed between steps");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t b = 0; b < params.size(); ++b) {
    const ParamRef& p = params[b];
    if (m_[b].size() != p.size) {
      throw std::logic_error("AdamW: parameter layout changed between steps");
    }
    double* m = m_[b].data();
    double* v = v_[b].data();
    for (std::size_t i = 0; i < p.size; ++i) {
      const double g = p.grad[i];
      p.value[i] -= lr * weight_decay_ * p.value[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      p.value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

double cosine_lr(double base_lr, std::size_t step, std::size_t total,
                 double warmup_ratio) {
  const auto warmup = static_cast<std::size_t>(warmup_ratio * static_cast<double>(total));
  if (step < warmup) {
    return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
  }
  if (total <= warmup) return base_lr;
  const double progress = static_cast<double>(step - warmup) /
                          static_cast<double>(total - warmup);
  return base_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

}  // namespace memadapter
