#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "radm/tensor.hpp"

namespace radm {

struct AdamWConfig {
  double lr = 2.5e-5;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with decoupled weight decay. Parameters rejected by `active` are left untouched
/// (no decay, no moment update).
template <class S>
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  void step(const std::vector<Param<S>*>& params, const std::function<bool(const Param<S>&)>& active = {}) {
    if (m_.size() != params.size()) {
      m_.clear();
      v_.clear();
      for (auto* p : params) {
        m_.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    const S lr = static_cast<S>(cfg_.lr);
    for (std::size_t i = 0; i < params.size(); ++i) {
      Param<S>& p = *params[i];
      if (active && !active(p)) continue;
      m_[i] = static_cast<S>(cfg_.beta1) * m_[i] + static_cast<S>(1 - cfg_.beta1) * p.grad;
      v_[i] = static_cast<S>(cfg_.beta2) * v_[i] + static_cast<S>(1 - cfg_.beta2) * p.grad.cwiseAbs2();
      p.value *= static_cast<S>(1.0 - cfg_.lr * cfg_.weight_decay);
      const auto mhat = m_[i].array() / static_cast<S>(bc1);
      const auto denom = (v_[i].array() / static_cast<S>(bc2)).sqrt() + static_cast<S>(cfg_.eps);
      p.value.array() -= lr * mhat / denom;
    }
  }

  long long steps() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  long long t_ = 0;
  std::vector<Mat<S>> m_, v_;
};

}  // namespace radm
