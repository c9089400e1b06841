#pragma once

#include "llara/core/nn.hpp"

#include <cmath>
#include <vector>

namespace llara::optim {

/// Adaptive-moment optimizer. `weight_decay` is applied either as an L2 term
/// added to the gradient (coupled) or directly to the weights (decoupled).
struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  bool decoupled = false;
};

template <class S>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<nn::NamedParam<S>> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (auto& p : params_) {
      m_.push_back(Matrix<S>::Zero(p.param->rows(), p.param->cols()));
      v_.push_back(Matrix<S>::Zero(p.param->rows(), p.param->cols()));
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.param->zero_grad();
  }

  /// One update with learning rate `lr` (overrides the configured rate).
  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Parameter<S>& p = *params_[i].param;
      if (!p.trainable) continue;
      if (p.grad.size() != p.value.size()) p.zero_grad();
      Matrix<S> g = p.grad;
      if (cfg_.weight_decay > 0 && !cfg_.decoupled) g += static_cast<S>(cfg_.weight_decay) * p.value;
      m_[i] = b1 * m_[i] + (S(1) - b1) * g;
      v_[i] = b2 * v_[i] + (S(1) - b2) * g.cwiseProduct(g);
      const S step = static_cast<S>(lr / bc1);
      const S denom_scale = static_cast<S>(1.0 / std::sqrt(bc2));
      if (cfg_.weight_decay > 0 && cfg_.decoupled) p.value *= static_cast<S>(1.0 - lr * cfg_.weight_decay);
      p.value.array() -= step * m_[i].array() / ((v_[i].array().sqrt() * denom_scale) + static_cast<S>(cfg_.eps));
    }
  }

  void step() { step(cfg_.lr); }

  long long steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  std::vector<nn::NamedParam<S>>& params() { return params_; }

  // Moment access for checkpointing.
  std::vector<Matrix<S>>& first_moments() { return m_; }
  std::vector<Matrix<S>>& second_moments() { return v_; }
  void set_steps(long long t) { t_ = t; }

 private:
  std::vector<nn::NamedParam<S>> params_;
  AdamConfig cfg_;
  std::vector<Matrix<S>> m_, v_;
  long long t_ = 0;
};

}  // namespace llara::optim
