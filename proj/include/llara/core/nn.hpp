#pragma once

#include "llara/core/ops.hpp"

#include <random>
#include <string>
#include <utility>
#include <vector>

namespace llara::nn {

/// Named view of a model parameter, used by optimizers and checkpoints.
template <class S>
struct NamedParam {
  std::string name;
  Parameter<S>* param;
};

template <class S>
Matrix<S> normal_init(Index rows, Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix<S> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(dist(rng));
  return m;
}

template <class S>
Matrix<S> uniform_init(Index rows, Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix<S> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(dist(rng));
  return m;
}

/// Affine map x * W + b with W (in x out).
template <class S>
struct Linear {
  Parameter<S> weight;
  Parameter<S> bias;

  Linear() = default;
  Linear(Index in, Index out, std::mt19937_64& rng, double stddev = -1.0) {
    const double sd = stddev > 0 ? stddev : 1.0 / std::sqrt(static_cast<double>(in));
    weight = Parameter<S>(normal_init<S>(in, out, sd, rng));
    bias = Parameter<S>(Matrix<S>::Zero(1, out));
  }

  Index in_features() const { return weight.rows(); }
  Index out_features() const { return weight.cols(); }

  ad::Var<S> operator()(const ad::Var<S>& x) {
    return ad::add_bias(ad::matmul(x, ad::leaf(weight)), ad::leaf(bias));
  }

  void collect(const std::string& prefix, std::vector<NamedParam<S>>& out) {
    out.push_back({prefix + ".weight", &weight});
    out.push_back({prefix + ".bias", &bias});
  }
};

template <class S>
struct LayerNorm {
  Parameter<S> gain;
  Parameter<S> bias;

  LayerNorm() = default;
  explicit LayerNorm(Index dim) : gain(Matrix<S>::Ones(1, dim)), bias(Matrix<S>::Zero(1, dim)) {}

  ad::Var<S> operator()(const ad::Var<S>& x) { return ad::layer_norm(x, ad::leaf(gain), ad::leaf(bias)); }

  void collect(const std::string& prefix, std::vector<NamedParam<S>>& out) {
    out.push_back({prefix + ".gain", &gain});
    out.push_back({prefix + ".bias", &bias});
  }
};

template <class S>
void set_trainable(std::vector<NamedParam<S>>& params, bool trainable) {
  for (auto& p : params) p.param->trainable = trainable;
}

template <class S>
void zero_grad(std::vector<NamedParam<S>>& params) {
  for (auto& p : params) p.param->zero_grad();
}

template <class S>
bool all_finite(const std::vector<NamedParam<S>>& params) {
  for (const auto& p : params)
    if (!p.param->value.allFinite()) return false;
  return true;
}

}  // namespace llara::nn
