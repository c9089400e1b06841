#pragma once

// Differentiable operations on `ad::Var`. Shapes follow the row convention:
// activations are (rows x features) and a linear map is X * W with W (in x out).

#include "llara/core/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

namespace llara::ad {

namespace detail {
inline std::string dims(Index r, Index c) { return std::to_string(r) + "x" + std::to_string(c); }
}  // namespace detail

template <class S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  require_shape(a.cols() == b.rows(),
                "matmul: " + detail::dims(a.rows(), a.cols()) + " * " + detail::dims(b.rows(), b.cols()));
  Matrix<S> out = a.value() * b.value();
  return make_op<S>(std::move(out), {a, b}, [](Node<S>& n) {
    const auto& g = n.grad();
    if (n.wants(0)) n.parent(0).grad().noalias() += g * n.parent(1).value().transpose();
    if (n.wants(1)) n.parent(1).grad().noalias() += n.parent(0).value().transpose() * g;
  });
}

/// a * b^T
template <class S>
Var<S> matmul_nt(const Var<S>& a, const Var<S>& b) {
  require_shape(a.cols() == b.cols(),
                "matmul_nt: " + detail::dims(a.rows(), a.cols()) + " * T" + detail::dims(b.rows(), b.cols()));
  Matrix<S> out = a.value() * b.value().transpose();
  return make_op<S>(std::move(out), {a, b}, [](Node<S>& n) {
    const auto& g = n.grad();
    if (n.wants(0)) n.parent(0).grad().noalias() += g * n.parent(1).value();
    if (n.wants(1)) n.parent(1).grad().noalias() += g.transpose() * n.parent(0).value();
  });
}

template <class S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  Matrix<S> out = a.value() + b.value();
  return make_op<S>(std::move(out), {a, b}, [](Node<S>& n) {
    if (n.wants(0)) n.parent(0).grad() += n.grad();
    if (n.wants(1)) n.parent(1).grad() += n.grad();
  });
}

template <class S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  Matrix<S> out = a.value() - b.value();
  return make_op<S>(std::move(out), {a, b}, [](Node<S>& n) {
    if (n.wants(0)) n.parent(0).grad() += n.grad();
    if (n.wants(1)) n.parent(1).grad() -= n.grad();
  });
}

/// Elementwise product.
template <class S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  Matrix<S> out = a.value().cwiseProduct(b.value());
  return make_op<S>(std::move(out), {a, b}, [](Node<S>& n) {
    if (n.wants(0)) n.parent(0).grad() += n.grad().cwiseProduct(n.parent(1).value());
    if (n.wants(1)) n.parent(1).grad() += n.grad().cwiseProduct(n.parent(0).value());
  });
}

/// alpha * a + beta
template <class S>
Var<S> affine(const Var<S>& a, S alpha, S beta = S(0)) {
  Matrix<S> out = (a.value().array() * alpha + beta).matrix();
  return make_op<S>(std::move(out), {a}, [alpha](Node<S>& n) { n.parent(0).grad() += alpha * n.grad(); });
}

template <class S>
Var<S> scale(const Var<S>& a, S alpha) {
  return affine(a, alpha, S(0));
}

/// a + bias broadcast over rows; bias is 1 x cols.
template <class S>
Var<S> add_bias(const Var<S>& a, const Var<S>& bias) {
  require_shape(bias.rows() == 1 && bias.cols() == a.cols(), "add_bias: bias must be 1x" + std::to_string(a.cols()));
  Matrix<S> out = a.value().rowwise() + bias.value().row(0);
  return make_op<S>(std::move(out), {a, bias}, [](Node<S>& n) {
    if (n.wants(0)) n.parent(0).grad() += n.grad();
    if (n.wants(1)) n.parent(1).grad() += n.grad().colwise().sum();
  });
}

template <class S>
Var<S> tanh(const Var<S>& a) {
  Matrix<S> out = a.value().array().tanh().matrix();
  return make_op<S>(std::move(out), {a}, [](Node<S>& n) {
    const auto& y = n.value();
    n.parent(0).grad().array() += n.grad().array() * (S(1) - y.array().square());
  });
}

template <class S>
Var<S> sigmoid(const Var<S>& a) {
  Matrix<S> out = (S(1) / (S(1) + (-a.value().array()).exp())).matrix();
  return make_op<S>(std::move(out), {a}, [](Node<S>& n) {
    const auto& y = n.value();
    n.parent(0).grad().array() += n.grad().array() * y.array() * (S(1) - y.array());
  });
}

template <class S>
Var<S> relu(const Var<S>& a) {
  Matrix<S> out = a.value().cwiseMax(S(0));
  return make_op<S>(std::move(out), {a}, [](Node<S>& n) {
    n.parent(0).grad().array() += (n.parent(0).value().array() > S(0)).select(n.grad().array(), S(0));
  });
}

/// Gaussian-error linear unit, tanh approximation.
template <class S>
Var<S> gelu(const Var<S>& a) {
  const S c = static_cast<S>(std::sqrt(2.0 / 3.14159265358979323846));
  const S k = static_cast<S>(0.044715);
  const auto& x = a.value().array();
  Matrix<S> out = (S(0.5) * x * (S(1) + (c * (x + k * x.cube())).tanh())).matrix();
  return make_op<S>(std::move(out), {a}, [c, k](Node<S>& n) {
    const auto x = n.parent(0).value().array();
    const auto t = (c * (x + k * x.cube())).tanh();
    const auto dt = (S(1) - t.square()) * c * (S(1) + S(3) * k * x.square());
    n.parent(0).grad().array() += n.grad().array() * (S(0.5) * (S(1) + t) + S(0.5) * x * dt);
  });
}

/// Per-row layer normalization with gain and bias (both 1 x cols).
template <class S>
Var<S> layer_norm(const Var<S>& x, const Var<S>& gain, const Var<S>& bias, S eps = S(1e-5)) {
  const Index rows = x.rows(), cols = x.cols();
  require_shape(gain.cols() == cols && bias.cols() == cols, "layer_norm: gain/bias width");
  Matrix<S> xhat(rows, cols);
  RowVector<S> inv_std(rows);
  for (Index r = 0; r < rows; ++r) {
    const auto row = x.value().row(r);
    const S mu = row.mean();
    const S var = (row.array() - mu).square().mean();
    inv_std(r) = S(1) / std::sqrt(var + eps);
    xhat.row(r) = (row.array() - mu) * inv_std(r);
  }
  Matrix<S> out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  return make_op<S>(std::move(out), {x, gain, bias},
                    [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<S>& n) {
                      const auto& g = n.grad();
                      if (n.wants(1)) n.parent(1).grad() += g.cwiseProduct(xhat).colwise().sum();
                      if (n.wants(2)) n.parent(2).grad() += g.colwise().sum();
                      if (n.wants(0)) {
                        const auto& gamma = n.parent(1).value();
                        auto& gx = n.parent(0).grad();
                        const S inv_n = S(1) / static_cast<S>(g.cols());
                        for (Index r = 0; r < g.rows(); ++r) {
                          RowVector<S> dxhat = g.row(r).cwiseProduct(gamma.row(0));
                          const S m1 = dxhat.sum() * inv_n;
                          const S m2 = dxhat.cwiseProduct(xhat.row(r)).sum() * inv_n;
                          gx.row(r).array() +=
                              inv_std(r) * (dxhat.array() - m1 - xhat.row(r).array() * m2);
                        }
                      }
                    });
}

/// One output row taken from row `row` of `source`.
template <class S>
struct RowRef {
  Var<S> source;
  Index row;
};

/// Assembles a matrix whose rows are drawn from any number of sources. This is
/// the primitive behind embedding lookups and injected-embedding prompts.
template <class S>
Var<S> compose_rows(const std::vector<RowRef<S>>& refs) {
  require_shape(!refs.empty(), "compose_rows: no rows");
  const Index cols = refs.front().source.cols();
  std::vector<Var<S>> sources;
  std::map<const Node<S>*, std::size_t> slot;
  std::vector<std::pair<std::size_t, Index>> plan;
  plan.reserve(refs.size());
  Matrix<S> out(static_cast<Index>(refs.size()), cols);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& r = refs[i];
    require_shape(r.source.cols() == cols, "compose_rows: width mismatch");
    if (r.row < 0 || r.row >= r.source.rows())
      throw IndexError("compose_rows: row " + std::to_string(r.row) + " out of range");
    auto [it, inserted] = slot.emplace(r.source.node().get(), sources.size());
    if (inserted) sources.push_back(r.source);
    plan.emplace_back(it->second, r.row);
    out.row(static_cast<Index>(i)) = r.source.value().row(r.row);
  }
  return make_op<S>(std::move(out), sources, [plan = std::move(plan)](Node<S>& n) {
    const auto& g = n.grad();
    for (std::size_t i = 0; i < plan.size(); ++i) {
      const auto [src, row] = plan[i];
      if (n.wants(src)) n.parent(src).grad().row(row) += g.row(static_cast<Index>(i));
    }
  });
}

template <class S>
Var<S> gather_rows(const Var<S>& table, const std::vector<Index>& ids) {
  std::vector<RowRef<S>> refs;
  refs.reserve(ids.size());
  for (Index id : ids) refs.push_back({table, id});
  return compose_rows(refs);
}

template <class S>
Var<S> slice_rows(const Var<S>& a, Index start, Index count) {
  require_shape(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows: out of range");
  Matrix<S> out = a.value().middleRows(start, count);
  return make_op<S>(std::move(out), {a}, [start, count](Node<S>& n) {
    n.parent(0).grad().middleRows(start, count) += n.grad();
  });
}

template <class S>
Var<S> slice_cols(const Var<S>& a, Index start, Index count) {
  require_shape(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols: out of range");
  Matrix<S> out = a.value().middleCols(start, count);
  return make_op<S>(std::move(out), {a}, [start, count](Node<S>& n) {
    n.parent(0).grad().middleCols(start, count) += n.grad();
  });
}

template <class S>
Var<S> concat_rows(const std::vector<Var<S>>& parts) {
  require_shape(!parts.empty(), "concat_rows: empty");
  Index rows = 0;
  const Index cols = parts.front().cols();
  for (const auto& p : parts) {
    require_shape(p.cols() == cols, "concat_rows: width mismatch");
    rows += p.rows();
  }
  Matrix<S> out(rows, cols);
  Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return make_op<S>(std::move(out), parts, [](Node<S>& n) {
    Index at = 0;
    for (std::size_t i = 0; i < n.parents.size(); ++i) {
      const Index r = n.parent(i).value().rows();
      if (n.wants(i)) n.parent(i).grad() += n.grad().middleRows(at, r);
      at += r;
    }
  });
}

template <class S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  require_shape(!parts.empty(), "concat_cols: empty");
  Index cols = 0;
  const Index rows = parts.front().rows();
  for (const auto& p : parts) {
    require_shape(p.rows() == rows, "concat_cols: height mismatch");
    cols += p.cols();
  }
  Matrix<S> out(rows, cols);
  Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return make_op<S>(std::move(out), parts, [](Node<S>& n) {
    Index at = 0;
    for (std::size_t i = 0; i < n.parents.size(); ++i) {
      const Index c = n.parent(i).value().cols();
      if (n.wants(i)) n.parent(i).grad() += n.grad().middleCols(at, c);
      at += c;
    }
  });
}

/// Row-major reshape.
template <class S>
Var<S> reshape(const Var<S>& a, Index rows, Index cols) {
  require_shape(rows * cols == a.rows() * a.cols(), "reshape: element count");
  Matrix<S> out = Eigen::Map<const Matrix<S>>(a.value().data(), rows, cols);
  return make_op<S>(std::move(out), {a}, [](Node<S>& n) {
    auto& pg = n.parent(0).grad();
    Eigen::Map<Matrix<S>>(pg.data(), n.grad().rows(), n.grad().cols()) += n.grad();
  });
}

template <class S>
Var<S> sum(const Var<S>& a) {
  Matrix<S> out(1, 1);
  out(0, 0) = a.value().sum();
  return make_op<S>(std::move(out), {a}, [](Node<S>& n) { n.parent(0).grad().array() += n.grad()(0, 0); });
}

template <class S>
Var<S> mean(const Var<S>& a) {
  return scale(sum(a), S(1) / static_cast<S>(a.rows() * a.cols()));
}

template <class S>
Var<S> sum_squares(const Var<S>& a) {
  Matrix<S> out(1, 1);
  out(0, 0) = a.value().squaredNorm();
  return make_op<S>(std::move(out), {a}, [](Node<S>& n) {
    n.parent(0).grad() += (S(2) * n.grad()(0, 0)) * n.parent(0).value();
  });
}

/// Column-wise max over consecutive row segments of length `seg`:
/// (B*seg x c) -> (B x c).
template <class S>
Var<S> segment_max(const Var<S>& a, Index seg) {
  require_shape(seg > 0 && a.rows() % seg == 0, "segment_max: rows not divisible by segment");
  const Index groups = a.rows() / seg, cols = a.cols();
  Matrix<S> out(groups, cols);
  std::vector<Index> arg(static_cast<std::size_t>(groups * cols));
  for (Index g = 0; g < groups; ++g)
    for (Index c = 0; c < cols; ++c) {
      Index best = g * seg;
      for (Index r = g * seg + 1; r < (g + 1) * seg; ++r)
        if (a.value()(r, c) > a.value()(best, c)) best = r;
      out(g, c) = a.value()(best, c);
      arg[static_cast<std::size_t>(g * cols + c)] = best;
    }
  return make_op<S>(std::move(out), {a}, [arg = std::move(arg), cols](Node<S>& n) {
    auto& pg = n.parent(0).grad();
    const auto& g = n.grad();
    for (Index gi = 0; gi < g.rows(); ++gi)
      for (Index c = 0; c < cols; ++c) pg(arg[static_cast<std::size_t>(gi * cols + c)], c) += g(gi, c);
  });
}

/// Sliding windows of `h` consecutive rows inside each segment of length
/// `seg`, each flattened to one row: (B*seg x d) -> (B*(seg-h+1) x h*d).
template <class S>
Var<S> window_stack(const Var<S>& a, Index seg, Index h) {
  require_shape(seg > 0 && a.rows() % seg == 0 && h >= 1 && h <= seg, "window_stack: bad geometry");
  const Index groups = a.rows() / seg, d = a.cols(), per = seg - h + 1;
  Matrix<S> out(groups * per, h * d);
  for (Index g = 0; g < groups; ++g)
    for (Index w = 0; w < per; ++w)
      for (Index k = 0; k < h; ++k) out.block(g * per + w, k * d, 1, d) = a.value().row(g * seg + w + k);
  return make_op<S>(std::move(out), {a}, [groups, per, seg, h, d](Node<S>& n) {
    auto& pg = n.parent(0).grad();
    const auto& g = n.grad();
    for (Index gi = 0; gi < groups; ++gi)
      for (Index w = 0; w < per; ++w)
        for (Index k = 0; k < h; ++k) pg.row(gi * seg + w + k) += g.block(gi * per + w, k * d, 1, d);
  });
}

/// For each segment X_b (seg x d) of `x`, computes W * X_b with W (n x seg):
/// (B*seg x d) -> (B*n x d).
template <class S>
Var<S> segment_left_matmul(const Var<S>& w, const Var<S>& x, Index seg) {
  require_shape(w.cols() == seg && x.rows() % seg == 0, "segment_left_matmul: bad geometry");
  const Index groups = x.rows() / seg, nrows = w.rows();
  Matrix<S> out(groups * nrows, x.cols());
  for (Index g = 0; g < groups; ++g) out.middleRows(g * nrows, nrows).noalias() = w.value() * x.value().middleRows(g * seg, seg);
  return make_op<S>(std::move(out), {w, x}, [groups, nrows, seg](Node<S>& n) {
    const auto& g = n.grad();
    for (Index gi = 0; gi < groups; ++gi) {
      const auto gblock = g.middleRows(gi * nrows, nrows);
      if (n.wants(0)) n.parent(0).grad().noalias() += gblock * n.parent(1).value().middleRows(gi * seg, seg).transpose();
      if (n.wants(1)) n.parent(1).grad().middleRows(gi * seg, seg).noalias() += n.parent(0).value().transpose() * gblock;
    }
  });
}

/// Multi-head scaled dot-product attention over independent segments of
/// length `seg` (pass seg = rows for a single sequence). With `causal`, query t
/// sees keys <= t. `key_valid`, when non-empty, masks out keys per row; a query
/// with no visible key yields a zero output row.
template <class S>
Var<S> attention(const Var<S>& q, const Var<S>& k, const Var<S>& v, Index heads, Index seg, bool causal,
                 const std::vector<std::uint8_t>& key_valid = {}) {
  const Index rows = q.rows(), dim = q.cols();
  require_shape(k.rows() == rows && v.rows() == rows && k.cols() == dim && v.cols() == dim, "attention: q/k/v shapes");
  require_shape(heads > 0 && dim % heads == 0, "attention: width not divisible by heads");
  require_shape(seg > 0 && rows % seg == 0, "attention: rows not divisible by segment");
  require_shape(key_valid.empty() || static_cast<Index>(key_valid.size()) == rows, "attention: mask length");
  const Index groups = rows / seg, dh = dim / heads;
  const S inv_scale = S(1) / std::sqrt(static_cast<S>(dh));
  std::vector<Matrix<S>> probs(static_cast<std::size_t>(groups * heads));
  Matrix<S> out = Matrix<S>::Zero(rows, dim);
  for (Index g = 0; g < groups; ++g) {
    for (Index h = 0; h < heads; ++h) {
      const auto qh = q.value().block(g * seg, h * dh, seg, dh);
      const auto kh = k.value().block(g * seg, h * dh, seg, dh);
      const auto vh = v.value().block(g * seg, h * dh, seg, dh);
      Matrix<S> p = (qh * kh.transpose()) * inv_scale;
      for (Index i = 0; i < seg; ++i) {
        S mx = -std::numeric_limits<S>::infinity();
        for (Index j = 0; j < seg; ++j) {
          const bool visible = (!causal || j <= i) && (key_valid.empty() || key_valid[static_cast<std::size_t>(g * seg + j)]);
          if (!visible) p(i, j) = -std::numeric_limits<S>::infinity();
          else mx = std::max(mx, p(i, j));
        }
        if (mx == -std::numeric_limits<S>::infinity()) {
          p.row(i).setZero();
          continue;
        }
        S total = 0;
        for (Index j = 0; j < seg; ++j) {
          const S e = p(i, j) == -std::numeric_limits<S>::infinity() ? S(0) : std::exp(p(i, j) - mx);
          p(i, j) = e;
          total += e;
        }
        p.row(i) /= total;
      }
      out.block(g * seg, h * dh, seg, dh).noalias() = p * vh;
      probs[static_cast<std::size_t>(g * heads + h)] = std::move(p);
    }
  }
  return make_op<S>(std::move(out), {q, k, v}, [probs = std::move(probs), groups, heads, seg, dh, inv_scale](Node<S>& n) {
    const auto& g = n.grad();
    const auto& qv = n.parent(0).value();
    const auto& kv = n.parent(1).value();
    const auto& vv = n.parent(2).value();
    for (Index gi = 0; gi < groups; ++gi) {
      for (Index h = 0; h < heads; ++h) {
        const Matrix<S>& p = probs[static_cast<std::size_t>(gi * heads + h)];
        const auto go = g.block(gi * seg, h * dh, seg, dh);
        if (n.wants(2)) n.parent(2).grad().block(gi * seg, h * dh, seg, dh).noalias() += p.transpose() * go;
        if (!n.wants(0) && !n.wants(1)) continue;
        Matrix<S> dp = go * vv.block(gi * seg, h * dh, seg, dh).transpose();
        Matrix<S> ds = p.cwiseProduct(dp);
        const Eigen::Matrix<S, Eigen::Dynamic, 1> row_dot = ds.rowwise().sum();
        ds -= (p.array().colwise() * row_dot.array()).matrix();
        ds *= inv_scale;
        if (n.wants(0)) n.parent(0).grad().block(gi * seg, h * dh, seg, dh).noalias() += ds * kv.block(gi * seg, h * dh, seg, dh);
        if (n.wants(1)) n.parent(1).grad().block(gi * seg, h * dh, seg, dh).noalias() += ds.transpose() * qv.block(gi * seg, h * dh, seg, dh);
      }
    }
  });
}

/// Row-wise log-softmax of a plain matrix (no graph).
template <class S>
Matrix<S> log_softmax(const Matrix<S>& logits) {
  Matrix<S> out(logits.rows(), logits.cols());
  for (Index r = 0; r < logits.rows(); ++r) {
    const S mx = logits.row(r).maxCoeff();
    const S lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

template <class S>
Matrix<S> softmax(const Matrix<S>& logits) {
  return log_softmax(logits).array().exp().matrix();
}

/// Mean negative log-likelihood of `targets[r]` under row r of `logits`.
template <class S>
Var<S> cross_entropy(const Var<S>& logits, const std::vector<Index>& targets) {
  require_shape(static_cast<Index>(targets.size()) == logits.rows() && logits.rows() > 0, "cross_entropy: target count");
  Matrix<S> lsm = log_softmax(logits.value());
  S total = 0;
  for (Index r = 0; r < lsm.rows(); ++r) {
    const Index t = targets[static_cast<std::size_t>(r)];
    if (t < 0 || t >= lsm.cols()) throw IndexError("cross_entropy: target " + std::to_string(t) + " out of range");
    total -= lsm(r, t);
  }
  const S inv_n = S(1) / static_cast<S>(lsm.rows());
  Matrix<S> out(1, 1);
  out(0, 0) = total * inv_n;
  return make_op<S>(std::move(out), {logits}, [lsm = std::move(lsm), targets, inv_n](Node<S>& n) {
    const S g = n.grad()(0, 0) * inv_n;
    Matrix<S> d = lsm.array().exp().matrix();
    for (Index r = 0; r < d.rows(); ++r) d(r, targets[static_cast<std::size_t>(r)]) -= S(1);
    n.parent(0).grad() += g * d;
  });
}

}  // namespace llara::ad
