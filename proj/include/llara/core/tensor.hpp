#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace llara {

// Row-major storage throughout: rows are tokens / items / batch entries, and
// row gathers and scatters are the hot path.
template <class S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
using RowVector = Eigen::Matrix<S, 1, Eigen::Dynamic>;

using Index = Eigen::Index;

/// Base class for every recoverable error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

/// A trainable (or frozen) dense array owned by a model. Gradients accumulate
/// into `grad` when the parameter takes part in a backward pass.
template <class S>
struct Parameter {
  Matrix<S> value;
  Matrix<S> grad;
  bool trainable = true;

  Parameter() = default;
  explicit Parameter(Matrix<S> v, bool train = true) : value(std::move(v)), trainable(train) {}

  Index rows() const { return value.rows(); }
  Index cols() const { return value.cols(); }

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }

  template <class T>
  Parameter<T> cast() const {
    Parameter<T> out(value.template cast<T>(), trainable);
    return out;
  }
};

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace llara
