#pragma once

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ftin {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
using Index = Eigen::Index;

// Error hierarchy. Every library failure derives from ftin::Error so callers
// (the CLI in particular) can map it onto an exit code.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Bad input that a caller could have validated: exit code 2 in the CLI.
struct ValidationError : Error {
  using Error::Error;
};
struct SchemaError : ValidationError {
  explicit SchemaError(std::string field)
      : ValidationError("schema error: missing or invalid field '" + field + "'"), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};
struct IntegrityError : ValidationError {
  IntegrityError(const std::string& what, Index index)
      : ValidationError("integrity error at index " + std::to_string(index) + ": " + what), index_(index) {}
  Index index() const noexcept { return index_; }

 private:
  Index index_;
};
struct PreconditionError : ValidationError {
  using ValidationError::ValidationError;
};
struct SizeError : ValidationError {
  using ValidationError::ValidationError;
};
struct ContractError : ValidationError {
  using ValidationError::ValidationError;
};
// Numerical breakdown (non-finite values, symmetry violations): exit code 3.
struct NumericError : Error {
  using Error::Error;
};

enum class Activation { Relu, Identity };

inline std::string_view to_string(Activation a) { return a == Activation::Relu ? "relu" : "identity"; }

inline Activation activation_from_string(std::string_view s) {
  if (s == "relu") return Activation::Relu;
  if (s == "identity") return Activation::Identity;
  throw SchemaError("activation");
}

template <class D>
void activate_inplace(Eigen::MatrixBase<D>& x, Activation a) {
  using S = typename D::Scalar;
  if (a == Activation::Relu) x = x.array().max(S(0)).matrix();
}

// Multiplies an upstream gradient by the activation derivative evaluated at
// the pre-activation values.
template <class G, class P>
void activation_backward(Eigen::MatrixBase<G>& grad, const Eigen::MatrixBase<P>& pre, Activation a) {
  if (a == Activation::Identity) return;
  using S = typename G::Scalar;
  grad.array() *= (pre.array() > S(0)).template cast<S>();
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractError(msg);
}

}  // namespace ftin
