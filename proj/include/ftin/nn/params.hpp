#pragma once

#include "ftin/core.hpp"
#include "ftin/rng.hpp"

#include <string>
#include <type_traits>
#include <vector>

namespace ftin::nn {

// Non-owning handle on one parameter tensor, in visit order.
template <class T>
struct TensorView {
  std::string name;
  T* data = nullptr;
  Index rows = 0;
  Index cols = 0;
  Index size() const { return rows * cols; }
};

// Every parameter struct P exposes
//   template <class Self, class F> static void visit(Self&, const std::string& prefix, F&&)
// which calls f(name, tensor) for each Mat/Vec member in a fixed order.
template <class P>
auto tensor_views(P& p) {
  using T = typename std::remove_const_t<P>::Scalar;
  std::vector<TensorView<std::conditional_t<std::is_const_v<P>, const T, T>>> out;
  std::remove_const_t<P>::visit(p, "", [&out](const std::string& name, auto& t) {
    out.push_back({name, t.data(), t.rows(), t.cols()});
  });
  return out;
}

template <class P>
Index parameter_count(const P& p) {
  Index n = 0;
  for (const auto& v : tensor_views(p)) n += v.size();
  return n;
}

template <class P>
P zeros_like(const P& p) {
  P out = p;
  P::visit(out, "", [](const std::string&, auto& t) { t.setZero(); });
  return out;
}

template <class P>
void set_zero(P& p) {
  P::visit(p, "", [](const std::string&, auto& t) { t.setZero(); });
}

template <class P>
bool all_finite(const P& p) {
  bool ok = true;
  P::visit(p, "", [&ok](const std::string&, const auto& t) { ok = ok && t.allFinite(); });
  return ok;
}

// Copies values between parameter sets of identical layout (possibly of
// different scalar types).
template <class P, class Q>
void copy_values(P& dst, const Q& src) {
  auto d = tensor_views(dst);
  auto s = tensor_views(src);
  require(d.size() == s.size(), "copy_values: tensor count mismatch");
  for (std::size_t i = 0; i < d.size(); ++i) {
    require(d[i].rows == s[i].rows && d[i].cols == s[i].cols, "copy_values: shape mismatch for " + d[i].name);
    for (Index k = 0; k < d[i].size(); ++k) d[i].data[k] = static_cast<typename P::Scalar>(s[i].data[k]);
  }
}

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <class T, class M>
void fan_in_uniform(M& m, Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
}

}  // namespace ftin::nn
