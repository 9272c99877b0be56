#pragma once

// Orthonormal real DFT restricted to the non-redundant half spectrum, and its
// inverse via conjugate-symmetric expansion. Both directions are linear maps
// stored as dense matrices, which keeps forward and backward passes to plain
// matrix products at the small axis lengths the model uses.

#include "ftin/core.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace ftin {

template <class T>
struct HalfSpectrum {
  Mat<T> re;  // F x d
  Mat<T> im;  // F x d
  Index n_full = 0;
};

inline Index half_bins(Index n) { return n / 2 + 1; }

enum class ImagResidue {
  Strict,   // non-zero imaginary DC/Nyquist content is an error
  Discard,  // project onto the real-signal subspace
};

template <class T>
class DftPlan {
 public:
  DftPlan() = default;
  explicit DftPlan(Index n) : n_(n) {
    require(n >= 2, "dft: axis length must be >= 2");
    const Index f = half_bins(n);
    fwd_re_.resize(f, n);
    fwd_im_.resize(f, n);
    inv_re_.resize(n, f);
    inv_im_.resize(n, f);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (Index k = 0; k < f; ++k) {
      const bool self_conjugate = k == 0 || 2 * k == n;
      const double weight = self_conjugate ? 1.0 : 2.0;
      for (Index c = 0; c < n; ++c) {
        // Reduce c*k mod n before scaling so large indices keep full precision.
        const double angle = 2.0 * std::numbers::pi * static_cast<double>((c * k) % n) / static_cast<double>(n);
        const double co = std::cos(angle);
        const double si = self_conjugate ? 0.0 : std::sin(angle);  // exact zero at DC and Nyquist
        fwd_re_(k, c) = static_cast<T>(co * scale);
        fwd_im_(k, c) = static_cast<T>(-si * scale);
        inv_re_(c, k) = static_cast<T>(weight * co * scale);
        inv_im_(c, k) = static_cast<T>(-weight * si * scale);
      }
    }
  }

  Index size() const { return n_; }
  Index bins() const { return half_bins(n_); }

  // Forward: re = A v, im = B v.
  const Mat<T>& fwd_re() const { return fwd_re_; }
  const Mat<T>& fwd_im() const { return fwd_im_; }
  // Inverse: z = P re + Q im. Q's DC and Nyquist columns are zero, which is
  // exactly the projection that drops their imaginary parts.
  const Mat<T>& inv_re() const { return inv_re_; }
  const Mat<T>& inv_im() const { return inv_im_; }

 private:
  Index n_ = 0;
  Mat<T> fwd_re_, fwd_im_, inv_re_, inv_im_;
};

// Process-wide plan cache; plans are immutable once built.
template <class T>
const DftPlan<T>& dft_plan(Index n) {
  static std::mutex mu;
  static std::map<Index, DftPlan<T>> plans;
  std::lock_guard<std::mutex> lock(mu);
  auto it = plans.find(n);
  if (it == plans.end()) it = plans.emplace(n, DftPlan<T>(n)).first;
  return it->second;
}

// X[f] = (1/sqrt(N)) sum_c v[c] exp(-j 2 pi c f / N), f = 0..N/2, per column.
template <class T>
HalfSpectrum<T> dft_half(const DftPlan<T>& plan, const Mat<T>& v) {
  require(v.rows() == plan.size(), "dft_half: row count does not match plan length");
  return {plan.fwd_re() * v, plan.fwd_im() * v, plan.size()};
}

template <class T>
HalfSpectrum<T> dft_half(const Mat<T>& v) {
  return dft_half(DftPlan<T>(v.rows()), v);
}

// Largest imaginary part the full inverse transform would produce.
template <class T>
T imaginary_residue(const HalfSpectrum<T>& s) {
  const Index n = s.n_full;
  const T scale = T(1) / std::sqrt(static_cast<T>(n));
  Vec<T> dc = s.im.row(0).transpose();
  if (n % 2 == 0) {
    const Vec<T> nyq = s.im.row(n / 2).transpose();
    return scale * std::max((dc + nyq).cwiseAbs().maxCoeff(), (dc - nyq).cwiseAbs().maxCoeff());
  }
  return scale * dc.cwiseAbs().maxCoeff();
}

template <class T>
Mat<T> idft_half(const DftPlan<T>& plan, const HalfSpectrum<T>& s, ImagResidue policy = ImagResidue::Strict) {
  require(s.n_full == plan.size(), "idft_half: spectrum length does not match plan");
  require(s.re.rows() == plan.bins() && s.im.rows() == plan.bins() && s.re.cols() == s.im.cols(),
          "idft_half: malformed half spectrum");
  if (policy == ImagResidue::Strict) {
    const T residue = imaginary_residue(s);
    if (!(residue <= T(1e-9))) {
      throw NumericError("idft_half: imaginary residue " + std::to_string(static_cast<double>(residue)) +
                         " exceeds tolerance; spectrum is not conjugate symmetric");
    }
  }
  return plan.inv_re() * s.re + plan.inv_im() * s.im;
}

template <class T>
Mat<T> idft_half(const HalfSpectrum<T>& s, ImagResidue policy = ImagResidue::Strict) {
  return idft_half(DftPlan<T>(s.n_full), s, policy);
}

// Gradient of a loss w.r.t. v, given gradients w.r.t. the forward outputs.
template <class T>
Mat<T> dft_half_backward(const DftPlan<T>& plan, const Mat<T>& d_re, const Mat<T>& d_im) {
  return plan.fwd_re().transpose() * d_re + plan.fwd_im().transpose() * d_im;
}

// Gradients w.r.t. (re, im) given the gradient w.r.t. the discard-policy inverse.
template <class T>
HalfSpectrum<T> idft_half_backward(const DftPlan<T>& plan, const Mat<T>& dz) {
  return {plan.inv_re().transpose() * dz, plan.inv_im().transpose() * dz, plan.size()};
}

}  // namespace ftin
