#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "gnssrx/dsp/fft.hpp"
#include "gnssrx/dsp/types.hpp"
#include "gnssrx/error.hpp"

namespace gnssrx {

namespace detail {

// Both paths evaluate the same per-element expression in the same order, so
// they round identically. The accelerated path works on the interleaved
// real array in blocks of four samples, which the compiler vectorizes.
template <Real T>
void multiply_scalar(std::span<const std::complex<T>> a, std::span<const std::complex<T>> b, bool conj_b,
                     std::span<std::complex<T>> out) {
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = conj_b ? cmul_conj(a[i], b[i]) : cmul(a[i], b[i]);
}

template <Real T>
void multiply_blocked(std::span<const std::complex<T>> a, std::span<const std::complex<T>> b, bool conj_b,
                      std::span<std::complex<T>> out) {
  const T* pa = reinterpret_cast<const T*>(a.data());
  const T* pb = reinterpret_cast<const T*>(b.data());
  T* po = reinterpret_cast<T*>(out.data());
  const std::size_t n = a.size();
  const T sign = conj_b ? T(-1) : T(1);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    for (std::size_t j = 0; j < 4; ++j) {
      const std::size_t k = 2 * (i + j);
      const T ar = pa[k], ai = pa[k + 1], br = pb[k], bi = sign * pb[k + 1];
      po[k] = ar * br - ai * bi;
      po[k + 1] = ar * bi + ai * br;
    }
  }
  for (; i < n; ++i) {
    const std::size_t k = 2 * i;
    const T ar = pa[k], ai = pa[k + 1], br = pb[k], bi = sign * pb[k + 1];
    po[k] = ar * br - ai * bi;
    po[k + 1] = ar * bi + ai * br;
  }
}

template <Real T>
std::vector<std::complex<T>> multiply(std::span<const std::complex<T>> a, std::span<const std::complex<T>> b,
                                      bool conj_b, ComputePathPolicy policy) {
  if (a.size() != b.size()) throw InvalidInput("pointwise_multiply: length mismatch");
  std::vector<std::complex<T>> out(a.size());
  if (select_compute_path(a.size(), policy) == ComputePath::ScalarLoop) {
    multiply_scalar<T>(a, b, conj_b, out);
  } else {
    multiply_blocked<T>(a, b, conj_b, out);
  }
  return out;
}

}  // namespace detail

template <Real T>
IqBuffer<T> pointwise_multiply(const IqBuffer<T>& a, const IqBuffer<T>& b, bool conjugate_b,
                               ComputePathPolicy policy = {}) {
  return IqBuffer<T>(detail::multiply<T>(a.samples(), b.samples(), conjugate_b, policy), a.sample_rate_hz());
}

template <Real T>
Spectrum<T> pointwise_multiply(const Spectrum<T>& a, const Spectrum<T>& b, bool conjugate_b,
                               ComputePathPolicy policy = {}) {
  return Spectrum<T>(detail::multiply<T>(a.bins(), b.bins(), conjugate_b, policy), a.sample_rate_hz());
}

/// Σ a[n]·b[n] (or a[n]·conj(b[n])), accumulated sequentially from n = 0 in T.
///
/// The accelerated path keeps the real and imaginary accumulators in
/// separate registers but adds terms in the same order, so the result is
/// identical to the scalar loop.
template <Real T>
std::complex<T> dot_product(std::span<const std::complex<T>> a, std::span<const std::complex<T>> b,
                            bool conjugate_b, ComputePathPolicy policy = {}) {
  if (a.size() != b.size()) throw InvalidInput("dot_product: length mismatch");
  if (select_compute_path(a.size(), policy) == ComputePath::ScalarLoop) {
    std::complex<T> acc{};
    for (std::size_t i = 0; i < a.size(); ++i) acc += conjugate_b ? detail::cmul_conj(a[i], b[i]) : detail::cmul(a[i], b[i]);
    return acc;
  }
  const T* pa = reinterpret_cast<const T*>(a.data());
  const T* pb = reinterpret_cast<const T*>(b.data());
  const T sign = conjugate_b ? T(-1) : T(1);
  T re = 0, im = 0;
  for (std::size_t k = 0; k < 2 * a.size(); k += 2) {
    const T ar = pa[k], ai = pa[k + 1], br = pb[k], bi = sign * pb[k + 1];
    re += ar * br - ai * bi;
    im += ar * bi + ai * br;
  }
  return {re, im};
}

template <Real T>
std::complex<T> dot_product(const IqBuffer<T>& a, const IqBuffer<T>& b, bool conjugate_b,
                            ComputePathPolicy policy = {}) {
  return dot_product<T>(a.samples(), b.samples(), conjugate_b, policy);
}

template <Real T>
std::vector<T> magnitude_sq(std::span<const std::complex<T>> xs) {
  if (xs.empty()) throw InvalidInput("magnitude_sq: empty input");
  std::vector<T> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = xs[i].real() * xs[i].real() + xs[i].imag() * xs[i].imag();
  return out;
}

template <Real T>
std::vector<T> magnitude_sq(const IqBuffer<T>& buf) {
  return magnitude_sq<T>(buf.samples());
}

enum class CorrelationMethod { FrequencyDomain, Direct };

template <Real T>
struct Correlation {
  IqBuffer<T> values;
  std::uint64_t multiplications = 0;
};

/// Complex multiplications a full-lag time-domain correlation of length n needs.
constexpr std::uint64_t direct_correlation_multiplications(std::uint64_t n) noexcept { return n * n; }

/// Multiplications of the transform route: two forward transforms, one
/// inverse and the spectral product.
template <Real T>
std::uint64_t frequency_domain_correlation_multiplications(std::size_t n) {
  return 3 * fft_plan<T>(n)->multiplication_count() + n;
}

/// out[τ] = Σₙ x[n]·conj(y[(n − τ) mod N]).
template <Real T>
Correlation<T> circular_correlate(const IqBuffer<T>& x, const IqBuffer<T>& y, CorrelationMethod method,
                                  ComputePathPolicy policy = {}) {
  const std::size_t n = x.size();
  if (y.size() != n) throw InvalidInput("circular_correlate: length mismatch");
  if (method == CorrelationMethod::FrequencyDomain) {
    const auto xf = fft(x);
    const auto yf = fft(y);
    auto out = ifft(pointwise_multiply(xf, yf, true, policy));
    return {std::move(out), frequency_domain_correlation_multiplications<T>(n)};
  }
  const auto xs = x.samples();
  const auto ys = y.samples();
  std::vector<std::complex<T>> out(n);
  std::uint64_t mults = 0;
  for (std::size_t tau = 0; tau < n; ++tau) {
    std::complex<T> acc{};
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = i >= tau ? i - tau : i + n - tau;
      acc += detail::cmul_conj(xs[i], ys[j]);
    }
    mults += n;
    out[tau] = acc;
  }
  return {IqBuffer<T>(std::move(out), x.sample_rate_hz()), mults};
}

}  // namespace gnssrx
