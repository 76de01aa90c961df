#pragma once

// Mixed-radix FFT for arbitrary lengths.
//
// Lengths factor into radices 4, 2, 3, 5 and generic odd primes; lengths
// with a prime factor above kBluesteinPrimeLimit go through Bluestein's
// chirp-z algorithm on a power-of-two plan. Forward transforms are
// unnormalized, inverse transforms carry 1/N.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <vector>

#include "gnssrx/dsp/types.hpp"
#include "gnssrx/error.hpp"

namespace gnssrx {

namespace detail {

template <Real T>
inline std::complex<T> cmul(std::complex<T> a, std::complex<T> b) noexcept {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

template <Real T>
inline std::complex<T> cmul_conj(std::complex<T> a, std::complex<T> b) noexcept {
  return {a.real() * b.real() + a.imag() * b.imag(), a.imag() * b.real() - a.real() * b.imag()};
}

inline std::atomic<std::uint64_t>& global_dispatches() {
  static std::atomic<std::uint64_t> n{0};
  return n;
}

inline std::atomic<std::uint64_t>& global_transforms() {
  static std::atomic<std::uint64_t> n{0};
  return n;
}

inline std::uint64_t& thread_dispatches() {
  thread_local std::uint64_t n = 0;
  return n;
}

inline void record_dispatch(std::uint64_t transforms) {
  global_dispatches().fetch_add(1, std::memory_order_relaxed);
  global_transforms().fetch_add(transforms, std::memory_order_relaxed);
  ++thread_dispatches();
}

}  // namespace detail

/// Number of transform submissions (single or batch) since process start.
inline std::uint64_t transform_dispatch_count() {
  return detail::global_dispatches().load(std::memory_order_relaxed);
}

/// Number of individual transforms executed, counting each batch member.
inline std::uint64_t transform_count() {
  return detail::global_transforms().load(std::memory_order_relaxed);
}

/// Submissions made from the calling thread only.
inline std::uint64_t thread_transform_dispatch_count() { return detail::thread_dispatches(); }

inline constexpr std::size_t kBluesteinPrimeLimit = 127;

inline std::vector<std::size_t> factorize(std::size_t n) {
  std::vector<std::size_t> out;
  while (n % 4 == 0) { out.push_back(4); n /= 4; }
  while (n % 2 == 0) { out.push_back(2); n /= 2; }
  for (std::size_t p = 3; p * p <= n; p += 2) {
    while (n % p == 0) { out.push_back(p); n /= p; }
  }
  if (n > 1) out.push_back(n);
  return out;
}

template <Real T>
class FftPlan {
public:
  using C = std::complex<T>;

  explicit FftPlan(std::size_t n) : n_(n) {
    if (n == 0) throw InvalidInput("fft: zero-length transform");
    const auto radices = factorize(n);
    if (!radices.empty() && radices.back() > kBluesteinPrimeLimit) {
      init_bluestein();
      return;
    }
    std::size_t m = n;
    for (std::size_t p : radices) {
      m /= p;
      stages_.push_back({p, m});
      max_radix_ = std::max(max_radix_, p);
      if (p > 4 && !generic_roots_.count(p)) {
        auto& roots = generic_roots_[p];
        for (std::size_t j = 0; j < p; ++j) {
          const double a = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(p);
          roots.emplace_back(static_cast<T>(std::cos(a)), static_cast<T>(std::sin(a)));
        }
      }
    }
    if (stages_.empty()) stages_.push_back({1, 1});
    forward_tw_.resize(n);
    inverse_tw_.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double phase = -2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
      forward_tw_[j] = {static_cast<T>(std::cos(phase)), static_cast<T>(std::sin(phase))};
      inverse_tw_[j] = std::conj(forward_tw_[j]);
    }
  }

  std::size_t size() const noexcept { return n_; }
  bool uses_bluestein() const noexcept { return bluestein_ != nullptr; }

  /// Unnormalized transform; `in` and `out` must not overlap.
  void execute(std::span<const C> in, std::span<C> out, bool inverse) const {
    if (in.size() != n_ || out.size() != n_) throw InvalidInput("fft: plan/buffer length mismatch");
    if (bluestein_) {
      run_bluestein(in, out, inverse);
      return;
    }
    if (n_ == 1) {
      out[0] = in[0];
      return;
    }
    std::vector<C> scratch(2 * max_radix_);
    work(out.data(), in.data(), 1, 0, inverse, scratch);
  }

  /// Complex multiplications, counting every twiddle product of each stage.
  std::uint64_t multiplication_count() const noexcept {
    if (bluestein_) {
      const auto inner = bluestein_->plan->multiplication_count();
      return 2 * inner + bluestein_->m + 2 * n_;
    }
    std::uint64_t total = 0;
    for (const auto& s : stages_) total += static_cast<std::uint64_t>(n_) * (s.radix - 1);
    return total;
  }

private:
  struct Stage {
    std::size_t radix;
    std::size_t span;  // sub-transform length after this stage
  };

  struct Bluestein {
    std::size_t m = 0;
    std::vector<C> chirp;       // e^{-i pi k^2 / n}
    std::vector<C> kernel_fft;  // FFT of the conjugate chirp, wrapped to length m
    std::unique_ptr<FftPlan> plan;
  };

  void init_bluestein() {
    auto b = std::make_unique<Bluestein>();
    std::size_t m = 1;
    while (m < 2 * n_ - 1) m <<= 1;
    b->m = m;
    b->plan = std::make_unique<FftPlan>(m);
    b->chirp.resize(n_);
    const std::uint64_t two_n = 2 * static_cast<std::uint64_t>(n_);
    for (std::size_t k = 0; k < n_; ++k) {
      const std::uint64_t k2 = (static_cast<std::uint64_t>(k) * k) % two_n;
      const double phase = -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n_);
      b->chirp[k] = {static_cast<T>(std::cos(phase)), static_cast<T>(std::sin(phase))};
    }
    std::vector<C> kernel(m, C{});
    kernel[0] = std::conj(b->chirp[0]);
    for (std::size_t k = 1; k < n_; ++k) {
      kernel[k] = std::conj(b->chirp[k]);
      kernel[m - k] = std::conj(b->chirp[k]);
    }
    b->kernel_fft.resize(m);
    b->plan->execute(kernel, b->kernel_fft, false);
    bluestein_ = std::move(b);
  }

  void run_bluestein(std::span<const C> in, std::span<C> out, bool inverse) const {
    const auto& b = *bluestein_;
    std::vector<C> a(b.m, C{});
    // Inverse via conj(F(conj(x))).
    for (std::size_t k = 0; k < n_; ++k) {
      const C x = inverse ? std::conj(in[k]) : in[k];
      a[k] = detail::cmul(x, b.chirp[k]);
    }
    std::vector<C> fa(b.m);
    b.plan->execute(a, fa, false);
    for (std::size_t k = 0; k < b.m; ++k) fa[k] = detail::cmul(fa[k], b.kernel_fft[k]);
    b.plan->execute(fa, a, true);
    const T scale = T(1) / static_cast<T>(b.m);
    for (std::size_t k = 0; k < n_; ++k) {
      C y = detail::cmul(a[k] * scale, b.chirp[k]);
      out[k] = inverse ? std::conj(y) : y;
    }
  }

  // Decimation in time: transform `stage`'s sub-sequences recursively, then
  // combine with one radix-p butterfly pass.
  void work(C* out, const C* in, std::size_t fstride, std::size_t stage, bool inverse,
            std::vector<C>& scratch) const {
    const auto& tw = inverse ? inverse_tw_ : forward_tw_;
    const std::size_t p = stages_[stage].radix;
    const std::size_t m = stages_[stage].span;
    if (m == 1) {
      for (std::size_t j = 0; j < p; ++j) out[j] = in[j * fstride];
    } else {
      for (std::size_t j = 0; j < p; ++j) work(out + j * m, in + j * fstride, fstride * p, stage + 1, inverse, scratch);
    }
    switch (p) {
      case 2: butterfly2(out, fstride, m, tw); break;
      case 3: butterfly3(out, fstride, m, tw); break;
      case 4: butterfly4(out, fstride, m, tw, inverse); break;
      default: butterfly_generic(out, fstride, p, m, tw, scratch); break;
    }
  }

  static void butterfly2(C* out, std::size_t fstride, std::size_t m, const std::vector<C>& tw) {
    C* out2 = out + m;
    for (std::size_t k = 0; k < m; ++k) {
      const C t = detail::cmul(out2[k], tw[k * fstride]);
      out2[k] = out[k] - t;
      out[k] += t;
    }
  }

  static void butterfly3(C* out, std::size_t fstride, std::size_t m, const std::vector<C>& tw) {
    const T s = tw[fstride * m].imag();  // sin(-+2pi/3), sign carries direction
    for (std::size_t k = 0; k < m; ++k) {
      const C a1 = detail::cmul(out[k + m], tw[k * fstride]);
      const C a2 = detail::cmul(out[k + 2 * m], tw[2 * k * fstride]);
      const C sum = a1 + a2;
      const C diff = a1 - a2;
      const C base = out[k];
      const C mid = base - sum * T(0.5);
      const C rot{-s * diff.imag(), s * diff.real()};
      out[k] = base + sum;
      out[k + m] = mid + rot;
      out[k + 2 * m] = mid - rot;
    }
  }

  static void butterfly4(C* out, std::size_t fstride, std::size_t m, const std::vector<C>& tw, bool inverse) {
    for (std::size_t k = 0; k < m; ++k) {
      const C a0 = out[k];
      const C a1 = detail::cmul(out[k + m], tw[k * fstride]);
      const C a2 = detail::cmul(out[k + 2 * m], tw[2 * k * fstride]);
      const C a3 = detail::cmul(out[k + 3 * m], tw[3 * k * fstride]);
      const C s0 = a0 + a2;
      const C s1 = a0 - a2;
      const C s2 = a1 + a3;
      const C s3 = a1 - a3;
      // multiply s3 by -i (forward) or +i (inverse)
      const C r = inverse ? C{-s3.imag(), s3.real()} : C{s3.imag(), -s3.real()};
      out[k] = s0 + s2;
      out[k + 2 * m] = s0 - s2;
      out[k + m] = s1 + r;
      out[k + 3 * m] = s1 - r;
    }
  }

  // Odd prime p: twiddle the inputs, then a direct p-point DFT that pairs
  // inputs r and p-r so each root's cosine and sine are applied once.
  void butterfly_generic(C* out, std::size_t fstride, std::size_t p, std::size_t m, const std::vector<C>& tw,
                         std::vector<C>& scratch) const {
    const auto& roots = generic_roots_.at(p);
    const std::size_t half = (p - 1) / 2;
    const bool inverse = &tw == &inverse_tw_;
    C* x = scratch.data();
    C* sums = x + p;
    C* diffs = sums + half;
    for (std::size_t u = 0; u < m; ++u) {
      x[0] = out[u];
      for (std::size_t q = 1; q < p; ++q) x[q] = detail::cmul(out[u + q * m], tw[q * u * fstride]);
      C dc = x[0];
      for (std::size_t r = 1; r <= half; ++r) {
        sums[r - 1] = x[r] + x[p - r];
        diffs[r - 1] = x[r] - x[p - r];
        dc += sums[r - 1];
      }
      out[u] = dc;
      for (std::size_t q = 1; q <= half; ++q) {
        C re = x[0], im{};
        std::size_t idx = 0;
        for (std::size_t r = 0; r < half; ++r) {
          idx += q;
          if (idx >= p) idx -= p;
          re += sums[r] * roots[idx].real();
          im += diffs[r] * roots[idx].imag();
        }
        // im carries sin terms; forward rotates by -i, inverse by +i
        const C rot = inverse ? C{-im.imag(), im.real()} : C{im.imag(), -im.real()};
        out[u + q * m] = re + rot;
        out[u + (p - q) * m] = re - rot;
      }
    }
  }

  std::size_t n_;
  std::size_t max_radix_ = 1;
  std::map<std::size_t, std::vector<C>> generic_roots_;  // {cos, sin}(2πj/p)
  std::vector<Stage> stages_;
  std::vector<C> forward_tw_;
  std::vector<C> inverse_tw_;
  std::unique_ptr<Bluestein> bluestein_;
};

/// Shared, immutable plan for length n. Safe to call from any thread.
template <Real T>
std::shared_ptr<const FftPlan<T>> fft_plan(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, std::shared_ptr<const FftPlan<T>>> cache;
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(n); it != cache.end()) return it->second;
  }
  auto plan = std::make_shared<const FftPlan<T>>(n);
  std::lock_guard lock(mutex);
  return cache.emplace(n, std::move(plan)).first->second;
}

template <Real T>
Spectrum<T> fft(const IqBuffer<T>& buf) {
  const auto plan = fft_plan<T>(buf.size());
  std::vector<std::complex<T>> out(buf.size());
  plan->execute(buf.samples(), out, false);
  detail::record_dispatch(1);
  return Spectrum<T>(std::move(out), buf.sample_rate_hz());
}

template <Real T>
IqBuffer<T> ifft(const Spectrum<T>& spec) {
  const auto plan = fft_plan<T>(spec.size());
  std::vector<std::complex<T>> out(spec.size());
  plan->execute(spec.bins(), out, true);
  const T scale = T(1) / static_cast<T>(spec.size());
  for (auto& v : out) v *= scale;
  detail::record_dispatch(1);
  return IqBuffer<T>(std::move(out), spec.sample_rate_hz());
}

/// Transforms equal-length buffers as one submission: inputs are packed into a
/// single contiguous region and run through one shared plan.
template <Real T>
std::vector<Spectrum<T>> batch_fft(std::span<const IqBuffer<T>> bufs) {
  if (bufs.empty()) throw InvalidInput("batch_fft: empty batch");
  const std::size_t n = bufs.front().size();
  for (const auto& b : bufs) {
    if (b.size() != n) throw InvalidInput("batch_fft: ragged batch lengths");
  }
  std::vector<std::complex<T>> packed(n * bufs.size());
  for (std::size_t i = 0; i < bufs.size(); ++i) {
    std::ranges::copy(bufs[i].samples(), packed.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  std::vector<std::complex<T>> result(packed.size());
  const auto plan = fft_plan<T>(n);
  const std::span<const std::complex<T>> src(packed);
  const std::span<std::complex<T>> dst(result);
  for (std::size_t i = 0; i < bufs.size(); ++i) {
    plan->execute(src.subspan(i * n, n), dst.subspan(i * n, n), false);
  }
  detail::record_dispatch(bufs.size());

  std::vector<Spectrum<T>> out;
  out.reserve(bufs.size());
  for (std::size_t i = 0; i < bufs.size(); ++i) {
    const auto first = result.begin() + static_cast<std::ptrdiff_t>(i * n);
    out.emplace_back(std::vector<std::complex<T>>(first, first + static_cast<std::ptrdiff_t>(n)),
                     bufs[i].sample_rate_hz());
  }
  return out;
}

template <Real T>
std::vector<Spectrum<T>> batch_fft(const std::vector<IqBuffer<T>>& bufs) {
  return batch_fft(std::span<const IqBuffer<T>>(bufs));
}

}  // namespace gnssrx
