#pragma once

#include <cmath>
#include <complex>
#include <concepts>
#include <cstddef>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "gnssrx/error.hpp"

namespace gnssrx {

template <typename T>
concept Real = std::same_as<T, float> || std::same_as<T, double>;

enum class Precision { Single, Double };

template <Real T>
inline constexpr Precision precision_of = std::same_as<T, float> ? Precision::Single : Precision::Double;

constexpr std::string_view to_string(Precision p) {
  return p == Precision::Single ? "single" : "double";
}

namespace detail {

template <Real T>
bool all_finite(std::span<const std::complex<T>> xs) {
  for (const auto& x : xs) {
    if (!std::isfinite(x.real()) || !std::isfinite(x.imag())) return false;
  }
  return true;
}

}  // namespace detail

/// Complex baseband samples at a fixed sample rate.
///
/// The precision tag is the template parameter, so the stored width and the
/// tag can never disagree. Non-empty and finite by construction.
template <Real T>
class IqBuffer {
public:
  using value_type = std::complex<T>;
  using real_type = T;

  IqBuffer(std::vector<value_type> samples, double sample_rate_hz)
      : samples_(std::move(samples)), sample_rate_hz_(sample_rate_hz) {
    if (samples_.empty()) throw InvalidInput("IqBuffer: zero-length buffer");
    if (!(sample_rate_hz_ > 0.0) || !std::isfinite(sample_rate_hz_))
      throw InvalidInput("IqBuffer: sample rate must be positive and finite");
    if (!detail::all_finite<T>(samples_)) throw InvalidInput("IqBuffer: non-finite sample");
  }

  std::size_t size() const noexcept { return samples_.size(); }
  double sample_rate_hz() const noexcept { return sample_rate_hz_; }
  double duration_s() const noexcept { return static_cast<double>(size()) / sample_rate_hz_; }
  static constexpr Precision precision() noexcept { return precision_of<T>; }

  std::span<const value_type> samples() const noexcept { return samples_; }
  std::span<const value_type> values() const noexcept { return samples_; }
  const value_type& operator[](std::size_t i) const { return samples_[i]; }
  auto begin() const noexcept { return samples_.begin(); }
  auto end() const noexcept { return samples_.end(); }

  /// Contiguous slice [offset, offset + count) with the same sample rate.
  IqBuffer slice(std::size_t offset, std::size_t count) const {
    if (count == 0 || offset + count > size()) throw InvalidInput("IqBuffer: slice out of range");
    return IqBuffer(std::vector<value_type>(samples_.begin() + static_cast<std::ptrdiff_t>(offset),
                                            samples_.begin() + static_cast<std::ptrdiff_t>(offset + count)),
                    sample_rate_hz_);
  }

  template <Real U>
  IqBuffer<U> cast() const {
    std::vector<std::complex<U>> out(size());
    for (std::size_t i = 0; i < size(); ++i) {
      out[i] = {static_cast<U>(samples_[i].real()), static_cast<U>(samples_[i].imag())};
    }
    return IqBuffer<U>(std::move(out), sample_rate_hz_);
  }

  friend bool operator==(const IqBuffer&, const IqBuffer&) = default;

private:
  std::vector<value_type> samples_;
  double sample_rate_hz_;
};

/// Frequency-domain coefficients of a transformed buffer.
template <Real T>
class Spectrum {
public:
  using value_type = std::complex<T>;
  using real_type = T;

  Spectrum(std::vector<value_type> bins, double sample_rate_hz)
      : bins_(std::move(bins)), sample_rate_hz_(sample_rate_hz) {
    if (bins_.empty()) throw InvalidInput("Spectrum: zero-length spectrum");
  }

  std::size_t size() const noexcept { return bins_.size(); }
  double sample_rate_hz() const noexcept { return sample_rate_hz_; }
  static constexpr Precision precision() noexcept { return precision_of<T>; }

  std::span<const value_type> bins() const noexcept { return bins_; }
  std::span<const value_type> values() const noexcept { return bins_; }
  const value_type& operator[](std::size_t i) const { return bins_[i]; }

  friend bool operator==(const Spectrum&, const Spectrum&) = default;

private:
  std::vector<value_type> bins_;
  double sample_rate_hz_;
};

/// Gate between plain scalar loops and the blocked kernels.
struct ComputePathPolicy {
  std::size_t min_iterations = 64;
};

enum class ComputePath { ScalarLoop, Accelerated };

constexpr ComputePath select_compute_path(std::size_t length, ComputePathPolicy policy) noexcept {
  return length < policy.min_iterations ? ComputePath::ScalarLoop : ComputePath::Accelerated;
}

}  // namespace gnssrx
