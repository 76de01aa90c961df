#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "gnssrx/dsp/types.hpp"
#include "gnssrx/error.hpp"
#include "gnssrx/signal/ca_code.hpp"

namespace gnssrx {

/// Phase accumulator. Carrier NCOs count cycles in [0, 1), code NCOs count
/// chips in [0, 1023).
struct NcoState {
  double phase = 0.0;
  double step_per_sample = 0.0;

  friend bool operator==(const NcoState&, const NcoState&) = default;
};

/// Wraps x into [0, period). Exact for the single-step overflows an
/// accumulator produces.
inline double wrap_phase(double x, double period) {
  if (x >= period) {
    x -= period;
    if (x >= period) x -= std::floor(x / period) * period;
  } else if (x < 0.0) {
    x += period;
    if (x < 0.0) x -= std::floor(x / period) * period;
  }
  return x >= period ? 0.0 : x;
}

/// Wraps x into [-period/2, period/2).
inline double wrap_signed(double x, double period) {
  const double w = wrap_phase(x + 0.5 * period, period);
  return w - 0.5 * period;
}

template <Real T>
struct Replica {
  IqBuffer<T> samples;
  NcoState nco;  // state for the sample after the last one generated
};

/// out[k] = exp(-2πi·phase_k), phase advancing freq_hz / sample_rate_hz
/// cycles per sample. Splitting a run across calls reproduces one long call
/// bit for bit.
template <Real T>
Replica<T> carrier_replica(NcoState nco, double freq_hz, double sample_rate_hz, std::size_t n) {
  if (n == 0) throw InvalidInput("carrier_replica: zero-length replica");
  if (!(sample_rate_hz > 0.0)) throw InvalidInput("carrier_replica: sample rate must be positive");
  const double step = freq_hz / sample_rate_hz;
  if (!std::isfinite(step)) throw InvalidInput("carrier_replica: non-finite phase step");
  double phase = wrap_phase(nco.phase, 1.0);
  std::vector<std::complex<T>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double angle = -2.0 * std::numbers::pi * phase;
    out[k] = {static_cast<T>(std::cos(angle)), static_cast<T>(std::sin(angle))};
    phase = wrap_phase(phase + step, 1.0);
  }
  return {IqBuffer<T>(std::move(out), sample_rate_hz), NcoState{phase, step}};
}

/// out[k] = chips[⌊phase_k⌋ mod 1023] with zero imaginary part. The chip is
/// taken at the previous integer phase; there is no interpolation.
template <Real T>
Replica<T> sample_code_replica(const CaCode& code, NcoState nco, double chip_rate_hz, double sample_rate_hz,
                               std::size_t n) {
  if (n == 0) throw InvalidInput("sample_code_replica: zero-length replica");
  if (!(chip_rate_hz > 0.0)) throw InvalidInput("sample_code_replica: chip rate must be positive");
  if (!(sample_rate_hz > 0.0)) throw InvalidInput("sample_code_replica: sample rate must be positive");
  const double step = chip_rate_hz / sample_rate_hz;
  constexpr double period = static_cast<double>(kChipsPerCode);
  double phase = wrap_phase(nco.phase, period);
  std::vector<std::complex<T>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto chip = static_cast<std::size_t>(phase) % kChipsPerCode;
    out[k] = {static_cast<T>(code.chips[chip]), T(0)};
    phase = wrap_phase(phase + step, period);
  }
  return {IqBuffer<T>(std::move(out), sample_rate_hz), NcoState{phase, step}};
}

/// Samples in one 1 ms code period, rounded to the nearest integer.
inline std::size_t samples_per_code_period(double sample_rate_hz) {
  return static_cast<std::size_t>(std::llround(sample_rate_hz * 1e-3));
}

}  // namespace gnssrx
