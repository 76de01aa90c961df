#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "gnssrx/dsp/kernels.hpp"
#include "gnssrx/dsp/types.hpp"
#include "gnssrx/error.hpp"
#include "gnssrx/signal/ca_code.hpp"
#include "gnssrx/signal/nco.hpp"

namespace gnssrx {

/// Standard normal deviates from std::mt19937_64 via Box–Muller.
///
/// The engine's output sequence is fixed by the C++ standard, and uniforms are
/// formed from the top 53 bits directly rather than through the
/// implementation-defined distribution classes, so a seed yields the same
/// stream on every conforming platform.
class GaussianSource {
public:
  explicit GaussianSource(std::uint64_t seed) : engine_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1], u2 in [0, 1)
    const double u1 = static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
    const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Ground truth for one synthetic satellite signal.
struct SignalSpec {
  int prn = 1;
  double doppler_hz = 0.0;
  double code_phase_samples = 0.0;  // delay of the received code
  double carrier_phase_cycles = 0.0;
  double sample_rate_hz = 8.184e6;
  double duration_s = 10e-3;
  double noise_sigma = 0.0;  // per component
  std::uint64_t seed = 0;
  double amplitude = 1.0;
};

/// Code rate seen by the receiver: nominal rate stretched by the carrier Doppler.
inline double doppler_code_rate(double doppler_hz) { return kChipRateHz * (1.0 + doppler_hz / kL1FrequencyHz); }

/// ⌊fs·T⌉
inline std::size_t sample_count(double sample_rate_hz, double duration_s) {
  return static_cast<std::size_t>(std::llround(sample_rate_hz * duration_s));
}

inline void validate(const SignalSpec& spec) {
  if (spec.prn < 1 || spec.prn > kMaxPrn) throw InvalidInput("SignalSpec: PRN out of range");
  if (!(spec.sample_rate_hz > 0.0) || !std::isfinite(spec.sample_rate_hz))
    throw InvalidInput("SignalSpec: sample rate must be positive");
  if (!(spec.duration_s > 0.0) || !std::isfinite(spec.duration_s))
    throw InvalidInput("SignalSpec: duration must be positive");
  if (sample_count(spec.sample_rate_hz, spec.duration_s) == 0)
    throw InvalidInput("SignalSpec: duration yields no samples");
  if (!(spec.noise_sigma >= 0.0)) throw InvalidInput("SignalSpec: noise sigma must be non-negative");
  if (!std::isfinite(spec.doppler_hz) || !std::isfinite(spec.carrier_phase_cycles) || !std::isfinite(spec.amplitude))
    throw InvalidInput("SignalSpec: non-finite parameter");
  const double period = spec.sample_rate_hz * 1e-3;
  if (!(spec.code_phase_samples >= 0.0) || !(spec.code_phase_samples < period))
    throw InvalidInput("SignalSpec: code phase must lie in [0, samples per code period)");
}

/// Code NCO phase (chips) of the received code at sample 0. The code is read
/// half a sample late so that, when fs is a multiple of the chip rate, chip
/// edges sit between samples instead of on them; otherwise code Doppler would
/// push every edge across a sample instant and bias the delay by one sample.
inline double initial_code_phase_chips(const SignalSpec& spec) {
  const double step = doppler_code_rate(spec.doppler_hz) / spec.sample_rate_hz;
  return wrap_phase((0.5 - spec.code_phase_samples) * step, static_cast<double>(kChipsPerCode));
}

/// Adds independent N(0, sigma²) noise to each component. sigma = 0 returns
/// the input unchanged.
template <Real T>
IqBuffer<T> add_awgn(const IqBuffer<T>& buf, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidInput("add_awgn: sigma must be non-negative");
  if (sigma == 0.0) return buf;
  GaussianSource gauss(seed);
  std::vector<std::complex<T>> out(buf.samples().begin(), buf.samples().end());
  for (auto& s : out) {
    const double re = gauss.next() * sigma;
    const double im = gauss.next() * sigma;
    s = {static_cast<T>(static_cast<double>(s.real()) + re), static_cast<T>(static_cast<double>(s.imag()) + im)};
  }
  return IqBuffer<T>(std::move(out), buf.sample_rate_hz());
}

namespace detail {

// amplitude · code(t - delay) · exp(+2πi(φ + f·t)), no noise
inline std::vector<std::complex<double>> noise_free_component(const SignalSpec& spec) {
  const std::size_t n = sample_count(spec.sample_rate_hz, spec.duration_s);
  const CaCode code = generate_ca_code(spec.prn);
  const auto code_rep = sample_code_replica<double>(code, NcoState{initial_code_phase_chips(spec), 0.0},
                                                    doppler_code_rate(spec.doppler_hz), spec.sample_rate_hz, n);
  const auto carrier = carrier_replica<double>(NcoState{-spec.carrier_phase_cycles, 0.0}, -spec.doppler_hz,
                                               spec.sample_rate_hz, n);
  const auto product = pointwise_multiply(code_rep.samples, carrier.samples, false);
  std::vector<std::complex<double>> out(product.samples().begin(), product.samples().end());
  if (spec.amplitude != 1.0) {
    for (auto& s : out) s *= spec.amplitude;
  }
  return out;
}

}  // namespace detail

/// Delayed code × Doppler-shifted carrier (+ white Gaussian noise). Computed in
/// double and rounded once to T, so both precisions see the same signal.
template <Real T>
IqBuffer<T> synthesize_signal(const SignalSpec& spec) {
  validate(spec);
  IqBuffer<double> clean(detail::noise_free_component(spec), spec.sample_rate_hz);
  return add_awgn(clean, spec.noise_sigma, spec.seed).template cast<T>();
}

/// Sum of several satellites sharing one sample rate and duration, plus one
/// noise realization.
template <Real T>
IqBuffer<T> synthesize_composite(std::span<const SignalSpec> sats, double noise_sigma, std::uint64_t seed) {
  if (sats.empty()) throw InvalidInput("synthesize_composite: no satellites");
  const double fs = sats.front().sample_rate_hz;
  const double dur = sats.front().duration_s;
  std::vector<std::complex<double>> sum;
  for (const auto& s : sats) {
    validate(s);
    if (s.sample_rate_hz != fs || s.duration_s != dur)
      throw InvalidInput("synthesize_composite: satellites disagree on sample rate or duration");
    auto component = detail::noise_free_component(s);
    if (sum.empty()) {
      sum = std::move(component);
    } else {
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += component[i];
    }
  }
  return add_awgn(IqBuffer<double>(std::move(sum), fs), noise_sigma, seed).template cast<T>();
}

/// Per-component noise sigma that puts a unit-amplitude signal at the given
/// carrier-to-noise density: C/N0 = fs / (2σ²).
inline double noise_sigma_for_cn0(double cn0_dbhz, double sample_rate_hz) {
  const double cn0 = std::pow(10.0, cn0_dbhz / 10.0);
  return std::sqrt(sample_rate_hz / (2.0 * cn0));
}

}  // namespace gnssrx
