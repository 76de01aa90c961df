#pragma once

// Parallel code phase search.
//
// For each Doppler bin the input is mixed to baseband with the carrier NCO,
// each coherent block is transformed, multiplied by the conjugate spectrum of
// the local code and transformed back; |·|² is summed over the noncoherent
// rounds. The global (bin, lag) maximum gives the Doppler and code phase
// estimates.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "gnssrx/dsp.hpp"
#include "gnssrx/error.hpp"
#include "gnssrx/exec/pipeline.hpp"
#include "gnssrx/signal/ca_code.hpp"
#include "gnssrx/signal/nco.hpp"

namespace gnssrx {

struct AcqConfig {
  double doppler_min_hz = -5000.0;
  double doppler_max_hz = 5000.0;
  double doppler_step_hz = 2.0 / (3.0 * 1e-3);
  int coherent_ms = 1;
  int noncoherent_rounds = 10;
  double detection_threshold = 2.5;
  std::optional<std::size_t> exclusion_radius_samples;  // default: one chip, ⌈fs / chip rate⌉
  ComputePathPolicy compute{};

  /// Defaults with the Doppler step sized to the coherent time, 2 / (3·T).
  static AcqConfig for_coherent_ms(int ms, int rounds = 1) {
    AcqConfig c;
    c.coherent_ms = ms;
    c.noncoherent_rounds = rounds;
    c.doppler_step_hz = 2.0 / (3.0 * ms * 1e-3);
    return c;
  }
};

inline void validate(const AcqConfig& c) {
  if (!std::isfinite(c.doppler_min_hz) || !std::isfinite(c.doppler_max_hz) || c.doppler_min_hz > c.doppler_max_hz)
    throw InvalidConfig("AcqConfig: doppler_min must not exceed doppler_max");
  if (!(c.doppler_step_hz > 0.0) || !std::isfinite(c.doppler_step_hz))
    throw InvalidConfig("AcqConfig: doppler_step must be positive");
  if (c.coherent_ms < 1) throw InvalidConfig("AcqConfig: coherent_ms must be >= 1");
  if (c.noncoherent_rounds < 1) throw InvalidConfig("AcqConfig: noncoherent_rounds must be >= 1");
  if (!(c.detection_threshold > 1.0)) throw InvalidConfig("AcqConfig: detection_threshold must exceed 1");
}

/// Bin centres min, min + step, … up to max (inclusive within a 1e-9 step tolerance).
inline std::vector<double> doppler_bins(const AcqConfig& c) {
  validate(c);
  const auto count = static_cast<std::size_t>(std::floor((c.doppler_max_hz - c.doppler_min_hz) / c.doppler_step_hz + 1e-9)) + 1;
  std::vector<double> bins(count);
  for (std::size_t i = 0; i < count; ++i) bins[i] = c.doppler_min_hz + static_cast<double>(i) * c.doppler_step_hz;
  return bins;
}

struct AcqResult {
  int prn = 0;
  double doppler_hz = 0.0;
  std::size_t code_phase_samples = 0;
  double peak_metric = 0.0;
  bool detected = false;
  std::size_t doppler_bin = 0;
  std::size_t bins_searched = 0;
  int rounds_used = 0;
  double sample_rate_hz = 0.0;
  std::uint64_t multiplications_performed = 0;  // carrier mixing stage, one product per sample per bin
  std::uint64_t spectral_multiplications = 0;   // code-spectrum mixing stage

  friend bool operator==(const AcqResult&, const AcqResult&) = default;
};

/// Conjugated spectra of sampled code replicas, keyed by (PRN, fs, length).
/// Entries are immutable once inserted; lookups are thread-safe.
template <Real T>
class CodeSpectrumCache {
public:
  std::shared_ptr<const Spectrum<T>> get(const CaCode& code, double sample_rate_hz, std::size_t length) {
    const Key key{code.prn, sample_rate_hz, length};
    {
      std::lock_guard lock(mutex_);
      if (auto it = entries_.find(key); it != entries_.end()) return it->second;
    }
    const auto replica = sample_code_replica<T>(code, NcoState{}, kChipRateHz, sample_rate_hz, length);
    const auto spectrum = fft(replica.samples);
    std::vector<std::complex<T>> conj(spectrum.size());
    for (std::size_t i = 0; i < conj.size(); ++i) conj[i] = std::conj(spectrum[i]);
    auto entry = std::make_shared<const Spectrum<T>>(std::move(conj), sample_rate_hz);
    std::lock_guard lock(mutex_);
    return entries_.emplace(key, std::move(entry)).first->second;
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
  }

private:
  using Key = std::tuple<int, double, std::size_t>;
  mutable std::mutex mutex_;
  std::map<Key, std::shared_ptr<const Spectrum<T>>> entries_;
};

namespace detail {

inline std::size_t checked_samples_per_code(double fs) {
  if (fs < kChipRateHz) throw InvalidInput("acquire: sample rate below the chip rate");
  const double spc = fs * 1e-3;
  if (std::abs(spc - std::round(spc)) > 1e-6)
    throw InvalidInput("acquire: sample rate does not give an integer number of samples per code period");
  return static_cast<std::size_t>(std::llround(spc));
}

}  // namespace detail

template <Real T>
AcqResult acquire_channel(const IqBuffer<T>& samples, const CaCode& code, const AcqConfig& config,
                          CodeSpectrumCache<T>* cache = nullptr) {
  validate(config);
  const double fs = samples.sample_rate_hz();
  const std::size_t period = detail::checked_samples_per_code(fs);
  if (samples.size() < period) throw InvalidInput("acquire: buffer shorter than one code period");
  const std::size_t block = period * static_cast<std::size_t>(config.coherent_ms);
  if (samples.size() < block) throw InvalidInput("acquire: buffer shorter than one coherent block");
  const std::size_t rounds = std::min<std::size_t>(static_cast<std::size_t>(config.noncoherent_rounds), samples.size() / block);
  const std::size_t used = rounds * block;
  const std::size_t exclusion =
      config.exclusion_radius_samples.value_or(static_cast<std::size_t>(std::ceil(fs / kChipRateHz)));

  CodeSpectrumCache<T> local_cache;
  const auto code_conj = (cache ? *cache : local_cache).get(code, fs, block);
  const auto bins = doppler_bins(config);
  const auto input = samples.slice(0, used);

  AcqResult result;
  result.prn = code.prn;
  result.bins_searched = bins.size();
  result.rounds_used = static_cast<int>(rounds);
  result.sample_rate_hz = fs;

  T best = -1;
  std::vector<T> best_power;
  std::vector<T> power(period);
  for (std::size_t b = 0; b < bins.size(); ++b) {
    const auto carrier = carrier_replica<T>(NcoState{}, bins[b], fs, used);
    const auto mixed = pointwise_multiply(input, carrier.samples, false, config.compute);
    result.multiplications_performed += used;

    std::vector<IqBuffer<T>> blocks;
    blocks.reserve(rounds);
    for (std::size_t r = 0; r < rounds; ++r) blocks.push_back(mixed.slice(r * block, block));
    const auto spectra = batch_fft(blocks);

    std::fill(power.begin(), power.end(), T(0));
    for (const auto& spec : spectra) {
      const auto corr = ifft(pointwise_multiply(spec, *code_conj, false, config.compute));
      result.spectral_multiplications += block;
      const auto mag = magnitude_sq(corr);
      // Correlation repeats every code period; lags beyond the first period add nothing new.
      for (std::size_t lag = 0; lag < period; ++lag) power[lag] += mag[lag];
    }
    std::size_t bin_lag = 0;
    for (std::size_t lag = 1; lag < period; ++lag) {
      if (power[lag] > power[bin_lag]) bin_lag = lag;
    }
    if (power[bin_lag] > best) {
      best = power[bin_lag];
      result.doppler_bin = b;
      result.code_phase_samples = bin_lag;
      best_power = power;
    }
  }

  result.doppler_hz = bins[result.doppler_bin];
  T second = 0;
  for (std::size_t lag = 0; lag < period; ++lag) {
    const std::size_t d = lag > result.code_phase_samples ? lag - result.code_phase_samples : result.code_phase_samples - lag;
    const std::size_t circular = std::min(d, period - d);
    if (circular > exclusion) second = std::max(second, best_power[lag]);
  }
  if (second > T(0)) {
    result.peak_metric = static_cast<double>(best) / static_cast<double>(second);
  } else {
    result.peak_metric = best > T(0) ? std::numeric_limits<double>::infinity() : 0.0;
  }
  result.detected = result.peak_metric >= config.detection_threshold;
  return result;
}

/// One independent acquisition channel per PRN, distributed per `plan`.
/// Results come back in `prns` order and match sequential acquisition exactly.
template <Real T>
std::vector<AcqResult> acquire_all(const IqBuffer<T>& samples, std::span<const int> prns, const AcqConfig& config,
                                   const ExecPlan& plan) {
  if (prns.empty()) throw InvalidInput("acquire_all: empty PRN list");
  std::set<int> seen;
  std::vector<CaCode> codes;
  for (int prn : prns) {
    if (!seen.insert(prn).second) throw InvalidInput("acquire_all: duplicate PRN " + std::to_string(prn));
    codes.push_back(generate_ca_code(prn));
  }
  validate(config);
  const std::size_t period = detail::checked_samples_per_code(samples.sample_rate_hz());
  const std::size_t block = period * static_cast<std::size_t>(config.coherent_ms);

  // Fill the cache up front so workers only read it.
  CodeSpectrumCache<T> cache;
  if (samples.size() >= block) {
    for (const auto& code : codes) cache.get(code, samples.sample_rate_hz(), block);
  }

  std::vector<AcqResult> results(prns.size());
  std::vector<EpochTask> tasks(prns.size());
  for (std::size_t i = 0; i < prns.size(); ++i) {
    tasks[i].channel_id = static_cast<std::size_t>(prns[i]);
    tasks[i].phase1 = [&, i] { results[i] = acquire_channel(samples, codes[i], config, &cache); };
    tasks[i].phase2 = [] { return true; };
  }
  run_epochs(tasks, plan, nullptr, 1);
  return results;
}

template <Real T>
std::vector<AcqResult> acquire_all(const IqBuffer<T>& samples, const std::vector<int>& prns, const AcqConfig& config,
                                   const ExecPlan& plan) {
  return acquire_all(samples, std::span<const int>(prns), config, plan);
}

}  // namespace gnssrx
