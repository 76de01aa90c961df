#pragma once

// Time-domain tracking channel: carrier wipe-off, early/prompt/late code
// correlators, DLL and Costas PLL discriminators, second-order loop filters.
// Nothing on this path calls a transform.
//
// Hand-off from acquisition leaves up to half a Doppler bin and a fraction
// of a chip of error, more than a 15 Hz PLL or a 2 Hz DLL pulls in quickly.
// The first `fll_assist_epochs` epochs estimate frequency from the
// prompt-to-prompt rotation and end with a one-shot carrier phase alignment;
// until `pull_in_epochs` the DLL runs as a wide first-order loop and the PLL
// at a wider bandwidth. After that the loops run at their steady-state
// bandwidths.

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "gnssrx/acquisition.hpp"
#include "gnssrx/dsp.hpp"
#include "gnssrx/error.hpp"
#include "gnssrx/exec/pipeline.hpp"
#include "gnssrx/signal/ca_code.hpp"
#include "gnssrx/signal/nco.hpp"
#include "gnssrx/signal/synthesis.hpp"

namespace gnssrx {

struct TrackConfig {
  double correlator_spacing_chips = 0.5;  // early-to-late distance
  double dll_bandwidth_hz = 2.0;
  double pll_bandwidth_hz = 15.0;
  int integration_ms = 1;
  int pull_in_epochs = 25;  // wide DLL and PLL
  double pull_in_dll_bandwidth_hz = 50.0;
  double pull_in_pll_bandwidth_hz = 40.0;
  int fll_assist_epochs = 15;
  int lock_window_epochs = 20;
  ComputePathPolicy compute{};
};

inline double integration_s(const TrackConfig& c) { return c.integration_ms * 1e-3; }

inline void validate(const TrackConfig& c) {
  if (!(c.correlator_spacing_chips > 0.0 && c.correlator_spacing_chips <= 1.0))
    throw InvalidConfig("TrackConfig: correlator spacing must lie in (0, 1] chip");
  if (c.integration_ms < 1) throw InvalidConfig("TrackConfig: integration_ms must be >= 1");
  const double t = integration_s(c);
  for (double bw : {c.dll_bandwidth_hz, c.pll_bandwidth_hz, c.pull_in_dll_bandwidth_hz, c.pull_in_pll_bandwidth_hz}) {
    if (!(bw > 0.0)) throw InvalidConfig("TrackConfig: bandwidths must be positive");
    if (bw * t >= 0.25) throw InvalidConfig("TrackConfig: bandwidth x integration time must stay below 0.25");
  }
  if (c.pull_in_epochs < 0 || c.fll_assist_epochs < 0) throw InvalidConfig("TrackConfig: pull-in epoch counts must be >= 0");
  if (c.lock_window_epochs < 1 || c.lock_window_epochs > 64) throw InvalidConfig("TrackConfig: lock window must be 1..64");
}

struct LoopFilterState {
  double integrator = 0.0;
  double last_error = 0.0;

  friend bool operator==(const LoopFilterState&, const LoopFilterState&) = default;
};

struct LoopFilterOutput {
  double correction = 0.0;
  LoopFilterState state;
};

inline constexpr double kLoopDamping = 0.707;

/// Natural frequency for a second-order loop with damping 0.707: ω₀ = Bn / 0.53.
inline double natural_frequency(double bandwidth_hz) { return bandwidth_hz / 0.53; }

/// Second-order proportional-plus-integral filter:
///   integrator += ω₀²·T·e,  correction = integrator + 2ζω₀·e.
/// Output units are error units per second.
inline LoopFilterOutput loop_filter(double error, LoopFilterState state, double bandwidth_hz, double integration_s) {
  if (!(bandwidth_hz > 0.0) || !(integration_s > 0.0)) throw InvalidConfig("loop_filter: bandwidth and T must be positive");
  if (bandwidth_hz * integration_s >= 0.25) throw InvalidConfig("loop_filter: bandwidth x T must stay below 0.25");
  const double w0 = natural_frequency(bandwidth_hz);
  state.integrator += w0 * w0 * integration_s * error;
  state.last_error = error;
  return {state.integrator + 2.0 * kLoopDamping * w0 * error, state};
}

struct TrackState {
  int prn = 0;
  double sample_rate_hz = 0.0;
  double code_phase_chips = 0.0;      // replica code phase at the first sample of the next block
  double carrier_phase_cycles = 0.0;  // replica carrier phase at the first sample of the next block
  double doppler_hz = 0.0;            // frequency estimate
  double carrier_nco_hz = 0.0;        // carrier NCO command for the next block
  double code_rate_hz = kChipRateHz;  // code NCO command for the next block
  double reference_doppler_hz = 0.0;  // Doppler handed over by acquisition
  LoopFilterState dll_filter;
  LoopFilterState pll_filter;
  std::size_t epoch = 0;
  std::complex<double> last_prompt{};
  double last_carrier_nco_hz = 0.0;   // NCO command used for the previous block
  std::array<double, 64> lock_num{};  // ring buffers of ip²−qp² and ip²+qp²
  std::array<double, 64> lock_den{};

  friend bool operator==(const TrackState&, const TrackState&) = default;
};

struct TrackOutput {
  std::size_t epoch = 0;
  double ie = 0, qe = 0, ip = 0, qp = 0, il = 0, ql = 0;
  double spacing_chips = 0.5;
  double dll_error_chips = 0.0;
  double pll_error_cycles = 0.0;
  double fll_error_hz = 0.0;
  double lock_metric = 0.0;
  std::uint64_t multiplications = 0;             // carrier wipe-off plus three correlators
  std::uint64_t full_shift_multiplications = 0;  // a full-lag time-domain correlation of the same block
  // Loop state after this epoch's update
  double code_phase_chips = 0.0;
  double carrier_phase_cycles = 0.0;
  double doppler_hz = 0.0;

  friend bool operator==(const TrackOutput&, const TrackOutput&) = default;
};

/// Seeds a tracking channel from a detection. Code phase becomes the replica
/// chip phase at sample 0 of the acquired buffer, −τ·Rc/fs mod 1023.
inline TrackState init_from_acquisition(const AcqResult& acq, double sample_rate_hz) {
  if (!acq.detected) throw InvalidInput("init_from_acquisition: PRN " + std::to_string(acq.prn) + " was not detected");
  if (!(sample_rate_hz > 0.0)) throw InvalidInput("init_from_acquisition: sample rate must be positive");
  TrackState s;
  s.prn = acq.prn;
  s.sample_rate_hz = sample_rate_hz;
  // Same half-sample read offset as the synthesized signal.
  const double chips = (static_cast<double>(acq.code_phase_samples) - 0.5) * kChipRateHz / sample_rate_hz;
  s.code_phase_chips = wrap_phase(-chips, static_cast<double>(kChipsPerCode));
  s.doppler_hz = acq.doppler_hz;
  s.carrier_nco_hz = acq.doppler_hz;
  s.reference_doppler_hz = acq.doppler_hz;
  s.code_rate_hz = doppler_code_rate(acq.doppler_hz);
  return s;
}

inline std::size_t samples_per_epoch(double sample_rate_hz, const TrackConfig& config) {
  return static_cast<std::size_t>(std::llround(sample_rate_hz * integration_s(config)));
}

namespace detail {

struct EplPass {
  TrackOutput output;
  double carrier_end = 0.0;  // NCO phases after the block
  double code_end = 0.0;
};

template <Real T>
EplPass epl_pass(const IqBuffer<T>& block, const TrackState& state, const TrackConfig& config) {
  const std::size_t n = samples_per_epoch(block.sample_rate_hz(), config);
  if (block.size() != n) throw InvalidInput("epl_correlate: block must hold exactly one integration period");
  if (state.prn < 1 || state.prn > kMaxPrn) throw InvalidInput("epl_correlate: state has no valid PRN");
  const double fs = block.sample_rate_hz();
  const CaCode code = generate_ca_code(state.prn);
  const double half = 0.5 * config.correlator_spacing_chips;

  const auto carrier = carrier_replica<T>(NcoState{state.carrier_phase_cycles, 0.0}, state.carrier_nco_hz, fs, n);
  const auto wiped = pointwise_multiply(block, carrier.samples, false, config.compute);
  auto replica = [&](double offset) {
    return sample_code_replica<T>(code, NcoState{state.code_phase_chips + offset, 0.0}, state.code_rate_hz, fs, n);
  };
  const auto early = replica(+half);
  const auto prompt = replica(0.0);
  const auto late = replica(-half);
  const auto e = dot_product(wiped, early.samples, false, config.compute);
  const auto p = dot_product(wiped, prompt.samples, false, config.compute);
  const auto l = dot_product(wiped, late.samples, false, config.compute);

  EplPass pass;
  auto& out = pass.output;
  out.ie = e.real(), out.qe = e.imag();
  out.ip = p.real(), out.qp = p.imag();
  out.il = l.real(), out.ql = l.imag();
  out.spacing_chips = config.correlator_spacing_chips;
  out.multiplications = 4 * static_cast<std::uint64_t>(n);
  out.full_shift_multiplications = direct_correlation_multiplications(n);
  pass.carrier_end = carrier.nco.phase;
  pass.code_end = prompt.nco.phase;
  return pass;
}

}  // namespace detail

/// Early (+d/2 chip ahead), prompt and late (−d/2) correlations of the
/// carrier-wiped block. Fills the correlator fields only.
template <Real T>
TrackOutput epl_correlate(const IqBuffer<T>& block, const TrackState& state, const TrackConfig& config) {
  return detail::epl_pass(block, state, config).output;
}

/// Normalized early-minus-late power, scaled so that the output equals the
/// code offset in chips near lock for a triangular correlation:
///   (E − L) / (E + L) · (1 − d/2) / 2.
/// Positive when the replica lags the received code.
inline double dll_discriminator(const TrackOutput& out) {
  const double e = out.ie * out.ie + out.qe * out.qe;
  const double l = out.il * out.il + out.ql * out.ql;
  if (e + l == 0.0) throw DegenerateInput("dll_discriminator: early and late correlators are both zero");
  return (e - l) / (e + l) * (1.0 - 0.5 * out.spacing_chips) * 0.5;
}

/// Costas arctangent: atan(Q/I) / 2π cycles, blind to 180° rotations.
inline double pll_discriminator(const TrackOutput& out) {
  if (out.ip == 0.0 && out.qp == 0.0) throw DegenerateInput("pll_discriminator: prompt correlator is zero");
  if (out.ip == 0.0) return out.qp > 0.0 ? 0.25 : -0.25;
  return std::atan(out.qp / out.ip) / (2.0 * std::numbers::pi);
}

/// Phase advance between consecutive prompts, atan2(cross, dot) / (2π·T), in Hz.
inline double fll_discriminator(std::complex<double> previous, std::complex<double> current, double integration_s) {
  const double cross = previous.real() * current.imag() - previous.imag() * current.real();
  const double dot = previous.real() * current.real() + previous.imag() * current.imag();
  if (cross == 0.0 && dot == 0.0) return 0.0;
  return std::atan2(cross, dot) / (2.0 * std::numbers::pi * integration_s);
}

/// Discriminators, loop filters and NCO commands for the epoch whose
/// correlations are in `out`. `carrier_end` and `code_end` are the replica
/// NCO phases after the block.
inline TrackState update_loops(TrackState state, TrackOutput& out, const TrackConfig& config, double carrier_end,
                               double code_end) {
  const double t = integration_s(config);
  const bool pulling_in = state.epoch < static_cast<std::size_t>(config.pull_in_epochs);

  out.dll_error_chips = dll_discriminator(out);
  out.pll_error_cycles = pll_discriminator(out);
  const std::complex<double> prompt{out.ip, out.qp};
  const double used_nco_hz = state.carrier_nco_hz;
  const auto fll_epochs = static_cast<std::size_t>(config.fll_assist_epochs);
  if (state.epoch < fll_epochs) {
    // Frequency-only pull-in. Each prompt-to-prompt rotation, which spans
    // half of each of the last two blocks, gives an absolute frequency
    // observation; the integrator holds their running mean. Rotation noise
    // telescopes, so the mean tightens as 1/k.
    if (state.epoch > 0) {
      out.fll_error_hz = fll_discriminator(state.last_prompt, prompt, t);
      const double observed = 0.5 * (state.last_carrier_nco_hz + used_nco_hz) + out.fll_error_hz;
      const double error = observed - state.reference_doppler_hz - state.pll_filter.integrator;
      state.pll_filter.integrator += error / static_cast<double>(state.epoch);
    }
    state.carrier_nco_hz = state.reference_doppler_hz + state.pll_filter.integrator;
    // Hand over to the PLL with the residual phase removed.
    if (state.epoch + 1 == fll_epochs) carrier_end = wrap_phase(carrier_end + out.pll_error_cycles, 1.0);
  } else {
    const auto pll = loop_filter(out.pll_error_cycles, state.pll_filter,
                                 pulling_in ? config.pull_in_pll_bandwidth_hz : config.pll_bandwidth_hz, t);
    state.pll_filter = pll.state;
    state.carrier_nco_hz = state.reference_doppler_hz + pll.correction;
  }
  state.doppler_hz = state.reference_doppler_hz + state.pll_filter.integrator;

  double code_correction = 0.0;
  if (pulling_in) {
    code_correction = 4.0 * config.pull_in_dll_bandwidth_hz * out.dll_error_chips;
  } else {
    const auto dll = loop_filter(out.dll_error_chips, state.dll_filter, config.dll_bandwidth_hz, t);
    state.dll_filter = dll.state;
    code_correction = dll.correction;
  }
  state.code_rate_hz = doppler_code_rate(state.doppler_hz) + code_correction;

  const std::size_t window = static_cast<std::size_t>(config.lock_window_epochs);
  const std::size_t slot = state.epoch % window;
  state.lock_num[slot] = out.ip * out.ip - out.qp * out.qp;
  state.lock_den[slot] = out.ip * out.ip + out.qp * out.qp;
  double num = 0.0, den = 0.0;
  const std::size_t filled = std::min(window, state.epoch + 1);
  for (std::size_t i = 0; i < filled; ++i) {
    num += state.lock_num[i];
    den += state.lock_den[i];
  }
  out.lock_metric = den > 0.0 ? num / den : 0.0;

  state.last_prompt = prompt;
  state.last_carrier_nco_hz = used_nco_hz;
  state.carrier_phase_cycles = carrier_end;
  state.code_phase_chips = code_end;
  out.epoch = state.epoch;
  out.code_phase_chips = code_end;
  out.carrier_phase_cycles = carrier_end;
  out.doppler_hz = state.doppler_hz;
  ++state.epoch;
  return state;
}

struct EpochResult {
  TrackState state;
  TrackOutput output;
};

/// One integration period: correlate, discriminate, filter, advance the NCOs.
template <Real T>
EpochResult track_epoch(const IqBuffer<T>& block, const TrackState& state, const TrackConfig& config) {
  validate(config);
  auto pass = detail::epl_pass(block, state, config);
  TrackState next = update_loops(state, pass.output, config, pass.carrier_end, pass.code_end);
  return {std::move(next), pass.output};
}

/// A tracking channel walking through a sample buffer one epoch at a time.
template <Real T>
class TrackingChannel {
public:
  TrackingChannel(const IqBuffer<T>& samples, TrackState initial, const TrackConfig& config, std::size_t max_epochs)
      : samples_(&samples), state_(std::move(initial)), config_(config) {
    validate(config_);
    block_ = samples_per_epoch(samples.sample_rate_hz(), config_);
    if (block_ == 0) throw InvalidInput("TrackingChannel: integration period holds no samples");
    epochs_ = std::min(samples.size() / block_, state_.epoch + max_epochs);
  }

  bool done() const noexcept { return state_.epoch >= epochs_; }

  /// Phase 1: correlations for the current epoch.
  void correlate() {
    if (done()) return;
    pending_ = detail::epl_pass(samples_->slice(state_.epoch * block_, block_), state_, config_);
  }

  /// Phase 2: loop update. Returns true once the channel has consumed its epochs.
  bool update() {
    if (done()) return true;
    state_ = update_loops(state_, pending_.output, config_, pending_.carrier_end, pending_.code_end);
    history_.push_back(pending_.output);
    return done();
  }

  const TrackState& state() const noexcept { return state_; }
  const std::vector<TrackOutput>& history() const noexcept { return history_; }

private:
  const IqBuffer<T>* samples_;
  TrackState state_;
  TrackConfig config_;
  std::size_t block_ = 0;
  std::size_t epochs_ = 0;
  detail::EplPass pending_;
  std::vector<TrackOutput> history_;
};

struct TrackRun {
  std::vector<TrackState> final_states;
  std::vector<std::vector<TrackOutput>> histories;
  PipelineReport report;
};

/// Tracks every channel through the buffer on the epoch engine: phase 1
/// correlates, phase 2 closes the loops.
template <Real T>
TrackRun track_all(const IqBuffer<T>& samples, std::span<const TrackState> initial, const TrackConfig& config,
                      const ExecPlan& plan, std::size_t max_epochs, ExecTrace* trace = nullptr) {
  if (initial.empty()) throw InvalidInput("track_all: no channels");
  std::vector<TrackingChannel<T>> channels;
  channels.reserve(initial.size());
  for (const auto& s : initial) channels.emplace_back(samples, s, config, max_epochs);
  std::vector<EpochTask> tasks(channels.size());
  for (std::size_t i = 0; i < channels.size(); ++i) {
    tasks[i].channel_id = static_cast<std::size_t>(initial[i].prn);
    tasks[i].phase1 = [&channels, i] { channels[i].correlate(); };
    tasks[i].phase2 = [&channels, i] { return channels[i].update(); };
  }
  TrackRun run;
  run.report = run_epochs(tasks, plan, trace);
  for (auto& c : channels) {
    run.final_states.push_back(c.state());
    run.histories.push_back(c.history());
  }
  return run;
}

}  // namespace gnssrx
