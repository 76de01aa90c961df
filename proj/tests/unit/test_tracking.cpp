#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "gnssrx/tracking.hpp"

using namespace gnssrx;

namespace {

SignalSpec spec_for(int prn, double doppler, double code_phase, double fs, double duration, double carrier_phase = 0.0) {
  SignalSpec s;
  s.prn = prn;
  s.doppler_hz = doppler;
  s.code_phase_samples = code_phase;
  s.sample_rate_hz = fs;
  s.duration_s = duration;
  s.carrier_phase_cycles = carrier_phase;
  return s;
}

// Replica state matching the generated signal exactly at sample 0, shifted by
// `code_error` chips (positive: replica behind the received code) and
// `freq_error` Hz.
TrackState truth_state(const SignalSpec& s, double code_error = 0.0, double freq_error = 0.0) {
  TrackState st;
  st.prn = s.prn;
  st.sample_rate_hz = s.sample_rate_hz;
  st.code_phase_chips = wrap_phase(initial_code_phase_chips(s) - code_error, 1023.0);
  st.carrier_phase_cycles = wrap_phase(s.carrier_phase_cycles, 1.0);
  st.doppler_hz = st.carrier_nco_hz = st.reference_doppler_hz = s.doppler_hz + freq_error;
  st.code_rate_hz = doppler_code_rate(s.doppler_hz + freq_error);
  return st;
}

// Received code phase after `samples` samples.
double true_code_phase(const SignalSpec& s, std::size_t samples) {
  return wrap_phase(initial_code_phase_chips(s) + static_cast<double>(samples) * doppler_code_rate(s.doppler_hz) / s.sample_rate_hz,
                    1023.0);
}

template <class T>
EpochResult run(const IqBuffer<T>& sig, TrackState st, const TrackConfig& tc, int epochs,
                std::vector<TrackOutput>* history = nullptr) {
  const std::size_t n = samples_per_epoch(sig.sample_rate_hz(), tc);
  EpochResult r{st, {}};
  for (int e = 0; e < epochs; ++e) {
    r = track_epoch(sig.slice(e * n, n), r.state, tc);
    if (history) history->push_back(r.output);
  }
  return r;
}

TrackOutput correlators(double ie, double qe, double ip, double qp, double il, double ql) {
  TrackOutput o;
  o.ie = ie, o.qe = qe, o.ip = ip, o.qp = qp, o.il = il, o.ql = ql;
  return o;
}

}  // namespace

TEST(TrackConfig, Validation) {
  EXPECT_NO_THROW(validate(TrackConfig{}));
  TrackConfig c;
  c.correlator_spacing_chips = 1.5;
  EXPECT_THROW(validate(c), InvalidConfig);
  c = {};
  c.correlator_spacing_chips = 0.0;
  EXPECT_THROW(validate(c), InvalidConfig);
  c = {};
  c.pll_bandwidth_hz = 300.0;
  EXPECT_THROW(validate(c), InvalidConfig);
  c = {};
  c.dll_bandwidth_hz = -1.0;
  EXPECT_THROW(validate(c), InvalidConfig);
  c = {};
  c.integration_ms = 0;
  EXPECT_THROW(validate(c), InvalidConfig);
}

TEST(LoopFilter, ZeroErrorIsQuiet) {
  LoopFilterState s;
  for (int i = 0; i < 10; ++i) {
    const auto out = loop_filter(0.0, s, 15.0, 1e-3);
    EXPECT_EQ(out.correction, 0.0);
    EXPECT_EQ(out.state, s);
    s = out.state;
  }
}

TEST(LoopFilter, GainFormula) {
  const double bn = 10.0, t = 1e-3, e = 0.02;
  const double w0 = bn / 0.53;
  const auto out = loop_filter(e, {}, bn, t);
  EXPECT_NEAR(out.state.integrator, w0 * w0 * t * e, 1e-15);
  EXPECT_NEAR(out.correction, w0 * w0 * t * e + 2.0 * 0.707 * w0 * e, 1e-12);
  EXPECT_GT(std::abs(loop_filter(e, {}, 2 * bn, t).correction), std::abs(out.correction));
}

TEST(LoopFilter, ConstantPhaseOffsetIsCancelled) {
  // Closed loop: phase error driven by a frequency offset the filter has to learn.
  const double t = 1e-3, offset_hz = 20.0;
  double phase = 0.0, freq = 0.0;
  LoopFilterState s;
  for (int i = 0; i < 2000; ++i) {
    phase += (offset_hz - freq) * t;
    const auto out = loop_filter(phase, s, 15.0, t);
    s = out.state;
    freq = out.correction;
  }
  EXPECT_NEAR(freq, offset_hz, 1e-3);
  EXPECT_NEAR(phase, 0.0, 1e-4);
  EXPECT_GT(s.integrator, 0.0);
}

TEST(LoopFilter, StabilityGuard) {
  EXPECT_THROW(loop_filter(0.1, {}, 250.0, 1e-3), InvalidConfig);
  EXPECT_THROW(loop_filter(0.1, {}, 30.0, 10e-3), InvalidConfig);
  EXPECT_NO_THROW(loop_filter(0.1, {}, 24.0, 10e-3));
}

TEST(Discriminators, DllSymmetryAndDegenerate) {
  EXPECT_EQ(dll_discriminator(correlators(3, 4, 10, 0, 4, 3)), 0.0);
  EXPECT_GT(dll_discriminator(correlators(6, 0, 10, 0, 4, 0)), 0.0);
  EXPECT_LT(dll_discriminator(correlators(4, 0, 10, 0, 6, 0)), 0.0);
  EXPECT_THROW(dll_discriminator(correlators(0, 0, 1, 0, 0, 0)), DegenerateInput);
}

TEST(Discriminators, PllCostas) {
  EXPECT_EQ(pll_discriminator(correlators(0, 0, 5, 0, 0, 0)), 0.0);
  const auto a = correlators(0, 0, 3, 1, 0, 0);
  const auto b = correlators(0, 0, -3, -1, 0, 0);
  EXPECT_EQ(pll_discriminator(a), pll_discriminator(b));
  EXPECT_NEAR(pll_discriminator(a), std::atan(1.0 / 3.0) / (2 * std::numbers::pi), 1e-15);
  EXPECT_THROW(pll_discriminator(correlators(1, 1, 0, 0, 1, 1)), DegenerateInput);
}

TEST(Discriminators, FllRotation) {
  const double t = 1e-3, f = 37.0;
  const std::complex<double> p0(2.0, 0.5);
  const auto p1 = p0 * std::polar(1.0, 2.0 * std::numbers::pi * f * t);
  EXPECT_NEAR(fll_discriminator(p0, p1, t), f, 1e-9);
  EXPECT_NEAR(fll_discriminator(p1, p0, t), -f, 1e-9);
}

TEST(InitFromAcquisition, UnitConversion) {
  AcqResult acq;
  acq.prn = 4;
  acq.detected = true;
  acq.doppler_hz = 1000.0;
  acq.code_phase_samples = 0;
  const auto s = init_from_acquisition(acq, 8.184e6);
  EXPECT_EQ(s.doppler_hz, 1000.0);
  EXPECT_EQ(s.code_phase_chips, 0.0625);  // half a sample at 8 samples per chip
  EXPECT_EQ(s.epoch, 0u);
  EXPECT_EQ(s.dll_filter, LoopFilterState{});
  EXPECT_EQ(s.pll_filter, LoopFilterState{});
  EXPECT_EQ(s.code_rate_hz, doppler_code_rate(1000.0));
}

TEST(InitFromAcquisition, WholeCodePeriodsWrap) {
  AcqResult acq;
  acq.prn = 1;
  acq.detected = true;
  for (std::size_t k = 0; k < 5; ++k) {
    acq.code_phase_samples = 8184 * k;
    EXPECT_NEAR(init_from_acquisition(acq, 8.184e6).code_phase_chips, 0.0625, 1e-9) << k;
  }
  acq.code_phase_samples = 8;  // one chip of delay → replica starts in chip 1022
  EXPECT_NEAR(init_from_acquisition(acq, 8.184e6).code_phase_chips, 1022.0625, 1e-9);
}

TEST(InitFromAcquisition, RejectsUndetected) {
  AcqResult acq;
  acq.prn = 1;
  EXPECT_THROW(init_from_acquisition(acq, 8.184e6), InvalidInput);
}

TEST(InitFromAcquisition, MatchesSynthesisConvention) {
  const auto s = spec_for(3, 0.0, 4000, 8.184e6, 1e-3);
  AcqResult acq;
  acq.prn = 3;
  acq.detected = true;
  acq.code_phase_samples = 4000;
  EXPECT_NEAR(init_from_acquisition(acq, 8.184e6).code_phase_chips, initial_code_phase_chips(s), 1e-9);
}

TEST(EplCorrelate, AlignedNoiseFree) {
  const auto s = spec_for(7, 0.0, 1000, 8.184e6, 1e-3);
  const auto sig = synthesize_signal<double>(s);
  const auto out = epl_correlate(sig, truth_state(s), TrackConfig{});
  EXPECT_NEAR(out.ip / 8184.0, 1.0, 1e-3);
  EXPECT_NEAR(out.qp / 8184.0, 0.0, 1e-3);
  const double e = std::hypot(out.ie, out.qe), l = std::hypot(out.il, out.ql);
  EXPECT_NEAR(e / l, 1.0, 1e-3);
  EXPECT_GT(std::abs(out.ip), 100 * std::abs(out.qp) + 1);
}

TEST(EplCorrelate, QuarterChipLateReplica) {
  const auto s = spec_for(7, 500.0, 1000, 8.184e6, 1e-3);
  const auto sig = synthesize_signal<double>(s);
  const auto out = epl_correlate(sig, truth_state(s, +0.25), TrackConfig{});
  const double e = out.ie * out.ie + out.qe * out.qe, l = out.il * out.il + out.ql * out.ql;
  EXPECT_GT(e, l);
  EXPECT_GT(dll_discriminator(out), 0.0);
  EXPECT_LT(dll_discriminator(epl_correlate(sig, truth_state(s, -0.25), TrackConfig{})), 0.0);
}

TEST(EplCorrelate, HalfChipPromptPowerQuarter) {
  const auto s = spec_for(19, 0.0, 2500, 8.184e6, 1e-3);
  const auto sig = synthesize_signal<double>(s);
  const auto aligned = epl_correlate(sig, truth_state(s), TrackConfig{});
  for (double off : {0.5, -0.5}) {
    const auto shifted = epl_correlate(sig, truth_state(s, off), TrackConfig{});
    const double ratio = (shifted.ip * shifted.ip + shifted.qp * shifted.qp) / (aligned.ip * aligned.ip + aligned.qp * aligned.qp);
    const double expected = (1.0 - 0.5) * (1.0 - 0.5);
    EXPECT_NEAR(ratio, expected, 0.1 * expected) << off;
  }
}

TEST(EplCorrelate, DllMonotoneOverQuarterChip) {
  // 5 MHz is not a multiple of the chip rate, so sub-sample offsets all register.
  const auto s = spec_for(23, -1200.0, 3001, 5e6, 1e-3);
  const auto sig = synthesize_signal<double>(s);
  double previous = -1e9;
  for (int i = 0; i <= 10; ++i) {
    const double off = -0.25 + 0.05 * i;
    const double d = dll_discriminator(epl_correlate(sig, truth_state(s, off), TrackConfig{}));
    EXPECT_GT(d, previous) << off;
    EXPECT_EQ(d > 0, off > 1e-12) << off;
    previous = d;
  }
}

TEST(EplCorrelate, PhaseErrorInjection) {
  const auto s = spec_for(14, 0.0, 321, 8.184e6, 1e-3, 0.05);
  const auto sig = synthesize_signal<double>(s);
  auto st = truth_state(s);
  st.carrier_phase_cycles = 0.0;
  EXPECT_NEAR(pll_discriminator(epl_correlate(sig, st, TrackConfig{})), 0.05, 0.005);
  st.carrier_phase_cycles = 0.1;
  EXPECT_NEAR(pll_discriminator(epl_correlate(sig, st, TrackConfig{})), -0.05, 0.005);
}

TEST(EplCorrelate, WrongBlockLength) {
  const auto s = spec_for(1, 0.0, 0, 8.184e6, 2e-3);
  const auto sig = synthesize_signal<float>(s);
  EXPECT_THROW(epl_correlate(sig, truth_state(s), TrackConfig{}), InvalidInput);
  EXPECT_THROW(epl_correlate(sig.slice(0, 8183), truth_state(s), TrackConfig{}), InvalidInput);
}

TEST(EplCorrelate, MultiplicationAccounting) {
  TrackConfig tc;
  tc.integration_ms = 10;
  const auto s = spec_for(2, 0.0, 0, 8.184e6, 10e-3);
  const auto out = epl_correlate(synthesize_signal<float>(s), truth_state(s), tc);
  EXPECT_EQ(out.full_shift_multiplications, 6697785600ULL);
  EXPECT_EQ(out.multiplications, 4ULL * 81840ULL);
}

TEST(TrackEpoch, PerfectStartStaysLocked) {
  for (double fs : {8.184e6, 5e6}) {
    const auto s = spec_for(11, 2345.0, 777, fs, 10e-3, 0.3);
    const auto sig = synthesize_signal<double>(s);
    const auto r = run(sig, truth_state(s), TrackConfig{}, 10);
    const std::size_t consumed = 10 * samples_per_epoch(fs, TrackConfig{});
    EXPECT_LT(std::abs(wrap_signed(r.state.code_phase_chips - true_code_phase(s, consumed), 1023.0)), 0.01) << fs;
    EXPECT_LT(std::abs(r.state.doppler_hz - s.doppler_hz), 1.0) << fs;
    EXPECT_EQ(r.state.epoch, 10u);
  }
}

TEST(TrackEpoch, PullsInHalfChipAnd200Hz) {
  const double fs = 5e6;
  for (double dop : {-4321.0, 0.0, 3210.0}) {
    for (double ce : {-0.5, 0.5}) {
      for (double fe : {-200.0, 200.0}) {
        const auto s = spec_for(11, dop, 1234, fs, 50e-3, 0.6);
        const auto sig = synthesize_signal<double>(s);
        const auto r = run(sig, truth_state(s, ce, fe), TrackConfig{}, 50);
        const std::size_t consumed = 50 * samples_per_epoch(fs, TrackConfig{});
        const double code_err = wrap_signed(r.state.code_phase_chips - true_code_phase(s, consumed), 1023.0);
        EXPECT_LT(std::abs(code_err), 0.05) << dop << " " << ce << " " << fe;
        EXPECT_LT(std::abs(r.state.doppler_hz - dop), 5.0) << dop << " " << ce << " " << fe;
      }
    }
  }
}

TEST(TrackEpoch, NoTransformsOnTrackingPath) {
  const auto s = spec_for(5, 800.0, 100, 8.184e6, 20e-3);
  const auto sig = synthesize_signal<float>(s);
  const auto before = thread_transform_dispatch_count();
  (void)run(sig, truth_state(s), TrackConfig{}, 20);
  EXPECT_EQ(thread_transform_dispatch_count(), before);
}

TEST(TrackEpoch, Deterministic) {
  SignalSpec s = spec_for(8, -900.0, 4321, 8.184e6, 5e-3);
  s.noise_sigma = 3.0;
  s.seed = 12;
  const auto sig = synthesize_signal<float>(s);
  const auto st = truth_state(s, 0.1, 30.0);
  const auto a = track_epoch(sig.slice(0, 8184), st, TrackConfig{});
  const auto b = track_epoch(sig.slice(0, 8184), st, TrackConfig{});
  EXPECT_EQ(a.state, b.state);
  EXPECT_EQ(a.output, b.output);
}

TEST(TrackEpoch, LockMetricSeparatesSignalFromNoise) {
  const double fs = 8.184e6;
  const double sigma = noise_sigma_for_cn0(45.0, fs);
  const TrackConfig tc;
  double noise_sum = 0.0, signal_sum = 0.0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    SignalSpec s = spec_for(1 + static_cast<int>(seed % 32), -3000.0 + 97.0 * seed, static_cast<double>(seed * 131 % 8184), fs,
                            40e-3, 0.01 * seed);
    s.noise_sigma = sigma;
    s.seed = seed;
    const auto sig = synthesize_signal<float>(s);
    signal_sum += run(sig, truth_state(s), tc, 40).output.lock_metric;
    s.amplitude = 0.0;
    const auto noise = synthesize_signal<float>(s);
    noise_sum += run(noise, truth_state(s), tc, 40).output.lock_metric;
  }
  const double aligned = signal_sum / 50, noise = noise_sum / 50;
  EXPECT_GT(aligned, 0.8);
  EXPECT_LE(5.0 * noise, aligned) << "noise " << noise << " aligned " << aligned;
}

TEST(TrackAll, WorkerCountDoesNotChangeResults) {
  std::vector<SignalSpec> sats;
  std::vector<TrackState> init;
  for (int i = 0; i < 6; ++i) {
    auto s = spec_for(3 * i + 2, -2500.0 + 1000.0 * i, 1100.0 * i + 5, 8.184e6, 30e-3);
    sats.push_back(s);
    init.push_back(truth_state(s, 0.2, 80.0));
  }
  const auto sig = synthesize_composite<float>(sats, noise_sigma_for_cn0(48.0, 8.184e6), 5);
  const TrackConfig tc;
  ExecPlan one;
  ExecPlan four;
  four.worker_count = 4;
  four.schedule = Schedule::Static;
  const auto a = track_all(sig, std::span<const TrackState>(init), tc, one, 25);
  const auto b = track_all(sig, std::span<const TrackState>(init), tc, four, 25);
  EXPECT_EQ(a.final_states, b.final_states);
  EXPECT_EQ(a.histories, b.histories);
  EXPECT_EQ(a.report.epochs, 25u);
  // Sequential reference
  for (std::size_t i = 0; i < init.size(); ++i) {
    std::vector<TrackOutput> h;
    const auto r = run(sig, init[i], tc, 25, &h);
    EXPECT_EQ(r.state, a.final_states[i]);
    EXPECT_EQ(h, a.histories[i]);
  }
}

TEST(TrackAll, StopsAtEndOfBuffer) {
  const auto s = spec_for(1, 0.0, 0, 8.184e6, 7.5e-3);
  const auto sig = synthesize_signal<float>(s);
  const std::vector<TrackState> init{truth_state(s)};
  const auto r = track_all(sig, std::span<const TrackState>(init), TrackConfig{}, ExecPlan{}, 100);
  EXPECT_EQ(r.histories[0].size(), 7u);
  EXPECT_EQ(r.final_states[0].epoch, 7u);
}
