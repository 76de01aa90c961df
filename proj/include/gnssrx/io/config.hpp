#pragma once

// Run configuration files: `key = value` lines, `#` comments.
//
//   key                 default        meaning
//   prns                1-8            satellites to search (and to synthesize when no input is given)
//   doppler_min_hz      -5000
//   doppler_max_hz      5000
//   doppler_step_hz     2/(3·T)        T = coherent integration time
//   coherent_ms         1
//   noncoherent_rounds  10
//   threshold           2.5            peak-to-second-peak detection threshold
//   workers             1
//   schedule            dynamic        static | dynamic
//   priority            normal         normal | high
//   precision           single         single | double
//   seed                1              scenario synthesis seed
//   duration_s          0.1            synthesized scenario length
//   sample_rate_hz      8184000        synthesized scenario sample rate
//   cn0_dbhz            45             synthesized scenario carrier-to-noise density
//   min_iterations      64             shortest loop sent to the accelerated kernel path
//
// Unknown keys are rejected.

#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gnssrx/acquisition.hpp"
#include "gnssrx/dsp/types.hpp"
#include "gnssrx/error.hpp"
#include "gnssrx/exec/pipeline.hpp"
#include "gnssrx/io/text.hpp"
#include "gnssrx/signal/ca_code.hpp"
#include "gnssrx/signal/synthesis.hpp"

namespace gnssrx::io {

struct RunConfig {
  std::vector<int> prns{1, 2, 3, 4, 5, 6, 7, 8};
  double doppler_min_hz = -5000.0;
  double doppler_max_hz = 5000.0;
  std::optional<double> doppler_step_hz;
  int coherent_ms = 1;
  int noncoherent_rounds = 10;
  double threshold = 2.5;
  std::size_t workers = 1;
  Schedule schedule = Schedule::Dynamic;
  PriorityHint priority = PriorityHint::Normal;
  Precision precision = Precision::Single;
  std::uint64_t seed = 1;
  double duration_s = 0.1;
  double sample_rate_hz = 8.184e6;
  double cn0_dbhz = 45.0;
  std::size_t min_iterations = 64;
};

inline Schedule parse_schedule(std::string_view s) {
  if (s == "static") return Schedule::Static;
  if (s == "dynamic") return Schedule::Dynamic;
  throw InvalidConfig("schedule must be static or dynamic, got '" + std::string(s) + "'");
}

inline PriorityHint parse_priority(std::string_view s) {
  if (s == "normal") return PriorityHint::Normal;
  if (s == "high") return PriorityHint::High;
  throw InvalidConfig("priority must be normal or high, got '" + std::string(s) + "'");
}

inline Precision parse_precision(std::string_view s) {
  if (s == "single") return Precision::Single;
  if (s == "double") return Precision::Double;
  throw InvalidConfig("precision must be single or double, got '" + std::string(s) + "'");
}

inline AcqConfig acquisition_config(const RunConfig& rc) {
  AcqConfig c = AcqConfig::for_coherent_ms(rc.coherent_ms, rc.noncoherent_rounds);
  c.doppler_min_hz = rc.doppler_min_hz;
  c.doppler_max_hz = rc.doppler_max_hz;
  if (rc.doppler_step_hz) c.doppler_step_hz = *rc.doppler_step_hz;
  c.detection_threshold = rc.threshold;
  c.compute.min_iterations = rc.min_iterations;
  return c;
}

inline ExecPlan exec_plan(const RunConfig& rc) {
  ExecPlan p;
  p.worker_count = rc.workers;
  p.schedule = rc.schedule;
  p.priority = rc.priority;
  return p;
}

inline void validate(const RunConfig& rc) {
  if (rc.prns.empty()) throw InvalidConfig("prns must not be empty");
  for (int prn : rc.prns)
    if (prn < 1 || prn > kMaxPrn) throw InvalidConfig("prn " + std::to_string(prn) + " out of range 1-32");
  if (rc.workers < 1) throw InvalidConfig("workers must be >= 1");
  if (!(rc.duration_s > 0.0)) throw InvalidConfig("duration_s must be positive");
  if (!(rc.sample_rate_hz > 0.0)) throw InvalidConfig("sample_rate_hz must be positive");
  validate(acquisition_config(rc));
}

/// Applies the keys in `text` on top of `base`.
inline RunConfig parse_run_config(std::string_view text, RunConfig base = {}) {
  std::vector<KeyValue> entries;
  try {
    entries = parse_key_values(text);
  } catch (const FormatError& e) {
    throw InvalidConfig(std::string("config ") + e.what());
  }
  RunConfig rc = std::move(base);
  for (const auto& [key, value, line] : entries) {
    try {
      if (key == "prns") rc.prns = parse_integer_list<int>(value, key);
      else if (key == "doppler_min_hz") rc.doppler_min_hz = parse_number(value, key);
      else if (key == "doppler_max_hz") rc.doppler_max_hz = parse_number(value, key);
      else if (key == "doppler_step_hz") rc.doppler_step_hz = parse_number(value, key);
      else if (key == "coherent_ms") rc.coherent_ms = parse_integer<int>(value, key);
      else if (key == "noncoherent_rounds") rc.noncoherent_rounds = parse_integer<int>(value, key);
      else if (key == "threshold") rc.threshold = parse_number(value, key);
      else if (key == "workers") rc.workers = parse_integer<std::size_t>(value, key);
      else if (key == "schedule") rc.schedule = parse_schedule(value);
      else if (key == "priority") rc.priority = parse_priority(value);
      else if (key == "precision") rc.precision = parse_precision(value);
      else if (key == "seed") rc.seed = parse_integer<std::uint64_t>(value, key);
      else if (key == "duration_s") rc.duration_s = parse_number(value, key);
      else if (key == "sample_rate_hz") rc.sample_rate_hz = parse_number(value, key);
      else if (key == "cn0_dbhz") rc.cn0_dbhz = parse_number(value, key);
      else if (key == "min_iterations") rc.min_iterations = parse_integer<std::size_t>(value, key);
      else throw InvalidConfig("unknown key '" + key + "'");
    } catch (const std::exception& e) {
      throw InvalidConfig("config line " + std::to_string(line) + ": " + e.what());
    }
  }
  validate(rc);
  return rc;
}

inline std::string format_run_config(const RunConfig& rc) {
  std::ostringstream out;
  out << "prns = ";
  for (std::size_t i = 0; i < rc.prns.size(); ++i) out << (i ? "," : "") << rc.prns[i];
  out << "\ndoppler_min_hz = " << format_number(rc.doppler_min_hz)
      << "\ndoppler_max_hz = " << format_number(rc.doppler_max_hz);
  if (rc.doppler_step_hz) out << "\ndoppler_step_hz = " << format_number(*rc.doppler_step_hz);
  out << "\ncoherent_ms = " << rc.coherent_ms << "\nnoncoherent_rounds = " << rc.noncoherent_rounds
      << "\nthreshold = " << format_number(rc.threshold) << "\nworkers = " << rc.workers
      << "\nschedule = " << (rc.schedule == Schedule::Static ? "static" : "dynamic")
      << "\npriority = " << (rc.priority == PriorityHint::High ? "high" : "normal")
      << "\nprecision = " << (rc.precision == Precision::Double ? "double" : "single") << "\nseed = " << rc.seed
      << "\nduration_s = " << format_number(rc.duration_s) << "\nsample_rate_hz = " << format_number(rc.sample_rate_hz)
      << "\ncn0_dbhz = " << format_number(rc.cn0_dbhz) << "\nmin_iterations = " << rc.min_iterations << '\n';
  return out.str();
}

/// The satellites a config describes when no recording is supplied: every
/// PRN in `prns` with a seeded Doppler (inside the search range, 500 Hz from
/// its edges when it is wide enough), integer code phase and carrier phase,
/// at unit amplitude.
inline std::vector<SignalSpec> scenario_specs(const RunConfig& rc) {
  validate(rc);
  std::mt19937_64 rng(rc.seed);
  auto uniform = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  const double margin = rc.doppler_max_hz - rc.doppler_min_hz > 2000.0 ? 500.0 : 0.0;
  const double lo = rc.doppler_min_hz + margin, hi = rc.doppler_max_hz - margin;
  const std::size_t period = samples_per_code_period(rc.sample_rate_hz);
  std::vector<SignalSpec> specs;
  for (int prn : rc.prns) {
    SignalSpec s;
    s.prn = prn;
    s.doppler_hz = lo + uniform() * (hi - lo);
    s.code_phase_samples = static_cast<double>(rng() % period);
    s.carrier_phase_cycles = uniform();
    s.sample_rate_hz = rc.sample_rate_hz;
    s.duration_s = rc.duration_s;
    specs.push_back(s);
  }
  return specs;
}

}  // namespace gnssrx::io
