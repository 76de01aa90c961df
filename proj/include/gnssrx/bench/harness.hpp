#pragma once

// Multi-instance throughput measurement.
//
// A cell (N instances, M workers) launches N copies of a workload at once,
// each running with M workers, and records every instance's start and end on
// the system-wide monotonic clock. The makespan is last end minus first
// start; the effective running time is makespan / N.

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <exception>
#include <functional>
#include <latch>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include "gnssrx/acquisition.hpp"
#include "gnssrx/dsp.hpp"
#include "gnssrx/error.hpp"
#include "gnssrx/exec/pipeline.hpp"
#include "gnssrx/signal/synthesis.hpp"

namespace gnssrx::bench {

enum class Isolation { Process, InProcess };

/// Runs one instance of the measured work with the given worker count.
/// Must be deterministic and must not depend on state shared with other
/// instances.
using Workload = std::function<void(std::size_t workers)>;

struct BenchConfig {
  std::vector<std::size_t> instance_counts{1};
  std::vector<std::size_t> worker_counts{1};
  std::size_t repetitions = 5;
  Workload workload;
  Isolation isolation = Isolation::Process;
  std::uint64_t memory_per_instance_bytes = 0;  // 0 disables the memory guard
  double saturation_epsilon = 0.05;
};

inline void validate(const BenchConfig& c) {
  if (c.instance_counts.empty() || c.worker_counts.empty())
    throw InvalidConfig("BenchConfig: instance and worker count lists must be non-empty");
  for (auto n : c.instance_counts)
    if (n == 0) throw InvalidConfig("BenchConfig: instance counts must be >= 1");
  for (auto m : c.worker_counts)
    if (m == 0) throw InvalidConfig("BenchConfig: worker counts must be >= 1");
  if (c.repetitions == 0) throw InvalidConfig("BenchConfig: repetitions must be >= 1");
  if (!c.workload) throw InvalidConfig("BenchConfig: no workload");
  if (!(c.saturation_epsilon > 0.0)) throw InvalidConfig("BenchConfig: saturation epsilon must be positive");
}

inline std::int64_t monotonic_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

inline double effective_running_time(double makespan_s, std::size_t n) {
  if (n == 0) throw InvalidInput("effective_running_time: n must be >= 1");
  if (!(makespan_s >= 0.0)) throw InvalidInput("effective_running_time: makespan must be non-negative");
  return makespan_s / static_cast<double>(n);
}

struct InstanceTiming {
  std::int64_t start_ns = 0;
  std::int64_t end_ns = 0;
  long pid = 0;

  double wall_s() const { return static_cast<double>(end_ns - start_ns) * 1e-9; }
};

struct RepetitionResult {
  std::vector<InstanceTiming> instances;
  double makespan_s = std::numeric_limits<double>::quiet_NaN();
  double ert_s = std::numeric_limits<double>::quiet_NaN();
  double launch_skew_s = std::numeric_limits<double>::quiet_NaN();  // last start − first start
  bool failed = false;
  std::string cause;
};

struct CellResult {
  std::size_t n_instances = 0;
  std::size_t workers = 0;
  std::vector<RepetitionResult> repetitions;
  std::size_t median_repetition = 0;  // index of the lower-median repetition by makespan
  double makespan_s = std::numeric_limits<double>::quiet_NaN();
  double ert_s = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> per_instance_s;
  double launch_skew_s = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
  std::string cause;
};

struct HostInfo {
  unsigned cores = 0;
  std::uint64_t total_memory_bytes = 0;
  std::uint64_t available_memory_bytes = 0;
};

inline HostInfo host_info() {
  HostInfo h;
  h.cores = std::max(1u, std::thread::hardware_concurrency());
  const long page = sysconf(_SC_PAGESIZE);
  const long total = sysconf(_SC_PHYS_PAGES);
  const long avail = sysconf(_SC_AVPHYS_PAGES);
  if (page > 0 && total > 0) h.total_memory_bytes = static_cast<std::uint64_t>(page) * static_cast<std::uint64_t>(total);
  if (page > 0 && avail > 0) h.available_memory_bytes = static_cast<std::uint64_t>(page) * static_cast<std::uint64_t>(avail);
  return h;
}

struct EffectiveRunReport {
  std::vector<CellResult> grid;
  std::optional<std::size_t> saturation_n;
  std::size_t saturation_workers = 0;  // worker count whose curve was searched
  HostInfo environment;

  const CellResult* find(std::size_t n, std::size_t workers) const {
    for (const auto& c : grid)
      if (c.n_instances == n && c.workers == workers) return &c;
    return nullptr;
  }
};

/// Smallest n whose relative improvement to the next point is below epsilon;
/// empty when every step improves by at least epsilon.
inline std::optional<std::size_t> detect_saturation(const std::vector<std::pair<std::size_t, double>>& curve,
                                                    double epsilon = 0.05) {
  if (curve.size() < 2) throw InvalidInput("detect_saturation: need at least two points");
  if (!(epsilon > 0.0)) throw InvalidInput("detect_saturation: epsilon must be positive");
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (!(curve[i].second > 0.0) || !std::isfinite(curve[i].second))
      throw InvalidInput("detect_saturation: running times must be positive and finite");
    if (i > 0 && curve[i].first <= curve[i - 1].first)
      throw InvalidInput("detect_saturation: curve must be strictly increasing in n");
  }
  for (std::size_t i = 0; i + 1 < curve.size(); ++i) {
    const double improvement = (curve[i].second - curve[i + 1].second) / curve[i].second;
    if (improvement < epsilon) return curve[i].first;
  }
  return std::nullopt;
}

namespace detail {

inline void finish_repetition(RepetitionResult& rep, std::size_t n) {
  if (rep.failed) return;
  std::int64_t first_start = std::numeric_limits<std::int64_t>::max();
  std::int64_t last_start = std::numeric_limits<std::int64_t>::min();
  std::int64_t last_end = std::numeric_limits<std::int64_t>::min();
  for (const auto& t : rep.instances) {
    if (t.end_ns < t.start_ns) throw InternalError("run_bench: instance finished before it started");
    first_start = std::min(first_start, t.start_ns);
    last_start = std::max(last_start, t.start_ns);
    last_end = std::max(last_end, t.end_ns);
  }
  rep.makespan_s = static_cast<double>(last_end - first_start) * 1e-9;
  rep.ert_s = effective_running_time(rep.makespan_s, n);
  rep.launch_skew_s = static_cast<double>(last_start - first_start) * 1e-9;
}

inline bool read_exact(int fd, void* buf, std::size_t len) {
  auto* p = static_cast<char*>(buf);
  while (len > 0) {
    const ssize_t r = ::read(fd, p, len);
    if (r < 0 && errno == EINTR) continue;
    if (r <= 0) return false;
    p += r;
    len -= static_cast<std::size_t>(r);
  }
  return true;
}

inline bool write_exact(int fd, const void* buf, std::size_t len) {
  const auto* p = static_cast<const char*>(buf);
  while (len > 0) {
    const ssize_t r = ::write(fd, p, len);
    if (r < 0 && errno == EINTR) continue;
    if (r <= 0) return false;
    p += r;
    len -= static_cast<std::size_t>(r);
  }
  return true;
}

// Children block on a shared "go" pipe until the parent closes its write
// end, which releases all of them at once.
inline RepetitionResult launch_processes(std::size_t n, std::size_t workers, const Workload& workload) {
  RepetitionResult rep;
  int go[2];
  if (::pipe(go) != 0) {
    rep.failed = true;
    rep.cause = std::string("pipe failed: ") + std::strerror(errno);
    return rep;
  }
  struct Child {
    pid_t pid;
    int fd;
  };
  std::vector<Child> children;
  for (std::size_t i = 0; i < n; ++i) {
    int res[2];
    if (::pipe(res) != 0) {
      rep.failed = true;
      rep.cause = std::string("pipe failed: ") + std::strerror(errno);
      break;
    }
    const pid_t pid = ::fork();
    if (pid < 0) {
      rep.failed = true;
      rep.cause = std::string("fork failed: ") + std::strerror(errno);
      ::close(res[0]);
      ::close(res[1]);
      break;
    }
    if (pid == 0) {
      ::close(go[1]);
      ::close(res[0]);
      char c;
      while (::read(go[0], &c, 1) < 0 && errno == EINTR) {
      }
      std::int64_t record[3];
      record[0] = monotonic_ns();
      try {
        workload(workers);
      } catch (...) {
        ::_exit(70);
      }
      record[1] = monotonic_ns();
      record[2] = static_cast<std::int64_t>(::getpid());
      ::_exit(write_exact(res[1], record, sizeof record) ? 0 : 71);
    }
    ::close(res[1]);
    children.push_back({pid, res[0]});
  }
  ::close(go[0]);
  ::close(go[1]);

  for (const auto& child : children) {
    std::int64_t record[3] = {0, 0, 0};
    const bool got = read_exact(child.fd, record, sizeof record);
    ::close(child.fd);
    int status = 0;
    while (::waitpid(child.pid, &status, 0) < 0 && errno == EINTR) {
    }
    if (WIFSIGNALED(status)) {
      if (!rep.failed) rep.cause = "instance killed by signal " + std::to_string(WTERMSIG(status));
      rep.failed = true;
    } else if (!WIFEXITED(status) || WEXITSTATUS(status) != 0 || !got) {
      if (!rep.failed) {
        rep.cause = WIFEXITED(status) && WEXITSTATUS(status) == 70
                        ? std::string("instance workload threw")
                        : "instance exited with status " + std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1);
      }
      rep.failed = true;
    } else {
      rep.instances.push_back({record[0], record[1], static_cast<long>(record[2])});
    }
  }
  return rep;
}

inline RepetitionResult launch_threads(std::size_t n, std::size_t workers, const Workload& workload) {
  RepetitionResult rep;
  rep.instances.resize(n);
  std::vector<std::string> errors(n);
  std::latch ready(static_cast<std::ptrdiff_t>(n) + 1);
  std::vector<std::thread> threads;
  threads.reserve(n);
  try {
    for (std::size_t i = 0; i < n; ++i) {
      threads.emplace_back([&, i] {
        ready.arrive_and_wait();
        rep.instances[i].pid = static_cast<long>(::getpid());
        rep.instances[i].start_ns = monotonic_ns();
        try {
          workload(workers);
        } catch (const std::exception& e) {
          errors[i] = e.what();
        } catch (...) {
          errors[i] = "unknown exception";
        }
        rep.instances[i].end_ns = monotonic_ns();
      });
    }
  } catch (const std::system_error& e) {
    // Release the threads that did start, then report the cell as failed.
    for (std::size_t i = threads.size(); i < n; ++i) ready.count_down();
    ready.arrive_and_wait();
    for (auto& t : threads) t.join();
    rep.failed = true;
    rep.cause = std::string("thread creation failed: ") + e.what();
    rep.instances.clear();
    return rep;
  }
  ready.arrive_and_wait();
  for (auto& t : threads) t.join();
  for (const auto& e : errors) {
    if (!e.empty()) {
      rep.failed = true;
      rep.cause = "instance workload threw: " + e;
      rep.instances.clear();
      break;
    }
  }
  return rep;
}

}  // namespace detail

/// One simultaneous launch of n instances.
inline RepetitionResult run_instances(std::size_t n, std::size_t workers, const Workload& workload, Isolation isolation) {
  if (n == 0 || workers == 0) throw InvalidInput("run_instances: n and workers must be >= 1");
  auto rep = isolation == Isolation::Process ? detail::launch_processes(n, workers, workload)
                                             : detail::launch_threads(n, workers, workload);
  detail::finish_repetition(rep, n);
  return rep;
}

/// Repeats one cell and keeps the lower-median repetition by makespan. Any
/// failed repetition fails the cell; no numbers are reported for it.
inline CellResult run_cell(std::size_t n, std::size_t workers, const BenchConfig& config, const HostInfo& host) {
  CellResult cell;
  cell.n_instances = n;
  cell.workers = workers;
  if (config.memory_per_instance_bytes > 0 && host.available_memory_bytes > 0 &&
      config.memory_per_instance_bytes * n > host.available_memory_bytes) {
    cell.failed = true;
    cell.cause = "insufficient memory: need " + std::to_string(config.memory_per_instance_bytes * n) +
                 " bytes, available " + std::to_string(host.available_memory_bytes);
    return cell;
  }
  for (std::size_t r = 0; r < config.repetitions; ++r) {
    cell.repetitions.push_back(run_instances(n, workers, config.workload, config.isolation));
    if (cell.repetitions.back().failed) {
      cell.failed = true;
      cell.cause = cell.repetitions.back().cause;
      return cell;
    }
  }
  std::vector<std::size_t> order(cell.repetitions.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return cell.repetitions[a].makespan_s < cell.repetitions[b].makespan_s;
  });
  cell.median_repetition = order[(order.size() - 1) / 2];
  const auto& median = cell.repetitions[cell.median_repetition];
  cell.makespan_s = median.makespan_s;
  cell.ert_s = median.ert_s;
  cell.launch_skew_s = median.launch_skew_s;
  for (const auto& t : median.instances) cell.per_instance_s.push_back(t.wall_s());
  return cell;
}

/// (n, ert) for one worker count, successful cells only, sorted by n.
inline std::vector<std::pair<std::size_t, double>> ert_curve(const EffectiveRunReport& report, std::size_t workers) {
  std::vector<std::pair<std::size_t, double>> curve;
  for (const auto& c : report.grid)
    if (c.workers == workers && !c.failed) curve.emplace_back(c.n_instances, c.ert_s);
  std::sort(curve.begin(), curve.end());
  return curve;
}

/// Sweeps instance_counts × worker_counts. The saturation search runs on the
/// curve of the first listed worker count.
inline EffectiveRunReport run_bench(const BenchConfig& config) {
  validate(config);
  EffectiveRunReport report;
  report.environment = host_info();
  for (auto n : config.instance_counts)
    for (auto m : config.worker_counts) report.grid.push_back(run_cell(n, m, config, report.environment));
  report.saturation_workers = config.worker_counts.front();
  const auto curve = ert_curve(report, report.saturation_workers);
  if (curve.size() >= 2) report.saturation_n = detect_saturation(curve, config.saturation_epsilon);
  return report;
}

/// A fixed amount of CPU-bound work: `correlations` frequency-domain circular
/// correlations of length `length`, shared among the instance's workers.
struct SyntheticWorkload {
  std::size_t correlations = 192;
  std::size_t length = 8192;
  std::uint64_t seed = 1;
};

inline Workload make_synthetic_workload(SyntheticWorkload spec) {
  if (spec.correlations == 0 || spec.length == 0) throw InvalidConfig("SyntheticWorkload: empty workload");
  return [spec](std::size_t workers) {
    GaussianSource gauss(spec.seed);
    std::vector<std::complex<double>> a(spec.length), b(spec.length);
    for (auto& v : a) v = {gauss.next(), gauss.next()};
    for (auto& v : b) v = {gauss.next(), gauss.next()};
    const IqBuffer<double> x(std::move(a), 1.0), y(std::move(b), 1.0);
    std::vector<double> peaks(spec.correlations);
    ExecPlan plan;
    plan.worker_count = workers;
    plan.schedule = Schedule::Dynamic;
    parallel_for(spec.correlations, plan, [&](std::size_t i) {
      const auto c = circular_correlate(x, y, CorrelationMethod::FrequencyDomain);
      peaks[i] = std::abs(c.values[i % spec.length]);
    });
    volatile double sink = 0.0;
    for (double p : peaks) sink = sink + p;
  };
}

struct PrecisionStudyConfig {
  std::size_t suite_size = 50;
  std::uint64_t seed = 20240601;
  double cn0_dbhz = 45.0;
  double sample_rate_hz = 8.184e6;
  double duration_s = 10e-3;
  std::size_t noise_only_every = 5;  // every k-th case carries no signal; 0 disables
  AcqConfig acquisition{};
  double max_code_phase_delta_samples = 0.1;
  double max_doppler_delta_hz = 1.0;
};

struct PrecisionCase {
  std::size_t index = 0;
  SignalSpec spec;
  bool signal_present = true;
  AcqResult single;
  AcqResult dbl;
  double single_s = 0.0;
  double double_s = 0.0;
  bool decision_match = false;
  double code_phase_delta_samples = 0.0;  // circular, within one code period
  double doppler_delta_hz = 0.0;
  bool within_tolerance = false;
};

struct PrecisionReport {
  std::vector<PrecisionCase> cases;
  std::size_t decision_mismatches = 0;
  std::size_t tolerance_failures = 0;
  double single_total_s = 0.0;
  double double_total_s = 0.0;
};

/// Acquires the same seeded inputs in single and double precision and
/// compares decisions and estimates. Mismatches are flagged per case.
inline PrecisionReport compare_precision(const PrecisionStudyConfig& config) {
  if (config.suite_size == 0) throw InvalidConfig("compare_precision: empty suite");
  validate(config.acquisition);
  const std::size_t period = samples_per_code_period(config.sample_rate_hz);
  const double sigma = noise_sigma_for_cn0(config.cn0_dbhz, config.sample_rate_hz);
  std::mt19937_64 rng(config.seed);
  auto uniform = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  CodeSpectrumCache<float> cache_f;
  CodeSpectrumCache<double> cache_d;

  PrecisionReport report;
  for (std::size_t i = 0; i < config.suite_size; ++i) {
    PrecisionCase pc;
    pc.index = i;
    pc.spec.prn = 1 + static_cast<int>(rng() % kMaxPrn);
    pc.spec.doppler_hz = config.acquisition.doppler_min_hz +
                         uniform() * (config.acquisition.doppler_max_hz - config.acquisition.doppler_min_hz);
    pc.spec.code_phase_samples = static_cast<double>(rng() % period);
    pc.spec.carrier_phase_cycles = uniform();
    pc.spec.sample_rate_hz = config.sample_rate_hz;
    pc.spec.duration_s = config.duration_s;
    pc.spec.noise_sigma = sigma;
    pc.spec.seed = config.seed ^ (0x9e3779b97f4a7c15ULL * (i + 1));
    pc.signal_present = config.noise_only_every == 0 || (i + 1) % config.noise_only_every != 0;
    if (!pc.signal_present) pc.spec.amplitude = 0.0;

    const auto samples = synthesize_signal<double>(pc.spec);
    const auto samples_f = samples.cast<float>();
    const CaCode code = generate_ca_code(pc.spec.prn);

    auto t0 = std::chrono::steady_clock::now();
    pc.single = acquire_channel(samples_f, code, config.acquisition, &cache_f);
    auto t1 = std::chrono::steady_clock::now();
    pc.dbl = acquire_channel(samples, code, config.acquisition, &cache_d);
    auto t2 = std::chrono::steady_clock::now();
    pc.single_s = std::chrono::duration<double>(t1 - t0).count();
    pc.double_s = std::chrono::duration<double>(t2 - t1).count();

    pc.decision_match = pc.single.detected == pc.dbl.detected;
    const std::size_t d = pc.single.code_phase_samples > pc.dbl.code_phase_samples
                              ? pc.single.code_phase_samples - pc.dbl.code_phase_samples
                              : pc.dbl.code_phase_samples - pc.single.code_phase_samples;
    pc.code_phase_delta_samples = static_cast<double>(std::min(d, period - d));
    pc.doppler_delta_hz = std::abs(pc.single.doppler_hz - pc.dbl.doppler_hz);
    // Estimates are only compared where both precisions report a detection.
    pc.within_tolerance = !(pc.single.detected && pc.dbl.detected) ||
                          (pc.code_phase_delta_samples <= config.max_code_phase_delta_samples &&
                           pc.doppler_delta_hz <= config.max_doppler_delta_hz);

    if (!pc.decision_match) ++report.decision_mismatches;
    if (!pc.within_tolerance) ++report.tolerance_failures;
    report.single_total_s += pc.single_s;
    report.double_total_s += pc.double_s;
    report.cases.push_back(std::move(pc));
  }
  return report;
}

}  // namespace gnssrx::bench
