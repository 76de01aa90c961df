#pragma once

// Two-phase epoch engine.
//
// Every epoch runs phase 1 of all unfinished channels, then phase 2 of all
// unfinished channels, with a full rendezvous of the workers between the
// phases and between epochs. Epochs repeat until every channel's phase 2 has
// reported completion. Channels are independent, so results do not depend
// on the worker count or the schedule.

#include <algorithm>
#include <array>
#include <atomic>
#include <barrier>
#include <cerrno>
#include <chrono>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <system_error>
#include <thread>
#include <vector>

#include "gnssrx/error.hpp"

#if defined(__linux__)
#include <sys/resource.h>
#include <sys/syscall.h>
#include <unistd.h>
#endif

namespace gnssrx {

enum class Schedule { Static, Dynamic };
enum class PriorityHint { Normal, High };

struct ExecPlan {
  std::size_t worker_count = 1;
  Schedule schedule = Schedule::Dynamic;
  PriorityHint priority = PriorityHint::Normal;
  bool persistent_pool = true;         // false: threads are started and joined around every phase
  bool dedicated_per_channel = false;  // one worker per channel, each owning its channel
  std::size_t dynamic_chunk = 1;
};

inline void validate(const ExecPlan& plan) {
  if (plan.worker_count == 0) throw InvalidConfig("ExecPlan: worker_count must be >= 1");
  if (plan.dynamic_chunk == 0) throw InvalidConfig("ExecPlan: dynamic_chunk must be >= 1");
}

struct EpochTask {
  std::size_t channel_id = 0;
  std::function<void()> phase1;
  std::function<bool()> phase2;  // returns true once the channel has finished
};

enum class Phase : std::uint8_t { One = 1, Two = 2 };

struct TraceEvent {
  std::size_t channel_id = 0;
  Phase phase = Phase::One;
  std::size_t epoch = 0;
  std::size_t worker_id = 0;
  std::int64_t start_ns = 0;
  std::int64_t end_ns = 0;
};

struct ExecTrace {
  std::vector<TraceEvent> events;
};

struct PipelineReport {
  std::size_t epochs = 0;
  std::size_t worker_count = 0;
  std::size_t workers_created = 0;
  bool priority_requested = false;
  bool priority_applied = false;
  std::string priority_note;
  double wall_s = 0.0;
  std::vector<std::size_t> units_per_worker;
  // getrusage deltas for the whole process; -1 where unavailable
  long voluntary_context_switches = -1;
  long involuntary_context_switches = -1;
};

struct TaskRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
  friend bool operator==(const TaskRange&, const TaskRange&) = default;
};

/// Static: worker w gets a contiguous block; the first n mod W workers get
/// ⌊n/W⌋ + 1 tasks, the rest ⌊n/W⌋. Dynamic: workers claim `chunk` tasks
/// at a time from a shared counter, so only the claim rule is fixed here.
struct PartitionPlan {
  Schedule schedule = Schedule::Static;
  std::vector<TaskRange> blocks;  // Static only, one per worker (possibly empty)
  std::size_t chunk = 1;          // Dynamic only
};

inline PartitionPlan plan_partition(std::size_t n_tasks, std::size_t n_workers, Schedule schedule,
                                    std::size_t chunk = 1) {
  if (n_tasks == 0 || n_workers == 0) throw InvalidInput("plan_partition: need at least one task and one worker");
  PartitionPlan plan;
  plan.schedule = schedule;
  plan.chunk = std::max<std::size_t>(chunk, 1);
  if (schedule == Schedule::Dynamic) return plan;
  const std::size_t base = n_tasks / n_workers;
  const std::size_t extra = n_tasks % n_workers;
  std::size_t begin = 0;
  for (std::size_t w = 0; w < n_workers; ++w) {
    const std::size_t len = base + (w < extra ? 1 : 0);
    plan.blocks.push_back({begin, begin + len});
    begin += len;
  }
  return plan;
}

struct OrderingViolation {
  std::size_t epoch = 0;
  std::string description;
};

/// Checks the barrier contract: within every epoch all phase-1 units end
/// before any phase-2 unit starts, and all phase-2 units end before any
/// phase-1 unit of the next epoch starts. One violation per failed boundary.
inline std::vector<OrderingViolation> verify_ordering(const ExecTrace& trace) {
  struct Bounds {
    std::int64_t min_start = std::numeric_limits<std::int64_t>::max();
    std::int64_t max_end = std::numeric_limits<std::int64_t>::min();
    bool seen = false;
  };
  std::map<std::size_t, std::array<Bounds, 2>> epochs;
  std::map<std::size_t, std::int64_t> last_end_per_worker;
  std::vector<TraceEvent> sorted = trace.events;
  std::ranges::sort(sorted, [](const TraceEvent& a, const TraceEvent& b) {
    return a.worker_id != b.worker_id ? a.worker_id < b.worker_id : a.start_ns < b.start_ns;
  });
  for (const auto& e : sorted) {
    if (e.end_ns < e.start_ns) throw InvalidInput("verify_ordering: event ends before it starts");
    if (e.phase != Phase::One && e.phase != Phase::Two) throw InvalidInput("verify_ordering: unknown phase");
    auto [it, fresh] = last_end_per_worker.try_emplace(e.worker_id, e.end_ns);
    if (!fresh) {
      if (e.start_ns < it->second) throw InvalidInput("verify_ordering: overlapping events on one worker");
      it->second = e.end_ns;
    }
    auto& b = epochs[e.epoch][e.phase == Phase::One ? 0 : 1];
    b.min_start = std::min(b.min_start, e.start_ns);
    b.max_end = std::max(b.max_end, e.end_ns);
    b.seen = true;
  }
  std::vector<OrderingViolation> out;
  for (auto it = epochs.begin(); it != epochs.end(); ++it) {
    const auto& [epoch, phases] = *it;
    if (phases[0].seen && phases[1].seen && phases[0].max_end > phases[1].min_start) {
      out.push_back({epoch, "phase 2 started before phase 1 finished"});
    }
    const auto next = std::next(it);
    if (next != epochs.end() && next->first == epoch + 1 && phases[1].seen && next->second[0].seen &&
        phases[1].max_end > next->second[0].min_start) {
      out.push_back({epoch, "next epoch's phase 1 started before phase 2 finished"});
    }
  }
  return out;
}

namespace detail {

struct PriorityOutcome {
  bool applied = false;
  std::string note;
};

// Best effort: lower the calling thread's nice value. Unprivileged processes
// usually get EACCES, which is reported rather than treated as an error.
inline PriorityOutcome raise_thread_priority() {
#if defined(__linux__)
  const auto tid = static_cast<id_t>(::syscall(SYS_gettid));
  errno = 0;
  const int current = ::getpriority(PRIO_PROCESS, tid);
  if (errno != 0) return {false, "getpriority failed"};
  if (::setpriority(PRIO_PROCESS, tid, current - 5) == 0) return {true, "nice lowered by 5"};
  return {false, "not permitted; running at normal priority"};
#else
  return {false, "unsupported platform; running at normal priority"};
#endif
}

struct RusageSnapshot {
  long voluntary = -1;
  long involuntary = -1;
};

inline RusageSnapshot process_rusage() {
#if defined(__linux__)
  rusage ru{};
  if (::getrusage(RUSAGE_SELF, &ru) == 0) return {ru.ru_nvcsw, ru.ru_nivcsw};
#endif
  return {};
}

class EpochRunner {
public:
  EpochRunner(std::span<EpochTask> tasks, const ExecPlan& plan, ExecTrace* trace, std::size_t max_epochs)
      : tasks_(tasks),
        plan_(plan),
        workers_(plan.dedicated_per_channel ? tasks.size() : plan.worker_count),
        trace_(trace),
        max_epochs_(max_epochs),
        complete_(tasks.size(), 0),
        per_worker_events_(workers_),
        units_(workers_, 0) {
    if (plan_.dedicated_per_channel || plan_.schedule == Schedule::Static) {
      partition_ = plan_partition(tasks_.size(), workers_, Schedule::Static);
    }
  }

  PipelineReport run() {
    PipelineReport report;
    report.worker_count = workers_;
    report.priority_requested = plan_.priority == PriorityHint::High;
    const auto usage_before = process_rusage();
    origin_ = std::chrono::steady_clock::now();

    if (plan_.persistent_pool) {
      run_persistent();
    } else {
      run_transient();
    }

    const auto usage_after = process_rusage();
    report.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - origin_).count();
    report.epochs = epochs_done_;
    report.workers_created = created_.load();
    report.units_per_worker = units_;
    if (usage_before.voluntary >= 0 && usage_after.voluntary >= 0) {
      report.voluntary_context_switches = usage_after.voluntary - usage_before.voluntary;
      report.involuntary_context_switches = usage_after.involuntary - usage_before.involuntary;
    }
    if (report.priority_requested) {
      report.priority_applied = priority_applied_.load() == workers_;
      std::lock_guard lock(error_mutex_);
      report.priority_note = priority_note_;
    } else {
      report.priority_note = "normal";
    }

    if (trace_) {
      for (auto& events : per_worker_events_) {
        trace_->events.insert(trace_->events.end(), events.begin(), events.end());
      }
    }
    if (error_) {
      try {
        std::rethrow_exception(error_);
      } catch (const std::exception& e) {
        throw ChannelError(error_channel_, e.what());
      } catch (...) {
        throw ChannelError(error_channel_, "unknown error");
      }
    }
    return report;
  }

private:
  void run_persistent() {
    std::barrier sync(static_cast<std::ptrdiff_t>(workers_ + 1));
    std::vector<std::thread> pool;
    pool.reserve(workers_);
    try {
      for (std::size_t w = 0; w < workers_; ++w) {
        pool.emplace_back([this, w, &sync] {
          apply_priority();
          for (;;) {
            sync.arrive_and_wait();
            if (stop_) return;
            run_share(Phase::One, w);
            sync.arrive_and_wait();
            run_share(Phase::Two, w);
            sync.arrive_and_wait();
          }
        });
        created_.fetch_add(1);
      }
    } catch (const std::system_error& e) {
      // Release any workers already waiting at the first rendezvous.
      stop_ = true;
      for (std::size_t w = pool.size(); w < workers_; ++w) sync.arrive_and_drop();
      sync.arrive_and_wait();
      for (auto& t : pool) t.join();
      throw ResourceError(std::string("worker startup failed: ") + e.what());
    }

    for (;;) {
      if (!begin_epoch()) break;
      sync.arrive_and_wait();  // start
      sync.arrive_and_wait();  // phase 1 done
      sync.arrive_and_wait();  // phase 2 done
      finish_epoch();
    }
    stop_ = true;
    sync.arrive_and_wait();
    for (auto& t : pool) t.join();
  }

  void run_transient() {
    for (;;) {
      if (!begin_epoch()) break;
      for (Phase phase : {Phase::One, Phase::Two}) {
        std::vector<std::thread> threads;
        threads.reserve(workers_);
        try {
          for (std::size_t w = 0; w < workers_; ++w) {
            threads.emplace_back([this, w, phase] {
              apply_priority();
              run_share(phase, w);
            });
            created_.fetch_add(1);
          }
        } catch (const std::system_error& e) {
          for (auto& t : threads) t.join();
          throw ResourceError(std::string("worker startup failed: ") + e.what());
        }
        for (auto& t : threads) t.join();
      }
      finish_epoch();
    }
  }

  // Controller side, between rendezvous points. Returns false when the run is over.
  bool begin_epoch() {
    if (error_) return false;
    if (epochs_done_ >= max_epochs_) return false;
    if (epochs_done_ > 0 && !any_incomplete_) return false;
    claim_[0].store(0);
    claim_[1].store(0);
    any_incomplete_ = false;
    return true;
  }

  void finish_epoch() {
    ++epochs_done_;
    bool incomplete = false;
    for (char c : complete_) incomplete = incomplete || c == 0;
    any_incomplete_ = incomplete;
  }

  void apply_priority() {
    if (plan_.priority != PriorityHint::High) return;
    const auto outcome = raise_thread_priority();
    if (outcome.applied) priority_applied_.fetch_add(1);
    std::lock_guard lock(error_mutex_);
    if (priority_note_.empty() || !outcome.applied) priority_note_ = outcome.note;
  }

  void run_share(Phase phase, std::size_t worker) {
    const std::size_t n = tasks_.size();
    if (plan_.dedicated_per_channel || plan_.schedule == Schedule::Static) {
      const auto range = partition_.blocks[worker];
      for (std::size_t i = range.begin; i < range.end; ++i) run_unit(phase, i, worker);
      return;
    }
    auto& claim = claim_[phase == Phase::One ? 0 : 1];
    for (;;) {
      const std::size_t first = claim.fetch_add(plan_.dynamic_chunk);
      if (first >= n) return;
      const std::size_t last = std::min(n, first + plan_.dynamic_chunk);
      for (std::size_t i = first; i < last; ++i) run_unit(phase, i, worker);
    }
  }

  void run_unit(Phase phase, std::size_t index, std::size_t worker) {
    if (complete_[index] || abort_.load(std::memory_order_relaxed)) return;
    auto& task = tasks_[index];
    const auto start = now_ns();
    try {
      if (phase == Phase::One) {
        if (task.phase1) task.phase1();
      } else {
        const bool done = task.phase2 ? task.phase2() : true;
        if (done) complete_[index] = 1;
      }
    } catch (...) {
      std::lock_guard lock(error_mutex_);
      if (!error_) {
        error_ = std::current_exception();
        error_channel_ = task.channel_id;
      }
      abort_.store(true);
    }
    const auto end = now_ns();
    ++units_[worker];
    if (trace_) per_worker_events_[worker].push_back({task.channel_id, phase, epochs_done_, worker, start, end});
  }

  std::int64_t now_ns() const {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - origin_).count();
  }

  std::span<EpochTask> tasks_;
  ExecPlan plan_;
  std::size_t workers_;
  ExecTrace* trace_;
  std::size_t max_epochs_;
  PartitionPlan partition_;

  std::vector<char> complete_;  // element i written only by the worker running task i
  std::vector<std::vector<TraceEvent>> per_worker_events_;
  std::vector<std::size_t> units_;
  std::atomic<std::size_t> claim_[2]{};
  std::atomic<std::size_t> created_{0};
  std::atomic<std::size_t> priority_applied_{0};
  std::atomic<bool> abort_{false};
  bool any_incomplete_ = true;
  bool stop_ = false;
  std::size_t epochs_done_ = 0;
  std::chrono::steady_clock::time_point origin_;

  std::mutex error_mutex_;
  std::exception_ptr error_;
  std::size_t error_channel_ = 0;
  std::string priority_note_;
};

}  // namespace detail

/// Runs epochs until every task reports completion (or `max_epochs` is hit).
/// A throwing unit stops the run after the current phase and is rethrown as
/// ChannelError carrying the task's channel id.
inline PipelineReport run_epochs(std::span<EpochTask> tasks, const ExecPlan& plan, ExecTrace* trace = nullptr,
                                 std::size_t max_epochs = std::numeric_limits<std::size_t>::max()) {
  if (tasks.empty()) throw InvalidInput("run_epochs: no tasks");
  validate(plan);
  detail::EpochRunner runner(tasks, plan, trace, max_epochs);
  return runner.run();
}

/// One epoch whose phase 1 runs body(i) for every i in [0, n).
inline PipelineReport parallel_for(std::size_t n, const ExecPlan& plan, const std::function<void(std::size_t)>& body,
                                   ExecTrace* trace = nullptr) {
  std::vector<EpochTask> tasks(n);
  for (std::size_t i = 0; i < n; ++i) {
    tasks[i].channel_id = i;
    tasks[i].phase1 = [&body, i] { body(i); };
    tasks[i].phase2 = [] { return true; };
  }
  return run_epochs(tasks, plan, trace, 1);
}

}  // namespace gnssrx
