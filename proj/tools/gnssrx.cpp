// gnssrx command-line tool: synth, acquire, track, run, bench, report.
//
// Exit status: 0 success, 2 usage or configuration error, 3 file or format
// error, 4 pipeline error. Failures print one line to stderr:
//   error: kind=<usage|io|format|pipeline> message=<text>

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gnssrx/acquisition.hpp"
#include "gnssrx/bench/harness.hpp"
#include "gnssrx/error.hpp"
#include "gnssrx/io/config.hpp"
#include "gnssrx/io/csv.hpp"
#include "gnssrx/io/if_file.hpp"
#include "gnssrx/signal/synthesis.hpp"
#include "gnssrx/tracking.hpp"

namespace {

using namespace gnssrx;

struct PipelineFlags {
  std::string config_path;
  std::optional<std::string> prns;
  std::optional<std::size_t> workers;
  std::optional<std::string> schedule;
  std::optional<std::string> priority;
  std::optional<std::string> precision;
  std::optional<std::size_t> min_iterations;
  std::optional<double> doppler_min, doppler_max, doppler_step, threshold;
  std::optional<int> coherent_ms, rounds;
  std::optional<std::uint64_t> seed;
  std::optional<double> duration_s, sample_rate_hz, cn0_dbhz;

  void attach(CLI::App& app, bool scenario) {
    app.add_option("--config", config_path, "Run configuration file");
    app.add_option("--prns", prns, "PRN list, e.g. 1,3,5-8");
    app.add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--schedule", schedule, "static or dynamic")->check(CLI::IsMember({"static", "dynamic"}));
    app.add_option("--priority", priority, "normal or high")->check(CLI::IsMember({"normal", "high"}));
    app.add_option("--precision", precision, "single or double")->check(CLI::IsMember({"single", "double"}));
    app.add_option("--min-iterations", min_iterations, "Shortest loop sent to the accelerated kernel path");
    app.add_option("--doppler-min", doppler_min, "Lowest Doppler bin, Hz");
    app.add_option("--doppler-max", doppler_max, "Highest Doppler bin, Hz");
    app.add_option("--doppler-step", doppler_step, "Doppler bin spacing, Hz");
    app.add_option("--coherent-ms", coherent_ms, "Coherent integration, ms");
    app.add_option("--rounds", rounds, "Noncoherent rounds");
    app.add_option("--threshold", threshold, "Detection threshold");
    if (scenario) {
      app.add_option("--seed", seed, "Scenario seed");
      app.add_option("--duration", duration_s, "Scenario length, s");
      app.add_option("--fs", sample_rate_hz, "Scenario sample rate, Hz");
      app.add_option("--cn0", cn0_dbhz, "Scenario C/N0, dB-Hz");
    }
  }

  io::RunConfig resolve() const {
    io::RunConfig rc;
    if (!config_path.empty()) {
      const auto bytes = io::read_file_bytes(config_path);
      rc = io::parse_run_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    }
    try {
      if (prns) rc.prns = io::parse_integer_list<int>(*prns, "--prns");
    } catch (const FormatError& e) {
      throw InvalidConfig(e.what());
    }
    if (workers) rc.workers = *workers;
    if (schedule) rc.schedule = io::parse_schedule(*schedule);
    if (priority) rc.priority = io::parse_priority(*priority);
    if (precision) rc.precision = io::parse_precision(*precision);
    if (min_iterations) rc.min_iterations = *min_iterations;
    if (doppler_min) rc.doppler_min_hz = *doppler_min;
    if (doppler_max) rc.doppler_max_hz = *doppler_max;
    if (doppler_step) rc.doppler_step_hz = *doppler_step;
    if (coherent_ms) rc.coherent_ms = *coherent_ms;
    if (rounds) rc.noncoherent_rounds = *rounds;
    if (threshold) rc.threshold = *threshold;
    if (seed) rc.seed = *seed;
    if (duration_s) rc.duration_s = *duration_s;
    if (sample_rate_hz) rc.sample_rate_hz = *sample_rate_hz;
    if (cn0_dbhz) rc.cn0_dbhz = *cn0_dbhz;
    io::validate(rc);
    return rc;
  }
};

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text << std::flush;
    return;
  }
  io::write_file_bytes(path, std::as_bytes(std::span(text.data(), text.size())));
}

std::string read_text(const std::string& path) {
  const auto bytes = io::read_file_bytes(path);
  return std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

struct TrackFlags {
  std::optional<std::size_t> epochs;
  TrackConfig config;

  void attach(CLI::App& app) {
    app.add_option("--epochs", epochs, "Tracking epochs per channel (default: whole input)");
    app.add_option("--dll-bw", config.dll_bandwidth_hz, "DLL noise bandwidth, Hz");
    app.add_option("--pll-bw", config.pll_bandwidth_hz, "PLL noise bandwidth, Hz");
    app.add_option("--spacing", config.correlator_spacing_chips, "Early-late spacing, chips");
  }
};

template <Real T>
std::vector<AcqResult> acquire_input(const IqBuffer<T>& samples, const io::RunConfig& rc) {
  return acquire_all(samples, rc.prns, io::acquisition_config(rc), io::exec_plan(rc));
}

template <Real T>
std::vector<io::TrackRow> track_input(const IqBuffer<T>& samples, const std::vector<AcqResult>& acq,
                                      const io::RunConfig& rc, const TrackFlags& tf) {
  std::vector<TrackState> initial;
  for (const auto& r : acq)
    if (r.detected) initial.push_back(init_from_acquisition(r, samples.sample_rate_hz()));
  std::vector<io::TrackRow> rows;
  if (initial.empty()) return rows;
  TrackConfig tc = tf.config;
  tc.compute.min_iterations = rc.min_iterations;
  const auto run = track_all(samples, std::span<const TrackState>(initial), tc, io::exec_plan(rc),
                             tf.epochs.value_or(std::numeric_limits<std::size_t>::max()));
  for (std::size_t c = 0; c < initial.size(); ++c)
    for (const auto& out : run.histories[c]) rows.push_back(io::to_row(initial[c].prn, out));
  return rows;
}

struct InputRun {
  std::string acq_csv;
  std::string track_csv;
};

template <Real T>
InputRun process(const IqBuffer<T>& samples, const io::RunConfig& rc, bool track, const TrackFlags& tf) {
  InputRun out;
  const auto acq = acquire_input(samples, rc);
  out.acq_csv = io::emit_acquisition_csv(acq);
  if (track) out.track_csv = io::emit_tracking_csv(track_input(samples, acq, rc, tf));
  return out;
}

InputRun process_file(const std::string& path, const io::RunConfig& rc, bool track, const TrackFlags& tf) {
  if (rc.precision == Precision::Double) return process(io::read_if_file<double>(path), rc, track, tf);
  return process(io::read_if_file<float>(path), rc, track, tf);
}

template <Real T>
IqBuffer<T> synthesize_scenario(const io::RunConfig& rc) {
  const auto specs = io::scenario_specs(rc);
  return synthesize_composite<T>(specs, noise_sigma_for_cn0(rc.cn0_dbhz, rc.sample_rate_hz), rc.seed);
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Software GNSS L1 baseband engine and throughput harness"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic IF file and its truth sidecar");
  SignalSpec spec;
  double dur_ms = 10.0;
  std::optional<double> cn0, sigma;
  std::string format = "float32", synth_out;
  synth->add_option("--prn", spec.prn, "PRN 1-32")->check(CLI::Range(1, 32));
  synth->add_option("--doppler", spec.doppler_hz, "Doppler, Hz");
  synth->add_option("--code-phase", spec.code_phase_samples, "Code delay, samples");
  synth->add_option("--carrier-phase", spec.carrier_phase_cycles, "Carrier phase, cycles");
  synth->add_option("--fs", spec.sample_rate_hz, "Sample rate, Hz");
  synth->add_option("--dur-ms", dur_ms, "Duration, ms");
  synth->add_option("--seed", spec.seed, "Noise seed");
  synth->add_option("--amplitude", spec.amplitude, "Signal amplitude");
  auto* cn0_opt = synth->add_option("--cn0", cn0, "C/N0 in dB-Hz (sets the noise sigma)");
  synth->add_option("--sigma", sigma, "Per-component noise sigma")->excludes(cn0_opt);
  synth->add_option("--format", format, "int8, int16 or float32")->check(CLI::IsMember({"int8", "int16", "float32"}));
  synth->add_option("-o,--output", synth_out, "IF file to write")->required();

  // acquire
  auto* acquire = app.add_subcommand("acquire", "Acquire satellites in an IF file");
  PipelineFlags acq_flags;
  std::string acq_input, acq_out = "-";
  acq_flags.attach(*acquire, false);
  acquire->add_option("-i,--input", acq_input, "IF file")->required();
  acquire->add_option("-o,--output", acq_out, "Acquisition CSV (default stdout)");

  // track
  auto* track = app.add_subcommand("track", "Acquire, then track every detected satellite");
  PipelineFlags trk_flags;
  TrackFlags trk_opts;
  std::string trk_input, trk_out = "-", trk_acq_out;
  trk_flags.attach(*track, false);
  trk_opts.attach(*track);
  track->add_option("-i,--input", trk_input, "IF file")->required();
  track->add_option("-o,--output", trk_out, "Tracking CSV (default stdout)");
  track->add_option("--acq-output", trk_acq_out, "Also write the acquisition CSV here");

  // run
  auto* run = app.add_subcommand("run", "Acquire and track a file, or a scenario synthesized from the config");
  PipelineFlags run_flags;
  TrackFlags run_opts;
  std::string run_input, run_acq_out = "-", run_track_out, run_save;
  run_flags.attach(*run, true);
  run_opts.attach(*run);
  run->add_option("-i,--input", run_input, "IF file (default: synthesize from the config)");
  run->add_option("-o,--acq-output", run_acq_out, "Acquisition CSV (default stdout)");
  run->add_option("--track-output", run_track_out, "Tracking CSV");
  run->add_option("--save-input", run_save, "Write the synthesized scenario as a float32 IF file");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Effective running time over an instances x workers grid");
  std::vector<std::size_t> instances{1}, bench_workers{1};
  std::size_t repetitions = 5;
  std::string isolation = "process", workload = "synthetic", bench_out = "-", bench_config;
  bench::SyntheticWorkload synthetic;
  std::uint64_t memory_per_instance = 0;
  bool all_reps = false;
  double bench_eps = 0.05;
  bench_cmd->add_option("--instances", instances, "Instance counts, e.g. 1,2,4")->delimiter(',')->check(CLI::PositiveNumber);
  bench_cmd->add_option("--workers", bench_workers, "Worker counts, e.g. 1,2")->delimiter(',')->check(CLI::PositiveNumber);
  bench_cmd->add_option("--repetitions", repetitions, "Repetitions per cell")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--isolation", isolation, "process or inprocess")->check(CLI::IsMember({"process", "inprocess"}));
  bench_cmd->add_option("--workload", workload, "synthetic or acquire")->check(CLI::IsMember({"synthetic", "acquire"}));
  bench_cmd->add_option("--correlations", synthetic.correlations, "Synthetic workload: correlations per instance");
  bench_cmd->add_option("--length", synthetic.length, "Synthetic workload: correlation length");
  bench_cmd->add_option("--config", bench_config, "Acquire workload: run configuration file");
  bench_cmd->add_option("--memory-per-instance", memory_per_instance, "Bytes; cells that cannot fit are marked failed");
  bench_cmd->add_flag("--all-repetitions", all_reps, "One row per repetition instead of per cell");
  bench_cmd->add_option("--epsilon", bench_eps, "Saturation threshold (relative improvement)");
  bench_cmd->add_option("-o,--output", bench_out, "Bench CSV (default stdout)");

  // report
  auto* report = app.add_subcommand("report", "Render a bench CSV as an effective running time grid");
  std::string report_in, report_out = "-";
  double report_eps = 0.05;
  report->add_option("-i,--input", report_in, "Bench CSV")->required();
  report->add_option("--epsilon", report_eps, "Saturation threshold (relative improvement)");
  report->add_option("-o,--output", report_out, "Report (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: kind=usage message=" << e.what() << '\n';
    std::cerr << app.help() << '\n';
    return 2;
  }

  if (synth->parsed()) {
    spec.duration_s = dur_ms * 1e-3;
    if (cn0) spec.noise_sigma = noise_sigma_for_cn0(*cn0, spec.sample_rate_hz);
    if (sigma) spec.noise_sigma = *sigma;
    const auto buf = synthesize_signal<double>(spec);
    io::write_if_file(synth_out, buf, io::parse_sample_format(format));
    const auto truth = io::format_truth(spec, cn0.value_or(std::nan("")));
    io::write_file_bytes(io::truth_path(synth_out), std::as_bytes(std::span(truth.data(), truth.size())));
    return 0;
  }
  if (acquire->parsed()) {
    const auto rc = acq_flags.resolve();
    write_output(acq_out, process_file(acq_input, rc, false, {}).acq_csv);
    return 0;
  }
  if (track->parsed()) {
    const auto rc = trk_flags.resolve();
    const auto result = process_file(trk_input, rc, true, trk_opts);
    if (!trk_acq_out.empty()) write_output(trk_acq_out, result.acq_csv);
    write_output(trk_out, result.track_csv);
    return 0;
  }
  if (run->parsed()) {
    const auto rc = run_flags.resolve();
    InputRun result;
    if (!run_input.empty()) {
      result = process_file(run_input, rc, true, run_opts);
    } else if (rc.precision == Precision::Double) {
      const auto samples = synthesize_scenario<double>(rc);
      if (!run_save.empty()) io::write_if_file(run_save, samples, io::SampleFormat::Float32);
      result = process(samples, rc, true, run_opts);
    } else {
      const auto samples = synthesize_scenario<float>(rc);
      if (!run_save.empty()) io::write_if_file(run_save, samples, io::SampleFormat::Float32);
      result = process(samples, rc, true, run_opts);
    }
    write_output(run_acq_out, result.acq_csv);
    if (!run_track_out.empty()) write_output(run_track_out, result.track_csv);
    return 0;
  }
  if (bench_cmd->parsed()) {
    bench::BenchConfig bc;
    bc.instance_counts = instances;
    bc.worker_counts = bench_workers;
    bc.repetitions = repetitions;
    bc.isolation = isolation == "process" ? bench::Isolation::Process : bench::Isolation::InProcess;
    bc.memory_per_instance_bytes = memory_per_instance;
    bc.saturation_epsilon = bench_eps;
    std::shared_ptr<const IqBuffer<float>> scenario;
    if (workload == "synthetic") {
      bc.workload = bench::make_synthetic_workload(synthetic);
    } else {
      io::RunConfig rc;
      if (!bench_config.empty()) rc = io::parse_run_config(read_text(bench_config));
      // Synthesized once here; process instances share it copy-on-write.
      scenario = std::make_shared<const IqBuffer<float>>(synthesize_scenario<float>(rc));
      bc.workload = [scenario, rc](std::size_t workers) {
        auto plan = io::exec_plan(rc);
        plan.worker_count = workers;
        acquire_all(*scenario, rc.prns, io::acquisition_config(rc), plan);
      };
    }
    const auto result = bench::run_bench(bc);
    const auto rows = io::bench_rows(result, all_reps);
    write_output(bench_out, io::emit_bench_csv(rows));
    std::cerr << "cores=" << result.environment.cores << " saturation_n=";
    if (result.saturation_n) std::cerr << *result.saturation_n;
    else std::cerr << "none";
    std::cerr << " (workers=" << result.saturation_workers << ")\n";
    return 0;
  }
  if (report->parsed()) {
    const auto rows = io::parse_bench_csv(read_text(report_in));
    write_output(report_out, io::render_report(rows, report_eps));
    return 0;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const gnssrx::InvalidConfig& e) {
    std::cerr << "error: kind=usage message=" << e.what() << '\n';
    return 2;
  } catch (const gnssrx::IoError& e) {
    std::cerr << "error: kind=io message=" << e.what() << '\n';
    return 3;
  } catch (const gnssrx::FormatError& e) {
    std::cerr << "error: kind=format message=" << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: kind=pipeline message=" << e.what() << '\n';
    return 4;
  }
}
