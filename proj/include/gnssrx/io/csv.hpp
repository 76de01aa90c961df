#pragma once

// CSV report schemas. Numbers are written with std::to_chars (shortest
// round-trip form, no locale), booleans as 0/1, failed bench measurements as
// empty fields.
//
//   acquisition: prn,detected,doppler_hz,code_phase_samples,peak_metric
//   tracking:    prn,epoch,code_phase_chips,carrier_phase_cycles,doppler_hz,ip,qp,dll_error_chips,pll_error_cycles,lock_metric
//   bench:       n_instances,workers,repetition,makespan_s,ert_s,failed,cause

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gnssrx/acquisition.hpp"
#include "gnssrx/bench/harness.hpp"
#include "gnssrx/error.hpp"
#include "gnssrx/io/text.hpp"
#include "gnssrx/tracking.hpp"

namespace gnssrx::io {

inline constexpr std::string_view kAcquisitionHeader = "prn,detected,doppler_hz,code_phase_samples,peak_metric";
inline constexpr std::string_view kTrackingHeader =
    "prn,epoch,code_phase_chips,carrier_phase_cycles,doppler_hz,ip,qp,dll_error_chips,pll_error_cycles,lock_metric";
inline constexpr std::string_view kBenchHeader = "n_instances,workers,repetition,makespan_s,ert_s,failed,cause";

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

/// Splits one record; fields may be double-quoted with "" as an escaped quote.
inline std::vector<std::string> split_csv_record(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  if (quoted) throw FormatError("csv: unterminated quoted field");
  return fields;
}

namespace detail {

inline std::vector<std::vector<std::string>> parse_table(std::string_view text, std::string_view header) {
  std::vector<std::vector<std::string>> rows;
  const auto lines = split(text, '\n');
  std::size_t i = 0;
  auto strip_cr = [](std::string_view l) { return !l.empty() && l.back() == '\r' ? l.substr(0, l.size() - 1) : l; };
  if (lines.empty() || strip_cr(lines[0]) != header)
    throw FormatError("csv: expected header '" + std::string(header) + "'");
  const std::size_t columns = split(header, ',').size();
  for (i = 1; i < lines.size(); ++i) {
    const auto line = strip_cr(lines[i]);
    if (line.empty()) {
      if (i + 1 == lines.size()) break;
      throw FormatError("csv: blank line " + std::to_string(i + 1));
    }
    auto fields = split_csv_record(line);
    if (fields.size() != columns)
      throw FormatError("csv line " + std::to_string(i + 1) + ": expected " + std::to_string(columns) + " fields");
    rows.push_back(std::move(fields));
  }
  return rows;
}

inline bool parse_flag(std::string_view s, std::string_view what) {
  if (s == "1") return true;
  if (s == "0") return false;
  throw FormatError("invalid flag '" + std::string(s) + "' for " + std::string(what));
}

inline double parse_optional_number(std::string_view s, std::string_view what) {
  return s.empty() ? std::numeric_limits<double>::quiet_NaN() : parse_number(s, what);
}

inline std::string format_optional_number(double v) { return std::isnan(v) ? std::string() : format_number(v); }

}  // namespace detail

struct AcqRow {
  int prn = 0;
  bool detected = false;
  double doppler_hz = 0.0;
  std::size_t code_phase_samples = 0;
  double peak_metric = 0.0;

  friend bool operator==(const AcqRow&, const AcqRow&) = default;
};

inline AcqRow to_row(const AcqResult& r) {
  return {r.prn, r.detected, r.doppler_hz, r.code_phase_samples, r.peak_metric};
}

inline std::string emit_acquisition_csv(std::span<const AcqResult> results) {
  std::string out(kAcquisitionHeader);
  out += '\n';
  for (const auto& r : results) {
    out += std::to_string(r.prn) + ',' + (r.detected ? "1" : "0") + ',' + format_number(r.doppler_hz) + ',' +
           std::to_string(r.code_phase_samples) + ',' + format_number(r.peak_metric) + '\n';
  }
  return out;
}

inline std::vector<AcqRow> parse_acquisition_csv(std::string_view text) {
  std::vector<AcqRow> rows;
  for (const auto& f : detail::parse_table(text, kAcquisitionHeader)) {
    rows.push_back({parse_integer<int>(f[0], "prn"), detail::parse_flag(f[1], "detected"),
                    parse_number(f[2], "doppler_hz"), parse_integer<std::size_t>(f[3], "code_phase_samples"),
                    parse_number(f[4], "peak_metric")});
  }
  return rows;
}

struct TrackRow {
  int prn = 0;
  std::size_t epoch = 0;
  double code_phase_chips = 0.0;
  double carrier_phase_cycles = 0.0;
  double doppler_hz = 0.0;
  double ip = 0.0;
  double qp = 0.0;
  double dll_error_chips = 0.0;
  double pll_error_cycles = 0.0;
  double lock_metric = 0.0;

  friend bool operator==(const TrackRow&, const TrackRow&) = default;
};

inline TrackRow to_row(int prn, const TrackOutput& o) {
  return {prn, o.epoch, o.code_phase_chips, o.carrier_phase_cycles, o.doppler_hz, o.ip, o.qp,
          o.dll_error_chips, o.pll_error_cycles, o.lock_metric};
}

inline std::string emit_tracking_csv(std::span<const TrackRow> rows) {
  std::string out(kTrackingHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.prn) + ',' + std::to_string(r.epoch);
    for (double v : {r.code_phase_chips, r.carrier_phase_cycles, r.doppler_hz, r.ip, r.qp, r.dll_error_chips,
                     r.pll_error_cycles, r.lock_metric})
      out += ',' + format_number(v);
    out += '\n';
  }
  return out;
}

inline std::vector<TrackRow> parse_tracking_csv(std::string_view text) {
  std::vector<TrackRow> rows;
  for (const auto& f : detail::parse_table(text, kTrackingHeader)) {
    rows.push_back({parse_integer<int>(f[0], "prn"), parse_integer<std::size_t>(f[1], "epoch"),
                    parse_number(f[2], "code_phase_chips"), parse_number(f[3], "carrier_phase_cycles"),
                    parse_number(f[4], "doppler_hz"), parse_number(f[5], "ip"), parse_number(f[6], "qp"),
                    parse_number(f[7], "dll_error_chips"), parse_number(f[8], "pll_error_cycles"),
                    parse_number(f[9], "lock_metric")});
  }
  return rows;
}

struct BenchRow {
  std::size_t n_instances = 0;
  std::size_t workers = 0;
  std::size_t repetition = 0;  // 1-based
  double makespan_s = std::numeric_limits<double>::quiet_NaN();
  double ert_s = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
  std::string cause;
};

inline bool operator==(const BenchRow& a, const BenchRow& b) {
  auto same = [](double x, double y) { return (std::isnan(x) && std::isnan(y)) || x == y; };
  return a.n_instances == b.n_instances && a.workers == b.workers && a.repetition == b.repetition &&
         same(a.makespan_s, b.makespan_s) && same(a.ert_s, b.ert_s) && a.failed == b.failed && a.cause == b.cause;
}

/// One row per cell (its lower-median repetition), or one row per
/// repetition when `all_repetitions` is set.
inline std::vector<BenchRow> bench_rows(const bench::EffectiveRunReport& report, bool all_repetitions = false) {
  std::vector<BenchRow> rows;
  for (const auto& cell : report.grid) {
    if (cell.failed) {
      rows.push_back({cell.n_instances, cell.workers, cell.repetitions.size(), std::nan(""), std::nan(""), true,
                      cell.cause});
      continue;
    }
    if (all_repetitions) {
      for (std::size_t r = 0; r < cell.repetitions.size(); ++r) {
        const auto& rep = cell.repetitions[r];
        rows.push_back({cell.n_instances, cell.workers, r + 1, rep.makespan_s, rep.ert_s, false, ""});
      }
    } else {
      rows.push_back({cell.n_instances, cell.workers, cell.median_repetition + 1, cell.makespan_s, cell.ert_s, false, ""});
    }
  }
  return rows;
}

inline std::string emit_bench_csv(std::span<const BenchRow> rows) {
  std::string out(kBenchHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.n_instances) + ',' + std::to_string(r.workers) + ',' + std::to_string(r.repetition) + ',' +
           detail::format_optional_number(r.makespan_s) + ',' + detail::format_optional_number(r.ert_s) + ',' +
           (r.failed ? "1" : "0") + ',' + csv_field(r.cause) + '\n';
  }
  return out;
}

inline std::vector<BenchRow> parse_bench_csv(std::string_view text) {
  std::vector<BenchRow> rows;
  for (const auto& f : detail::parse_table(text, kBenchHeader)) {
    rows.push_back({parse_integer<std::size_t>(f[0], "n_instances"), parse_integer<std::size_t>(f[1], "workers"),
                    parse_integer<std::size_t>(f[2], "repetition"), detail::parse_optional_number(f[3], "makespan_s"),
                    detail::parse_optional_number(f[4], "ert_s"), detail::parse_flag(f[5], "failed"), f[6]});
  }
  return rows;
}

/// Effective running time grid (instances down, workers across) followed by
/// the saturation point of each worker count's curve. With several rows per
/// cell the lower median ert is used.
inline std::string render_report(std::span<const BenchRow> rows, double epsilon = 0.05) {
  std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> cells;
  std::set<std::pair<std::size_t, std::size_t>> failed;
  std::set<std::size_t> instances, workers;
  for (const auto& r : rows) {
    instances.insert(r.n_instances);
    workers.insert(r.workers);
    if (r.failed || std::isnan(r.ert_s)) failed.insert({r.n_instances, r.workers});
    else cells[{r.n_instances, r.workers}].push_back(r.ert_s);
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[(v.size() - 1) / 2];
  };

  std::string out = "n_instances";
  for (auto m : workers) out += ",ert_s_workers_" + std::to_string(m);
  out += '\n';
  for (auto n : instances) {
    out += std::to_string(n);
    for (auto m : workers) {
      out += ',';
      if (failed.count({n, m})) out += "failed";
      else if (auto it = cells.find({n, m}); it != cells.end()) out += format_number(median(it->second));
    }
    out += '\n';
  }
  out += "\nworkers,saturation_n\n";
  for (auto m : workers) {
    std::vector<std::pair<std::size_t, double>> curve;
    for (auto n : instances)
      if (auto it = cells.find({n, m}); it != cells.end() && !failed.count({n, m})) curve.emplace_back(n, median(it->second));
    out += std::to_string(m) + ',';
    if (curve.size() >= 2) {
      if (auto sat = bench::detect_saturation(curve, epsilon)) out += std::to_string(*sat);
      else out += "none";
    } else {
      out += "insufficient";
    }
    out += '\n';
  }
  return out;
}

}  // namespace gnssrx::io
