#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rmsim/simulation.hpp"
#include "rmsim/smallsignal.hpp"

namespace rmsim {

inline constexpr const char* kToolVersion = "rmsim 1.0.0";

/// Deterministic value formatting shared by every artifact writer.
std::string format_value(double v);

/// Trace CSV: header `time,<device>.<channel>,...`; time at microsecond
/// resolution, values via format_value. A truncated trace ends with a
/// marker row so partial results are recognizable.
void write_trace_csv(const std::string& path, const Trace& trace);
Trace read_trace_csv(const std::string& path);

/// Flat key = value report files (one pair per line, order preserved).
using KvPairs = std::vector<std::pair<std::string, std::string>>;
void write_kv(const std::string& path, const KvPairs& pairs);
KvPairs read_kv(const std::string& path);

/// Generic CSV table with pre-rendered cells.
void write_table_csv(const std::string& path, const std::vector<std::string>& header,
                     const std::vector<std::vector<std::string>>& rows);

/// Mode table: one row per mode, sorted as given, with the top participating
/// states named inline.
void write_modes_csv(const std::string& path, const std::vector<Mode>& modes,
                     const std::vector<std::string>& state_labels);

/// Run manifest (JSON), written atomically via a temp file + rename. The
/// wall_time_s field is the only part of a run's artifacts allowed to vary
/// between identical invocations.
void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::string& scenario_path, double wall_time_s);

} // namespace rmsim
