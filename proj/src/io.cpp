#include "rmsim/io.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace rmsim {

namespace {

constexpr const char* kTruncationMarker = "# truncated: run aborted before t_end";

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw StructuralError("cannot open output file: " + path);
    return out;
}

double parse_num(const std::string& s, const std::string& path) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
        throw StructuralError("malformed number '" + s + "' in " + path);
    }
    return v;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
}

} // namespace

std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

void write_trace_csv(const std::string& path, const Trace& trace) {
    auto out = open_out(path);
    out << "time";
    for (const auto& c : trace.columns) out << ',' << c;
    out << '\n';
    char tbuf[32];
    for (size_t i = 0; i < trace.times.size(); ++i) {
        std::snprintf(tbuf, sizeof tbuf, "%.6f", trace.times[i]);
        out << tbuf;
        for (double v : trace.rows[i]) out << ',' << format_value(v);
        out << '\n';
    }
    if (trace.truncated) out << kTruncationMarker << '\n';
}

Trace read_trace_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw StructuralError("cannot open trace file: " + path);
    Trace t;
    std::string line;
    if (!std::getline(in, line)) throw StructuralError("empty trace file: " + path);
    auto header = split_csv(line);
    if (header.empty() || header[0] != "time") {
        throw StructuralError("trace file lacks a time column: " + path);
    }
    t.columns.assign(header.begin() + 1, header.end());
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            t.truncated = true;
            continue;
        }
        auto cells = split_csv(line);
        if (cells.size() != header.size()) {
            throw StructuralError("ragged trace row in " + path);
        }
        t.times.push_back(parse_num(cells[0], path));
        std::vector<double> row(cells.size() - 1);
        for (size_t j = 1; j < cells.size(); ++j) row[j - 1] = parse_num(cells[j], path);
        t.rows.push_back(std::move(row));
    }
    return t;
}

void write_kv(const std::string& path, const KvPairs& pairs) {
    auto out = open_out(path);
    for (const auto& [k, v] : pairs) out << k << " = " << v << '\n';
}

KvPairs read_kv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw StructuralError("cannot open report file: " + path);
    KvPairs pairs;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) throw StructuralError("malformed report line in " + path);
        pairs.emplace_back(line.substr(0, eq), line.substr(eq + 3));
    }
    return pairs;
}

void write_table_csv(const std::string& path, const std::vector<std::string>& header,
                     const std::vector<std::vector<std::string>>& rows) {
    auto out = open_out(path);
    for (size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    for (const auto& row : rows) {
        for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
        out << '\n';
    }
}

void write_modes_csv(const std::string& path, const std::vector<Mode>& modes,
                     const std::vector<std::string>& state_labels) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(modes.size());
    for (size_t m = 0; m < modes.size(); ++m) {
        const auto& mode = modes[m];
        std::string tops;
        for (int idx : top_participating_states(mode, 3)) {
            if (!tops.empty()) tops += ';';
            tops += state_labels.at(idx);
        }
        rows.push_back({std::to_string(m), format_value(mode.eigenvalue.real()),
                        format_value(mode.eigenvalue.imag()), format_value(mode.frequency_hz),
                        format_value(mode.damping_ratio),
                        mode.damping_ratio < 0.0 ? "1" : "0", tops});
    }
    write_table_csv(path, {"mode", "re", "im", "freq_hz", "damping_ratio", "unstable",
                           "top_states"},
                    rows);
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::string& scenario_path, double wall_time_s) {
    nlohmann::json j;
    j["scenario"] = scenario_path;
    j["command"] = command;
    j["output_dir"] = out_dir;
    j["tool_version"] = kToolVersion;
    j["wall_time_s"] = wall_time_s;

    const auto dir = std::filesystem::path(out_dir);
    const auto tmp = dir / "manifest.json.tmp";
    const auto final_path = dir / "manifest.json";
    {
        std::ofstream out(tmp);
        if (!out) throw StructuralError("cannot open output file: " + tmp.string());
        out << j.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, final_path);
}

} // namespace rmsim
