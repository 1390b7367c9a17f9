#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rmsim/io.hpp"
#include "rmsim/scenario.hpp"
#include "rmsim/smallsignal.hpp"
#include "rmsim/studies.hpp"

namespace {

using namespace rmsim;
namespace fs = std::filesystem;

struct CommonArgs {
    std::string scenario_path;
    std::string out_dir;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("scenario", args.scenario_path, "Scenario file")->required();
    cmd->add_option("--out", args.out_dir, "Output directory (default: $RMSIM_OUT_DIR or .)");
    cmd->add_option("--override", args.overrides,
                    "Pre-run parameter override, path=value (repeatable)");
}

fs::path resolve_out_dir(const CommonArgs& args) {
    std::string dir = args.out_dir;
    if (dir.empty()) {
        if (const char* env = std::getenv("RMSIM_OUT_DIR"); env && *env) dir = env;
    }
    if (dir.empty()) dir = ".";
    fs::create_directories(dir);
    return dir;
}

Scenario load_with_overrides(const CommonArgs& args) {
    Scenario sc = load_scenario(args.scenario_path);
    for (const auto& o : args.overrides) apply_override(sc, o);
    validate_scenario(sc);
    return sc;
}

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string bus_kind_name(BusKind k) {
    switch (k) {
        case BusKind::slack: return "slack";
        case BusKind::pv: return "pv";
        default: return "pq";
    }
}

std::string join(const std::vector<std::string>& items, const char* sep) {
    std::string out;
    for (const auto& s : items) {
        if (!out.empty()) out += sep;
        out += s;
    }
    return out;
}

int cmd_powerflow(const CommonArgs& args) {
    Stopwatch clock;
    const Scenario sc = load_with_overrides(args);
    const NetworkModel net = make_network(sc);
    const PowerFlowSolution pf = solve_power_flow(net, make_dispatch(sc));
    const fs::path dir = resolve_out_dir(args);

    std::printf("%6s  %-6s  %10s  %12s  %12s  %12s\n", "bus", "kind", "v_pu", "angle_deg",
                "p_mw", "q_mvar");
    std::vector<std::vector<std::string>> rows;
    for (int i = 0; i < net.n_buses(); ++i) {
        const auto& b = net.bus(i);
        const Complex v = pf.v(i);
        const Complex s = pf.s_injected(i) * net.s_base_mva();
        std::printf("%6d  %-6s  %10.6f  %12.6f  %12.4f  %12.4f\n", b.id,
                    bus_kind_name(b.kind).c_str(), std::abs(v), rad_to_deg(std::arg(v)),
                    s.real(), s.imag());
        rows.push_back({std::to_string(b.id), bus_kind_name(b.kind), format_value(std::abs(v)),
                        format_value(rad_to_deg(std::arg(v))), format_value(s.real()),
                        format_value(s.imag())});
    }
    std::printf("converged in %d iterations, max mismatch %.3e pu\n", pf.iterations,
                pf.max_mismatch);
    write_table_csv((dir / "powerflow.csv").string(),
                    {"bus", "kind", "v_pu", "angle_deg", "p_mw", "q_mvar"}, rows);
    write_manifest(dir.string(), "powerflow", args.scenario_path, clock.seconds());
    return 0;
}

struct VerdictArtifacts {
    StabilityVerdict verdict;
    TaxonomyLabel label;
};

VerdictArtifacts judge_run(const Scenario& sc, const Trace& trace) {
    double t_ref = 0.0;
    bool has_fault = false;
    for (const auto& ev : sc.events) {
        t_ref = std::max(t_ref, event_time(ev));
        has_fault = has_fault || std::holds_alternative<ApplyFault>(ev);
    }
    const auto cls = has_fault ? DisturbanceClass::large : DisturbanceClass::small;
    VerdictArtifacts a;
    a.verdict = detect_loss_of_sync(trace, sc.study.angle_threshold_deg, sc.study.slip_window_s,
                                    t_ref, cls);
    a.label = classify_event(a.verdict, technology_map(sc));
    return a;
}

KvPairs verdict_kv(const Scenario& sc, const VerdictArtifacts& a) {
    KvPairs kv;
    kv.emplace_back("scenario", sc.name);
    kv.emplace_back("study", sc.study.name);
    kv.emplace_back("stable", a.verdict.stable ? "true" : "false");
    if (!a.verdict.stable) {
        kv.emplace_back("first_violation_time_s", format_value(a.verdict.first_violation_time));
        kv.emplace_back("violating_devices", join(a.verdict.violating_devices, ";"));
        kv.emplace_back("criterion", a.verdict.criterion);
    }
    kv.emplace_back("disturbance_class", to_string(a.verdict.disturbance_class));
    kv.emplace_back("proposed_label", to_string(a.label.proposed));
    std::vector<std::string> legacy;
    for (const auto& l : a.label.legacy) legacy.push_back(to_string(l));
    kv.emplace_back("legacy_labels", join(legacy, ";"));
    for (size_t i = 0; i < a.label.rationale.size(); ++i) {
        kv.emplace_back("rationale_" + std::to_string(i), a.label.rationale[i]);
    }
    return kv;
}

void print_verdict(const VerdictArtifacts& a) {
    if (a.verdict.stable) {
        std::printf("verdict: stable\n");
    } else {
        std::printf("verdict: unstable (first violation at t = %.3f s, %s)\n",
                    a.verdict.first_violation_time, a.verdict.criterion.c_str());
        std::printf("violating devices: %s\n", join(a.verdict.violating_devices, ", ").c_str());
    }
    std::printf("proposed label: %s\n", to_string(a.label.proposed).c_str());
    std::vector<std::string> legacy;
    for (const auto& l : a.label.legacy) legacy.push_back(to_string(l));
    std::printf("legacy labels: %s\n",
                legacy.empty() ? "(none)" : join(legacy, ", ").c_str());
    for (const auto& line : a.label.rationale) std::printf("  %s\n", line.c_str());
}

int cmd_simulate(const CommonArgs& args, double dt_flag, double t_end_flag, int stride) {
    Stopwatch clock;
    Scenario sc = load_with_overrides(args);
    if (dt_flag > 0.0) sc.sim.dt = dt_flag;
    if (t_end_flag > 0.0) sc.sim.t_end = t_end_flag;
    const fs::path dir = resolve_out_dir(args);

    Simulator sim(make_system(sc), sc.sim);
    Trace trace;
    try {
        trace = sim.run(sc.events);
    } catch (const SimulationError& e) {
        const Trace& partial = e.partial_trace();
        write_trace_csv((dir / "trace.csv").string(),
                        stride > 1 ? resample(partial, stride) : partial);
        std::cerr << "error: " << e.what() << " (partial trace flushed)\n";
        return 4;
    }

    write_trace_csv((dir / "trace.csv").string(),
                    stride > 1 ? resample(trace, stride) : trace);

    const VerdictArtifacts a = judge_run(sc, trace);
    write_kv((dir / "verdict.kv").string(), verdict_kv(sc, a));
    print_verdict(a);

    double t_ref = 0.0;
    for (const auto& ev : sc.events) t_ref = std::max(t_ref, event_time(ev));
    const double t_start = t_ref + sc.study.ringdown_skip * (sc.sim.t_end - t_ref);
    const std::string channel = ringdown_channel(sc);
    const OscillationEstimate osc = estimate_oscillation(trace, channel, t_start);
    KvPairs okv;
    okv.emplace_back("channel", channel);
    okv.emplace_back("fit_start_s", format_value(t_start));
    okv.emplace_back("frequency_hz", osc.frequency ? format_value(*osc.frequency) : "none");
    okv.emplace_back("growth_rate_per_s", format_value(osc.growth_rate));
    okv.emplace_back("amplitude", format_value(osc.amplitude));
    okv.emplace_back("fit_residual", format_value(osc.fit_residual));
    write_kv((dir / "oscillation.kv").string(), okv);
    if (osc.frequency) {
        std::printf("ringdown %s: %.4f Hz, growth %.5f 1/s (residual %.3f)\n", channel.c_str(),
                    *osc.frequency, osc.growth_rate, osc.fit_residual);
    }

    write_manifest(dir.string(), "simulate", args.scenario_path, clock.seconds());
    return 0;
}

int cmd_cct(const CommonArgs& args, double lo_flag, double hi_flag, double tol_flag) {
    Stopwatch clock;
    const Scenario sc = load_with_overrides(args);
    const fs::path dir = resolve_out_dir(args);
    const double lo = lo_flag >= 0.0 ? lo_flag : sc.study.cct_lo;
    const double hi = hi_flag >= 0.0 ? hi_flag : sc.study.cct_hi;
    const double tol = tol_flag > 0.0 ? tol_flag : sc.study.cct_tol;

    const DynamicSystem sys = make_system(sc);
    const CctResult r = find_cct(sys, sc.sim, make_fault_template(sc), lo, hi, tol);

    std::printf("cct = %.4f s, bracket [%.4f, %.4f] s (width %.4f s)\n", r.cct, r.bracket_lo,
                r.bracket_hi, r.bracket_hi - r.bracket_lo);
    std::printf("%d bisection evaluations, %d simulations in total\n", r.evaluations,
                r.total_simulations);
    KvPairs kv;
    kv.emplace_back("scenario", sc.name);
    kv.emplace_back("cct_s", format_value(r.cct));
    kv.emplace_back("bracket_lo_s", format_value(r.bracket_lo));
    kv.emplace_back("bracket_hi_s", format_value(r.bracket_hi));
    kv.emplace_back("tolerance_s", format_value(r.tolerance));
    kv.emplace_back("evaluations", std::to_string(r.evaluations));
    kv.emplace_back("total_simulations", std::to_string(r.total_simulations));
    write_kv((dir / "cct.kv").string(), kv);
    write_manifest(dir.string(), "cct", args.scenario_path, clock.seconds());
    return 0;
}

int cmd_modes(const CommonArgs& args) {
    Stopwatch clock;
    const Scenario sc = load_with_overrides(args);
    const fs::path dir = resolve_out_dir(args);

    const DynamicSystem sys = make_system(sc);
    const LinearModel lm = linearize(sys);
    const std::vector<Mode> modes = eigenmodes(lm);

    std::printf("%4s  %12s  %12s  %10s  %10s  %s\n", "mode", "re", "im", "freq_hz", "damping",
                "top states");
    for (size_t m = 0; m < modes.size(); ++m) {
        const auto& mode = modes[m];
        std::vector<std::string> tops;
        for (int idx : top_participating_states(mode, 3)) tops.push_back(lm.state_labels[idx]);
        std::printf("%4zu  %12.6f  %12.6f  %10.4f  %9.4f%s  %s\n", m, mode.eigenvalue.real(),
                    mode.eigenvalue.imag(), mode.frequency_hz, mode.damping_ratio,
                    mode.damping_ratio < 0.0 ? "*" : " ", join(tops, ";").c_str());
    }
    const int unstable =
        static_cast<int>(std::count_if(modes.begin(), modes.end(),
                                       [](const Mode& m) { return m.damping_ratio < 0.0; }));
    std::printf("%zu modes, %d with negative damping (*)\n", modes.size(), unstable);
    write_modes_csv((dir / "modes.csv").string(), modes, lm.state_labels);
    write_manifest(dir.string(), "modes", args.scenario_path, clock.seconds());
    return 0;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ParseError*>(&e)) return 2;
    if (dynamic_cast<const PowerFlowDiverged*>(&e)) return 3;
    if (dynamic_cast<const NoBracketError*>(&e)) return 5;
    if (dynamic_cast<const InitializationError*>(&e)) return 6;
    if (dynamic_cast<const NumericalError*>(&e)) return 4;
    if (dynamic_cast<const ConvergenceError*>(&e)) return 4;
    if (dynamic_cast<const StructuralError*>(&e)) return 2;
    return 1;
}

int cmd_sweep(const CommonArgs& args, const std::string& param, const std::string& values_csv,
              const std::string& study, double lo_flag, double hi_flag, double tol_flag) {
    Stopwatch clock;
    const Scenario base = load_with_overrides(args);
    const fs::path dir = resolve_out_dir(args);

    std::vector<double> values;
    {
        std::istringstream ss(values_csv);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            double v = 0.0;
            const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (ec != std::errc() || p != tok.data() + tok.size()) {
                throw StructuralError("sweep value '" + tok + "' is not a number");
            }
            values.push_back(v);
        }
    }
    if (values.empty()) throw StructuralError("--values is empty");

    std::vector<std::string> header = {"param", "value", "status"};
    if (study == "simulate") {
        header.insert(header.end(), {"stable", "first_violation_s", "violating_devices",
                                     "criterion"});
    } else if (study == "cct") {
        header.insert(header.end(), {"cct_s", "bracket_lo_s", "bracket_hi_s", "evaluations",
                                     "total_simulations"});
    } else if (study == "modes") {
        header.insert(header.end(),
                      {"least_damping_ratio", "least_mode_freq_hz", "unstable_modes"});
    } else {
        throw StructuralError("--study must be simulate, cct or modes");
    }
    const size_t n_cols = header.size();

    std::vector<std::vector<std::string>> rows;
    int n_failed = 0;
    int first_fail_code = 0;
    for (double value : values) {
        std::vector<std::string> row = {param, format_value(value)};
        try {
            Scenario sc = base;
            apply_override(sc, param, value);
            validate_scenario(sc);
            if (study == "simulate") {
                Simulator sim(make_system(sc), sc.sim);
                const Trace trace = sim.run(sc.events);
                const VerdictArtifacts a = judge_run(sc, trace);
                row.push_back("ok");
                row.push_back(a.verdict.stable ? "true" : "false");
                row.push_back(a.verdict.stable
                                  ? ""
                                  : format_value(a.verdict.first_violation_time));
                row.push_back(join(a.verdict.violating_devices, ";"));
                row.push_back(a.verdict.criterion);
            } else if (study == "cct") {
                const DynamicSystem sys = make_system(sc);
                const double lo = lo_flag >= 0.0 ? lo_flag : sc.study.cct_lo;
                const double hi = hi_flag >= 0.0 ? hi_flag : sc.study.cct_hi;
                const double tol = tol_flag >= 0.0 ? tol_flag : sc.study.cct_tol;
                const CctResult r = find_cct(sys, sc.sim, make_fault_template(sc), lo, hi, tol);
                row.push_back("ok");
                row.push_back(format_value(r.cct));
                row.push_back(format_value(r.bracket_lo));
                row.push_back(format_value(r.bracket_hi));
                row.push_back(std::to_string(r.evaluations));
                row.push_back(std::to_string(r.total_simulations));
            } else {
                const DynamicSystem sys = make_system(sc);
                const std::vector<Mode> modes = eigenmodes(linearize(sys));
                if (modes.empty()) throw NumericalError("no modes");
                const int unstable = static_cast<int>(
                    std::count_if(modes.begin(), modes.end(),
                                  [](const Mode& m) { return m.damping_ratio < 0.0; }));
                row.push_back("ok");
                row.push_back(format_value(modes.front().damping_ratio));
                row.push_back(format_value(modes.front().frequency_hz));
                row.push_back(std::to_string(unstable));
            }
        } catch (const std::exception& e) {
            row.resize(2);
            row.push_back("failed");
            row.resize(n_cols);
            std::cerr << "sweep " << param << " = " << format_value(value)
                      << " failed: " << e.what() << "\n";
            ++n_failed;
            if (first_fail_code == 0) first_fail_code = exit_code_for(e);
        }
        rows.push_back(std::move(row));
    }

    write_table_csv((dir / "sweep.csv").string(), header, rows);
    for (const auto& row : rows) {
        std::printf("%s\n", join(row, ", ").c_str());
    }
    write_manifest(dir.string(), "sweep", args.scenario_path, clock.seconds());
    if (n_failed == static_cast<int>(values.size())) return first_fail_code;
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"rmsim: phasor-RMS dynamic studies of machine/converter systems"};
    app.require_subcommand(1);

    CommonArgs pf_args;
    CLI::App* pf_cmd = app.add_subcommand("powerflow", "Solve the steady-state operating point");
    add_common(pf_cmd, pf_args);

    CommonArgs sim_args;
    double dt_flag = -1.0, t_end_flag = -1.0;
    int stride = 1;
    CLI::App* sim_cmd = app.add_subcommand("simulate", "Run the scenario's event sequence");
    add_common(sim_cmd, sim_args);
    sim_cmd->add_option("--dt", dt_flag, "Step size override (s)");
    sim_cmd->add_option("--t-end", t_end_flag, "End time override (s)");
    sim_cmd->add_option("--stride", stride, "Keep every stride-th output sample")
        ->check(CLI::PositiveNumber);

    CommonArgs cct_args;
    double lo_flag = -1.0, hi_flag = -1.0, tol_flag = -1.0;
    CLI::App* cct_cmd =
        app.add_subcommand("cct", "Bisect the critical clearing time of the study fault");
    add_common(cct_cmd, cct_args);
    cct_cmd->add_option("--lo", lo_flag, "Stable-side clearing time (s)");
    cct_cmd->add_option("--hi", hi_flag, "Unstable-side clearing time (s)");
    cct_cmd->add_option("--tol", tol_flag, "Bracket tolerance (s)");

    CommonArgs modes_args;
    CLI::App* modes_cmd =
        app.add_subcommand("modes", "Linearize at the operating point and list eigenmodes");
    add_common(modes_cmd, modes_args);

    CommonArgs sweep_args;
    std::string sweep_param, sweep_values, sweep_study = "modes";
    double sweep_lo = -1.0, sweep_hi = -1.0, sweep_tol = -1.0;
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "Repeat a study across parameter values");
    add_common(sweep_cmd, sweep_args);
    sweep_cmd->add_option("--param", sweep_param, "Override path to sweep")->required();
    sweep_cmd->add_option("--values", sweep_values, "Comma-separated values")->required();
    sweep_cmd->add_option("--study", sweep_study, "simulate, cct or modes");
    sweep_cmd->add_option("--lo", sweep_lo, "cct study: stable-side clearing time (s)");
    sweep_cmd->add_option("--hi", sweep_hi, "cct study: unstable-side clearing time (s)");
    sweep_cmd->add_option("--tol", sweep_tol, "cct study: bracket tolerance (s)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*pf_cmd) return cmd_powerflow(pf_args);
        if (*sim_cmd) return cmd_simulate(sim_args, dt_flag, t_end_flag, stride);
        if (*cct_cmd) return cmd_cct(cct_args, lo_flag, hi_flag, tol_flag);
        if (*modes_cmd) return cmd_modes(modes_args);
        if (*sweep_cmd)
            return cmd_sweep(sweep_args, sweep_param, sweep_values, sweep_study, sweep_lo,
                             sweep_hi, sweep_tol);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    return 1;
}
