#include "rmsim/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rmsim {

double event_time(const Event& e) {
    return std::visit([](const auto& ev) { return ev.time; }, e);
}

int Trace::column_index(const std::string& name) const {
    auto it = std::find(columns.begin(), columns.end(), name);
    return it == columns.end() ? -1 : static_cast<int>(it - columns.begin());
}

std::vector<double> Trace::column(const std::string& name) const {
    int idx = column_index(name);
    if (idx < 0) throw StructuralError("trace has no column '" + name + "'");
    std::vector<double> out(rows.size());
    for (size_t r = 0; r < rows.size(); ++r) out[r] = rows[r][static_cast<size_t>(idx)];
    return out;
}

// ---------------------------------------------------------------------------
// DynamicSystem

DynamicSystem::DynamicSystem(NetworkModel network, std::vector<Device> devices, SystemBase base,
                             double network_tol, int max_inner_iter)
    : network_(std::move(network)),
      devices_(std::move(devices)),
      base_(base),
      network_tol_(network_tol),
      max_inner_iter_(max_inner_iter) {
    const auto& slack = network_.bus(network_.slack_index());
    infinite_bus_ = InfiniteBusModel{slack.id, slack.v_setpoint, deg_to_rad(slack.angle_setpoint_deg)};

    std::vector<int> seen;
    for (auto& dev : devices_) {
        const int bus = device_bus(dev);
        const int idx = network_.bus_index(bus);
        if (std::find(seen.begin(), seen.end(), bus) != seen.end()) {
            throw StructuralError("two dynamic devices share bus " + std::to_string(bus));
        }
        if (idx == network_.slack_index()) {
            throw StructuralError("a dynamic device cannot sit on the infinite bus");
        }
        seen.push_back(bus);
        device_bus_.push_back(idx);
        offsets_.push_back(n_states_);
        n_states_ += device_state_count(dev);
        std::visit([&](auto& d) { d.set_system_base(base_.s_base_mva, base_.f_hz); }, dev);
    }

    load_y_nominal_ = Eigen::VectorXcd::Zero(network_.n_buses());
    load_scale_.assign(static_cast<size_t>(network_.n_buses()), 1.0);
    rebuild();
    v_guess_ = Eigen::VectorXcd::Constant(network_.n_buses(), Complex(1.0, 0.0));
    v_guess_(network_.slack_index()) = infinite_bus_.phasor();
}

std::pair<int, int> DynamicSystem::device_state_span(int device_index) const {
    return {offsets_[static_cast<size_t>(device_index)],
            device_state_count(devices_[static_cast<size_t>(device_index)])};
}

std::vector<std::string> DynamicSystem::state_labels() const {
    std::vector<std::string> labels;
    labels.reserve(static_cast<size_t>(n_states_));
    for (const auto& dev : devices_) {
        auto dl = std::visit([](const auto& d) { return d.state_labels(); }, dev);
        labels.insert(labels.end(), dl.begin(), dl.end());
    }
    return labels;
}

void DynamicSystem::initialize(const PowerFlowSolution& pf, double equilibrium_tol) {
    // Freeze loads as constant shunts at their solved voltages.
    load_y_nominal_.setZero();
    for (const auto& load : network_.loads()) {
        const int idx = network_.bus_index(load.bus);
        const Complex v = pf.v(idx);
        const Complex s0 = Complex(load.p_mw, load.q_mvar) / network_.s_base_mva() * load.scale;
        load_y_nominal_(idx) += std::conj(s0) / std::norm(v);
    }
    std::fill(load_scale_.begin(), load_scale_.end(), 1.0);

    x0_.assign(static_cast<size_t>(n_states_), 0.0);
    for (size_t d = 0; d < devices_.size(); ++d) {
        const int idx = device_bus_[d];
        const Complex v = pf.v(idx);
        // The power-flow injection is net of load; the device supplies both.
        Complex s_dev = pf.s_injected(idx);
        for (const auto& load : network_.loads()) {
            if (network_.bus_index(load.bus) == idx) {
                s_dev += Complex(load.p_mw, load.q_mvar) / network_.s_base_mva() * load.scale;
            }
        }
        auto xd = std::visit([&](auto& dev) { return dev.initialize(v, s_dev); }, devices_[d]);
        std::copy(xd.begin(), xd.end(), x0_.begin() + offsets_[d]);
    }

    rebuild();
    v_guess_ = pf.v;
    initialized_ = true;

    std::vector<double> dx(static_cast<size_t>(n_states_), 0.0);
    derivatives(x0_, dx);
    double resid = 0.0;
    for (double v : dx) resid = std::max(resid, std::abs(v));
    if (resid > equilibrium_tol) {
        throw InitializationError("operating point is not an equilibrium (|x'| = " +
                                  std::to_string(resid) + ")");
    }
}

void DynamicSystem::rebuild() {
    y_dyn_ = assemble_admittance(network_);
    for (int i = 0; i < network_.n_buses(); ++i) {
        y_dyn_(i, i) += load_y_nominal_(i) * load_scale_[static_cast<size_t>(i)];
    }
    for (size_t d = 0; d < devices_.size(); ++d) {
        const Complex yn =
            std::visit([](const auto& dev) { return dev.norton_admittance_sys(); }, devices_[d]);
        y_dyn_(device_bus_[d], device_bus_[d]) += yn;
    }

    free_rows_.clear();
    for (int i = 0; i < network_.n_buses(); ++i) {
        if (i != network_.slack_index()) free_rows_.push_back(i);
    }
    const int nf = static_cast<int>(free_rows_.size());
    Eigen::MatrixXcd yuu(nf, nf);
    for (int r = 0; r < nf; ++r) {
        for (int c = 0; c < nf; ++c) yuu(r, c) = y_dyn_(free_rows_[r], free_rows_[c]);
    }
    lu_.compute(yuu);
}

Eigen::VectorXcd DynamicSystem::norton_currents(std::span<const double> x,
                                                const Eigen::VectorXcd& v) const {
    Eigen::VectorXcd i = Eigen::VectorXcd::Zero(network_.n_buses());
    for (size_t d = 0; d < devices_.size(); ++d) {
        const auto x_dev = x.subspan(static_cast<size_t>(offsets_[d]),
                                     static_cast<size_t>(device_state_count(devices_[d])));
        i(device_bus_[d]) += std::visit(
            [&](const auto& dev) { return dev.norton_current_sys(x_dev, v(device_bus_[d])); },
            devices_[d]);
    }
    return i;
}

Eigen::VectorXcd DynamicSystem::solve_network(std::span<const double> x) const {
    const int nf = static_cast<int>(free_rows_.size());
    const int slack = network_.slack_index();
    const Complex v_slack = infinite_bus_.phasor();

    Eigen::VectorXcd v = v_guess_;
    v(slack) = v_slack;

    for (int iter = 0; iter < max_inner_iter_; ++iter) {
        const Eigen::VectorXcd i_n = norton_currents(x, v);
        Eigen::VectorXcd rhs(nf);
        for (int r = 0; r < nf; ++r) {
            rhs(r) = i_n(free_rows_[r]) - y_dyn_(free_rows_[r], slack) * v_slack;
        }
        const Eigen::VectorXcd vu = lu_.solve(rhs);
        double delta = 0.0;
        for (int r = 0; r < nf; ++r) {
            delta = std::max(delta, std::abs(vu(r) - v(free_rows_[r])));
            v(free_rows_[r]) = vu(r);
        }
        if (!v.allFinite()) {
            throw NumericalError("network solve produced non-finite voltages");
        }
        if (delta < network_tol_) {
            v_guess_ = v;
            return v;
        }
    }
    throw ConvergenceError("dynamic network solve did not converge", context_time_);
}

void DynamicSystem::derivatives(std::span<const double> x, std::span<double> dx) const {
    const Eigen::VectorXcd v = solve_network(x);
    for (size_t d = 0; d < devices_.size(); ++d) {
        const int n = device_state_count(devices_[d]);
        const auto x_dev = x.subspan(static_cast<size_t>(offsets_[d]), static_cast<size_t>(n));
        auto dx_dev = dx.subspan(static_cast<size_t>(offsets_[d]), static_cast<size_t>(n));
        std::visit([&](const auto& dev) { dev.derivatives(x_dev, v(device_bus_[d]), dx_dev); },
                   devices_[d]);
    }
}

void DynamicSystem::project(std::span<double> x) const {
    for (size_t d = 0; d < devices_.size(); ++d) {
        const int n = device_state_count(devices_[d]);
        auto x_dev = x.subspan(static_cast<size_t>(offsets_[d]), static_cast<size_t>(n));
        std::visit([&](const auto& dev) { dev.project_states(x_dev); }, devices_[d]);
    }
}

void DynamicSystem::apply_event(const Event& event) {
    std::visit(
        [&](const auto& ev) {
            using T = std::decay_t<decltype(ev)>;
            if constexpr (std::is_same_v<T, ApplyFault>) {
                const Complex y = (ev.r == 0.0 && ev.x == 0.0)
                                      ? Complex(1e7, 0.0)
                                      : 1.0 / Complex(ev.r, ev.x);
                network_ = network_.with_fault(ev.bus, y);
            } else if constexpr (std::is_same_v<T, ClearFault>) {
                network_ = network_.without_fault();
                if (ev.trip_branch) network_ = network_.with_branch_tripped(*ev.trip_branch);
            } else if constexpr (std::is_same_v<T, LoadScale>) {
                const int idx = network_.bus_index(ev.bus);
                if (load_y_nominal_(idx) == Complex(0.0, 0.0)) {
                    throw StructuralError("load scale event targets bus " +
                                          std::to_string(ev.bus) + " which has no load");
                }
                load_scale_[static_cast<size_t>(idx)] = ev.scale;
            } else if constexpr (std::is_same_v<T, ParamOverride>) {
                bool found = false;
                for (auto& dev : devices_) {
                    if (device_name(dev) == ev.device) {
                        std::visit([&](auto& d) { d.set_field(ev.field, ev.value); }, dev);
                        found = true;
                        break;
                    }
                }
                if (!found) {
                    throw StructuralError("parameter event targets unknown device '" + ev.device +
                                          "'");
                }
            }
        },
        event);
    rebuild();
}

std::vector<std::string> DynamicSystem::channel_columns() const {
    static const char* kChannels[] = {"angle_deg", "speed_pu", "p_mw", "q_mvar", "v_pu", "i_pu"};
    std::vector<std::string> cols;
    for (const auto& dev : devices_) {
        for (const char* ch : kChannels) cols.push_back(device_name(dev) + "." + ch);
    }
    return cols;
}

void DynamicSystem::channel_row(std::span<const double> x, const Eigen::VectorXcd& v,
                                std::span<double> out) const {
    size_t o = 0;
    for (size_t d = 0; d < devices_.size(); ++d) {
        const auto x_dev = x.subspan(static_cast<size_t>(offsets_[d]),
                                     static_cast<size_t>(device_state_count(devices_[d])));
        const Complex v_bus = v(device_bus_[d]);
        std::visit(
            [&](const auto& dev) {
                const Complex i_sys = dev.injection_sys(x_dev, v_bus);
                const Complex s_sys = v_bus * std::conj(i_sys);
                out[o++] = rad_to_deg(dev.angle(x_dev) - infinite_bus_.angle);
                out[o++] = 1.0 + dev.speed_deviation(x_dev);
                out[o++] = s_sys.real() * base_.s_base_mva;
                out[o++] = s_sys.imag() * base_.s_base_mva;
                out[o++] = std::abs(v_bus);
                out[o++] = std::abs(i_sys) / dev.base_ratio();
            },
            devices_[d]);
    }
}

// ---------------------------------------------------------------------------
// Simulator

Simulator::Simulator(DynamicSystem system, SimConfig config)
    : system_(std::move(system)), config_(config) {
    if (config_.dt <= 0.0 || config_.dt > 0.01 + 1e-12) {
        throw StructuralError("dt must lie in (0, 0.01] s");
    }
    if (config_.t_end <= 0.0) throw StructuralError("t_end must be positive");
}

void Simulator::set_initial_state(std::vector<double> x) {
    if (static_cast<int>(x.size()) != system_.n_states()) {
        throw StructuralError("initial state has wrong dimension");
    }
    x_start_ = std::move(x);
}

Trace Simulator::run(std::span<const Event> events) {
    std::vector<Event> evs(events.begin(), events.end());
    std::stable_sort(evs.begin(), evs.end(),
                     [](const Event& a, const Event& b) { return event_time(a) < event_time(b); });
    for (const auto& e : evs) {
        if (event_time(e) < 0.0 || event_time(e) > config_.t_end + 1e-9) {
            throw StructuralError("event time outside the simulated window");
        }
    }

    Trace trace;
    trace.columns = system_.channel_columns();
    x_ = x_start_ ? *x_start_ : system_.x0();

    const auto record = [&](double t) {
        const Eigen::VectorXcd v = system_.solve_network(x_);
        std::vector<double> row(trace.columns.size(), 0.0);
        system_.channel_row(x_, v, row);
        trace.times.push_back(t);
        trace.rows.push_back(std::move(row));
    };
    const auto rerecord_last = [&]() {
        const Eigen::VectorXcd v = system_.solve_network(x_);
        system_.channel_row(x_, v, trace.rows.back());
    };

    size_t ev_i = 0;
    const auto apply_events_at = [&](double t) {
        bool any = false;
        while (ev_i < evs.size() && event_time(evs[ev_i]) <= t + 1e-9) {
            system_.apply_event(evs[ev_i]);
            ++ev_i;
            any = true;
        }
        return any;
    };

    double t = 0.0;
    try {
        system_.set_context_time(t);
        apply_events_at(0.0);
        record(0.0);
        while (t < config_.t_end - 1e-12) {
            const double t_target = std::min(
                config_.t_end, ev_i < evs.size() ? event_time(evs[ev_i])
                                                 : std::numeric_limits<double>::infinity());
            // Walk an index-based grid t0 + k*dt so step times carry no
            // accumulated rounding and the segment lands exactly on t_target
            // (the final step absorbs any sub-dt remainder).
            const double t0 = t;
            const double span = t_target - t0;
            const auto n_steps = std::max<long long>(
                1, static_cast<long long>(std::ceil(span / config_.dt - 1e-9)));
            for (long long k = 1; k <= n_steps && span > 1e-12; ++k) {
                const double t_next =
                    (k == n_steps) ? t_target : t0 + static_cast<double>(k) * config_.dt;
                const double h = t_next - t;
                system_.set_context_time(t);
                if (config_.integrator == Integrator::trapezoidal) {
                    step_trapezoidal(t, h);
                } else {
                    step_rk4(t, h);
                }
                t = t_next;
                for (double s : x_) {
                    if (!std::isfinite(s)) {
                        throw NumericalError("state diverged to a non-finite value");
                    }
                }
                record(t);
            }
            t = t_target;
            if (!trace.times.empty()) trace.times.back() = t;
            if (apply_events_at(t)) rerecord_last();
        }
    } catch (const SimulationError&) {
        throw;
    } catch (const std::runtime_error& err) {
        trace.truncated = true;
        throw SimulationError(err.what(), t, std::move(trace));
    }
    return trace;
}

void Simulator::step_trapezoidal(double t, double h) {
    const size_t n = x_.size();
    std::vector<double> f0(n), f1(n), x_pred(n), x_new(n);
    system_.derivatives(x_, f0);
    for (size_t i = 0; i < n; ++i) x_pred[i] = x_[i] + h * f0[i];
    system_.project(x_pred);

    double x_scale = 1.0;
    for (double v : x_) x_scale = std::max(x_scale, std::abs(v));
    const double tol = 1e-9 * x_scale;

    for (int iter = 0; iter < 50; ++iter) {
        system_.derivatives(x_pred, f1);
        double delta = 0.0;
        for (size_t i = 0; i < n; ++i) {
            x_new[i] = x_[i] + 0.5 * h * (f0[i] + f1[i]);
        }
        // Projecting each iterate keeps limited states admissible without
        // breaking the fixed-point contraction (the clamp is nonexpansive).
        system_.project(x_new);
        for (size_t i = 0; i < n; ++i) {
            delta = std::max(delta, std::abs(x_new[i] - x_pred[i]));
        }
        x_pred.swap(x_new);
        if (delta < tol) {
            x_.swap(x_pred);
            return;
        }
    }
    throw ConvergenceError("trapezoidal corrector did not converge", t);
}

void Simulator::step_rk4(double /*t*/, double h) {
    const size_t n = x_.size();
    std::vector<double> k1(n), k2(n), k3(n), k4(n), xt(n);
    system_.derivatives(x_, k1);
    for (size_t i = 0; i < n; ++i) xt[i] = x_[i] + 0.5 * h * k1[i];
    system_.derivatives(xt, k2);
    for (size_t i = 0; i < n; ++i) xt[i] = x_[i] + 0.5 * h * k2[i];
    system_.derivatives(xt, k3);
    for (size_t i = 0; i < n; ++i) xt[i] = x_[i] + h * k3[i];
    system_.derivatives(xt, k4);
    for (size_t i = 0; i < n; ++i) {
        x_[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    system_.project(x_);
}

Trace resample(const Trace& trace, int stride) {
    if (stride < 1) throw StructuralError("resample stride must be at least 1");
    Trace out;
    out.columns = trace.columns;
    out.truncated = trace.truncated;
    out.stride = trace.stride * stride;
    if (trace.times.empty()) return out;

    for (size_t i = 0; i < trace.times.size(); i += static_cast<size_t>(stride)) {
        out.times.push_back(trace.times[i]);
        out.rows.push_back(trace.rows[i]);
    }
    if (out.times.back() != trace.times.back()) {
        out.times.push_back(trace.times.back());
        out.rows.push_back(trace.rows.back());
    }
    return out;
}

} // namespace rmsim
