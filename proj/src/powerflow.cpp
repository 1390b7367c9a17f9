#include "rmsim/powerflow.hpp"

#include <cmath>

namespace rmsim {

namespace {

// Net scheduled complex power per bus: generator dispatch minus scaled load.
Eigen::VectorXcd scheduled_injection(const NetworkModel& net,
                                     std::span<const GenDispatch> dispatch) {
    Eigen::VectorXcd s = Eigen::VectorXcd::Zero(net.n_buses());
    const double s_base = net.s_base_mva();
    for (const auto& g : dispatch)
        s(net.bus_index(g.bus)) += Complex(g.p_mw / s_base, 0.0);
    for (const auto& l : net.loads())
        s(net.bus_index(l.bus)) -= Complex(l.p_mw * l.scale, l.q_mvar * l.scale) / s_base;
    return s;
}

} // namespace

PowerFlowSolution solve_power_flow(const NetworkModel& net, std::span<const GenDispatch> dispatch,
                                   const PowerFlowOptions& options) {
    const int n = net.n_buses();
    const Eigen::MatrixXcd& y = net.y_bus();
    const Eigen::VectorXcd s_sched = scheduled_injection(net, dispatch);

    // Unknowns: theta at every non-slack bus, |v| at every pq bus.
    std::vector<int> ang_idx, mag_idx;
    for (int i = 0; i < n; ++i) {
        if (net.bus(i).kind != BusKind::slack)
            ang_idx.push_back(i);
        if (net.bus(i).kind == BusKind::pq)
            mag_idx.push_back(i);
    }
    const int na = static_cast<int>(ang_idx.size());
    const int nm = static_cast<int>(mag_idx.size());

    Eigen::VectorXd vm(n), va(n);
    for (int i = 0; i < n; ++i) {
        const auto& b = net.bus(i);
        vm(i) = (b.kind == BusKind::pq) ? 1.0 : b.v_setpoint;
        va(i) = deg_to_rad((b.kind == BusKind::slack ? b : net.bus(net.slack_index())).angle_setpoint_deg);
    }

    auto injected = [&](const Eigen::VectorXd& vmag, const Eigen::VectorXd& vang) {
        Eigen::VectorXcd v(n);
        for (int i = 0; i < n; ++i)
            v(i) = std::polar(vmag(i), vang(i));
        Eigen::VectorXcd s(n);
        const Eigen::VectorXcd i_bus = y * v;
        for (int i = 0; i < n; ++i)
            s(i) = v(i) * std::conj(i_bus(i));
        return s;
    };

    auto mismatch = [&](const Eigen::VectorXcd& s_now) {
        Eigen::VectorXd f(na + nm);
        for (int k = 0; k < na; ++k)
            f(k) = s_sched(ang_idx[k]).real() - s_now(ang_idx[k]).real();
        for (int k = 0; k < nm; ++k)
            f(na + k) = s_sched(mag_idx[k]).imag() - s_now(mag_idx[k]).imag();
        return f;
    };

    Eigen::VectorXcd s_now = injected(vm, va);
    Eigen::VectorXd f = mismatch(s_now);
    double max_mis = (na + nm) ? f.cwiseAbs().maxCoeff() : 0.0;
    int iter = 0;

    while (max_mis > options.tol) {
        if (iter >= options.max_iter)
            throw PowerFlowDiverged("power flow did not converge after " +
                                        std::to_string(options.max_iter) +
                                        " iterations (mismatch " + std::to_string(max_mis) + " pu)",
                                    max_mis);

        // Polar Jacobian: dP/dtheta, dP/dV, dQ/dtheta, dQ/dV.
        Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(na + nm, na + nm);
        for (int r = 0; r < na + nm; ++r) {
            const int i = (r < na) ? ang_idx[r] : mag_idx[r - na];
            const bool active = r < na;
            for (int c = 0; c < na + nm; ++c) {
                const int j = (c < na) ? ang_idx[c] : mag_idx[c - na];
                const bool wrt_angle = c < na;
                const double g = y(i, j).real();
                const double b = y(i, j).imag();
                const double th = va(i) - va(j);
                double d;
                if (i != j) {
                    const double vivj = vm(i) * vm(j);
                    if (active && wrt_angle)
                        d = vivj * (g * std::sin(th) - b * std::cos(th));
                    else if (active && !wrt_angle)
                        d = vm(i) * (g * std::cos(th) + b * std::sin(th));
                    else if (!active && wrt_angle)
                        d = -vivj * (g * std::cos(th) + b * std::sin(th));
                    else
                        d = vm(i) * (g * std::sin(th) - b * std::cos(th));
                } else {
                    const double p = s_now(i).real();
                    const double q = s_now(i).imag();
                    if (active && wrt_angle)
                        d = -q - b * vm(i) * vm(i);
                    else if (active && !wrt_angle)
                        d = p / vm(i) + g * vm(i);
                    else if (!active && wrt_angle)
                        d = p - g * vm(i) * vm(i);
                    else
                        d = q / vm(i) - b * vm(i);
                }
                // f = scheduled - injected, so the Newton matrix is -d(f)/dx.
                jac(r, c) = d;
            }
        }

        Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
        if (std::abs(lu.determinant()) < 1e-300)
            throw NumericalError("singular power-flow Jacobian");
        const Eigen::VectorXd dx = lu.solve(f);
        if (!dx.allFinite())
            throw NumericalError("power-flow update is not finite");

        for (int k = 0; k < na; ++k)
            va(ang_idx[k]) += dx(k);
        for (int k = 0; k < nm; ++k)
            vm(mag_idx[k]) += dx(na + k);

        s_now = injected(vm, va);
        f = mismatch(s_now);
        max_mis = f.cwiseAbs().maxCoeff();
        ++iter;
    }

    PowerFlowSolution sol;
    sol.v.resize(n);
    for (int i = 0; i < n; ++i)
        sol.v(i) = std::polar(vm(i), va(i));
    sol.s_injected = s_now;
    sol.iterations = iter;
    sol.max_mismatch = max_mis;
    return sol;
}

} // namespace rmsim
