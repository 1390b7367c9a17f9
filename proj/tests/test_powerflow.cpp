#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rmsim/powerflow.hpp"

using namespace rmsim;

namespace {

// Independent Gauss-Seidel reference solver (no Jacobian, no shared code
// with the implementation under test). PV buses are handled by injecting
// the reactive power implied by the current iterate, then re-pinning the
// voltage magnitude.
Eigen::VectorXcd gauss_seidel_reference(const NetworkModel& net,
                                        std::span<const GenDispatch> dispatch, int sweeps) {
    const int n = net.n_buses();
    const auto& y = net.y_bus();
    Eigen::VectorXcd v(n);
    Eigen::VectorXd p_set = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd q_set = Eigen::VectorXd::Zero(n);

    for (int i = 0; i < n; ++i) {
        const auto& b = net.bus(i);
        v(i) = std::polar(b.kind == BusKind::pq ? 1.0 : b.v_setpoint,
                          b.kind == BusKind::slack ? deg_to_rad(b.angle_setpoint_deg) : 0.0);
    }
    for (const auto& l : net.loads()) {
        const int i = net.bus_index(l.bus);
        p_set(i) -= l.p_mw * l.scale / net.s_base_mva();
        q_set(i) -= l.q_mvar * l.scale / net.s_base_mva();
    }
    for (const auto& g : dispatch) p_set(net.bus_index(g.bus)) += g.p_mw / net.s_base_mva();

    for (int sweep = 0; sweep < sweeps; ++sweep) {
        for (int i = 0; i < n; ++i) {
            const auto& b = net.bus(i);
            if (b.kind == BusKind::slack) continue;
            double q = q_set(i);
            if (b.kind == BusKind::pv) {
                // Reactive power implied by the present iterate.
                q = -std::imag(std::conj(v(i)) * (y.row(i) * v.matrix()).value());
            }
            Complex sum(0.0, 0.0);
            for (int k = 0; k < n; ++k) {
                if (k != i) sum += y(i, k) * v(k);
            }
            Complex vi = (std::conj(Complex(p_set(i), q) / v(i)) - sum) / y(i, i);
            if (b.kind == BusKind::pv) vi *= b.v_setpoint / std::abs(vi);
            v(i) = vi;
        }
    }
    return v;
}

NetworkModel canonical_network() {
    std::vector<BusSpec> buses = {
        {1, BusKind::pv, 20.0, 1.03, 0.0},
        {2, BusKind::pv, 20.0, 1.03, 0.0},
        {5, BusKind::pq, 230.0, 1.0, 0.0},
        {6, BusKind::slack, 230.0, 1.0, 0.0},
    };
    std::vector<BranchSpec> branches = {
        {"T1", 1, 5, 0.0, 0.0166667, 0.0, 1.0, true},
        {"T2", 2, 5, 0.0, 0.0166667, 0.0, 1.0, true},
        {"L56a", 5, 6, 0.01, 0.10, 0.10, 1.0, true},
        {"L56b", 5, 6, 0.01, 0.10, 0.10, 1.0, true},
    };
    std::vector<LoadSpec> loads = {{5, 967.0, 100.0, 1.0}};
    return NetworkModel(buses, branches, loads);
}

} // namespace

TEST_CASE("flat network with no injections solves to the slack point") {
    std::vector<BusSpec> buses = {{5, BusKind::pq, 230.0, 1.0, 0.0},
                                  {6, BusKind::slack, 230.0, 1.0, 0.0}};
    std::vector<BranchSpec> branches = {{"L", 5, 6, 0.01, 0.10, 0.0, 1.0, true}};
    NetworkModel net(buses, branches, {});
    const auto pf = solve_power_flow(net, {});
    CHECK(std::abs(pf.v(0) - Complex(1.0, 0.0)) < 1e-10);
    CHECK(std::abs(pf.v(1) - Complex(1.0, 0.0)) < 1e-10);
    CHECK(std::abs(pf.s_injected(0)) < 1e-10);
    CHECK(std::abs(pf.s_injected(1)) < 1e-10);
}

TEST_CASE("two-bus transfer matches the closed-form angle") {
    // Lossless x = 0.5 between a unit-voltage pv bus and the slack:
    // p = sin(delta)/x with both magnitudes 1, so 20 MW on a 100 MVA base
    // gives delta = asin(0.1). Independent closed form.
    std::vector<BusSpec> buses = {{1, BusKind::pv, 20.0, 1.0, 0.0},
                                  {2, BusKind::slack, 20.0, 1.0, 0.0}};
    std::vector<BranchSpec> branches = {{"L", 1, 2, 0.0, 0.5, 0.0, 1.0, true}};
    NetworkModel net(buses, branches, {});
    std::vector<GenDispatch> dispatch = {{1, 20.0}};
    const auto pf = solve_power_flow(net, dispatch);

    const double delta = std::asin(0.1);
    CHECK(std::arg(pf.v(0)) == doctest::Approx(delta).epsilon(1e-9));
    CHECK(std::abs(pf.v(0)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pf.s_injected(0).real() == doctest::Approx(0.2).epsilon(1e-9));
    // Receiving-end reactive injection of a lossless line: (1 - cos d)/x each end.
    CHECK(pf.s_injected(1).imag() ==
          doctest::Approx((1.0 - std::cos(delta)) / 0.5).epsilon(1e-9));
}

TEST_CASE("canonical case agrees with the Gauss-Seidel reference") {
    NetworkModel net = canonical_network();
    std::vector<GenDispatch> dispatch = {{1, 600.0}, {2, 600.0}};
    const auto pf = solve_power_flow(net, dispatch);
    const auto v_ref = gauss_seidel_reference(net, dispatch, 8000);

    for (int i = 0; i < net.n_buses(); ++i) {
        CHECK(std::abs(pf.v(i) - v_ref(i)) < 1e-7);
    }

    // Contracted properties of the solution itself.
    CHECK(std::abs(pf.v(net.bus_index(1))) == doctest::Approx(1.03).epsilon(1e-12));
    CHECK(std::abs(pf.v(net.bus_index(2))) == doctest::Approx(1.03).epsilon(1e-12));
    CHECK(std::arg(pf.v(net.slack_index())) == 0.0);
    CHECK(pf.s_injected(net.bus_index(1)).real() == doctest::Approx(6.0).epsilon(1e-9));
    CHECK(pf.s_injected(net.bus_index(2)).real() == doctest::Approx(6.0).epsilon(1e-9));
    CHECK(pf.max_mismatch < 1e-10);
    CHECK(pf.iterations <= 30);
}

TEST_CASE("power balance holds across the network") {
    NetworkModel net = canonical_network();
    std::vector<GenDispatch> dispatch = {{1, 600.0}, {2, 600.0}};
    const auto pf = solve_power_flow(net, dispatch);

    // Injections recomputed from first principles: s_i = v_i * conj(Y v)_i.
    const Eigen::VectorXcd i_bus = net.y_bus() * pf.v;
    for (int i = 0; i < net.n_buses(); ++i) {
        CHECK(std::abs(pf.s_injected(i) - pf.v(i) * std::conj(i_bus(i))) < 1e-10);
    }

    // Net active power equals series losses (charging is purely reactive).
    double p_total = pf.s_injected.real().sum();
    double p_loss = 0.0;
    for (const auto& br : net.branches()) {
        const int f = net.bus_index(br.from);
        const int t = net.bus_index(br.to);
        const Complex flow = (pf.v(f) - pf.v(t)) / Complex(br.r, br.x);
        p_loss += br.r * std::norm(flow);
    }
    CHECK(p_total == doctest::Approx(p_loss).epsilon(1e-8));
}

TEST_CASE("load scale shifts the operating point") {
    NetworkModel net = canonical_network();
    std::vector<GenDispatch> dispatch = {{1, 600.0}, {2, 600.0}};
    const auto nominal = solve_power_flow(net, dispatch);
    const auto reduced = solve_power_flow(net.with_load_scale(5, 0.9), dispatch);
    const int i5 = net.bus_index(5);
    CHECK(reduced.s_injected(i5).real() ==
          doctest::Approx(0.9 * nominal.s_injected(i5).real()).epsilon(1e-9));
    // Lighter load, higher voltage.
    CHECK(std::abs(reduced.v(i5)) > std::abs(nominal.v(i5)));
}

TEST_CASE("an infeasible transfer raises PowerFlowDiverged") {
    std::vector<BusSpec> buses = {{1, BusKind::pv, 20.0, 1.0, 0.0},
                                  {2, BusKind::slack, 20.0, 1.0, 0.0}};
    std::vector<BranchSpec> branches = {{"L", 1, 2, 0.0, 0.5, 0.0, 1.0, true}};
    NetworkModel net(buses, branches, {});
    // p = sin(delta)/x cannot exceed 2 pu; ask for 4 pu.
    std::vector<GenDispatch> dispatch = {{1, 400.0}};
    CHECK_THROWS_AS(solve_power_flow(net, dispatch), PowerFlowDiverged);
}

TEST_CASE("dispatch at an unknown bus is rejected") {
    NetworkModel net = canonical_network();
    std::vector<GenDispatch> dispatch = {{42, 600.0}};
    CHECK_THROWS_AS(solve_power_flow(net, dispatch), StructuralError);
}
