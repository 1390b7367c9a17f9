#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "rmsim/network.hpp"

using namespace rmsim;

namespace {

std::vector<BusSpec> four_buses() {
    return {
        {1, BusKind::pv, 20.0, 1.03, 0.0},
        {2, BusKind::pv, 20.0, 1.03, 0.0},
        {5, BusKind::pq, 230.0, 1.0, 0.0},
        {6, BusKind::slack, 230.0, 1.0, 0.0},
    };
}

} // namespace

TEST_CASE("pi stamping matches hand-computed line admittances") {
    // One line 5-6: r = 0.01, x = 0.10, total charging b = 0.10.
    std::vector<BusSpec> buses = {{5, BusKind::pq, 230.0, 1.0, 0.0},
                                  {6, BusKind::slack, 230.0, 1.0, 0.0}};
    std::vector<BranchSpec> branches = {{"L56", 5, 6, 0.01, 0.10, 0.10, 1.0, true}};
    NetworkModel net(buses, branches, {});

    // 1/(0.01 + j0.10) and the half charging, computed by hand.
    const Complex ys(0.9900990099009901, -9.900990099009901);
    const Complex diag = ys + Complex(0.0, 0.05);

    const auto& y = net.y_bus();
    CHECK(std::abs(y(0, 0) - diag) < 1e-12);
    CHECK(std::abs(y(1, 1) - diag) < 1e-12);
    CHECK(std::abs(y(0, 1) + ys) < 1e-12);
    CHECK(std::abs(y(1, 0) + ys) < 1e-12);
}

TEST_CASE("parallel circuits add their admittances") {
    std::vector<BusSpec> buses = {{5, BusKind::pq, 230.0, 1.0, 0.0},
                                  {6, BusKind::slack, 230.0, 1.0, 0.0}};
    std::vector<BranchSpec> one = {{"a", 5, 6, 0.01, 0.10, 0.10, 1.0, true}};
    std::vector<BranchSpec> two = {{"a", 5, 6, 0.01, 0.10, 0.10, 1.0, true},
                                   {"b", 5, 6, 0.01, 0.10, 0.10, 1.0, true}};
    NetworkModel single(buses, one, {});
    NetworkModel twin(buses, two, {});
    CHECK((twin.y_bus() - 2.0 * single.y_bus()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("off-nominal tap stamps the asymmetric pi model") {
    // Pure reactance x = 0.1 (ys = -10j), tap 2 on the from side:
    // from diagonal ys/4, to diagonal ys, off-diagonals ys/2.
    std::vector<BusSpec> buses = {{1, BusKind::slack, 20.0, 1.0, 0.0},
                                  {2, BusKind::pq, 230.0, 1.0, 0.0}};
    std::vector<BranchSpec> branches = {{"T", 1, 2, 0.0, 0.1, 0.0, 2.0, true}};
    NetworkModel net(buses, branches, {});
    const auto& y = net.y_bus();
    CHECK(std::abs(y(0, 0) - Complex(0.0, -2.5)) < 1e-12);
    CHECK(std::abs(y(1, 1) - Complex(0.0, -10.0)) < 1e-12);
    CHECK(std::abs(y(0, 1) - Complex(0.0, 5.0)) < 1e-12);
    CHECK(std::abs(y(1, 0) - Complex(0.0, 5.0)) < 1e-12);
}

TEST_CASE("rows of a shunt-free network sum to zero") {
    std::vector<BranchSpec> branches = {
        {"T1", 1, 5, 0.0, 0.0166667, 0.0, 1.0, true},
        {"T2", 2, 5, 0.0, 0.0166667, 0.0, 1.0, true},
        {"L56", 5, 6, 0.01, 0.10, 0.0, 1.0, true},
    };
    NetworkModel net(four_buses(), branches, {});
    const auto& y = net.y_bus();
    for (int i = 0; i < net.n_buses(); ++i) {
        CHECK(std::abs(y.row(i).sum()) < 1e-12);
    }
}

TEST_CASE("out-of-service branch contributes nothing") {
    std::vector<BranchSpec> with = {{"a", 5, 6, 0.01, 0.10, 0.10, 1.0, true},
                                    {"b", 5, 6, 0.01, 0.10, 0.10, 1.0, false}};
    std::vector<BranchSpec> without = {{"a", 5, 6, 0.01, 0.10, 0.10, 1.0, true}};
    std::vector<BusSpec> buses = {{5, BusKind::pq, 230.0, 1.0, 0.0},
                                  {6, BusKind::slack, 230.0, 1.0, 0.0}};
    NetworkModel lhs(buses, with, {});
    NetworkModel rhs(buses, without, {});
    CHECK((lhs.y_bus() - rhs.y_bus()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fault shunt lands on the diagonal only and clears exactly") {
    std::vector<BranchSpec> branches = {{"L56", 5, 6, 0.01, 0.10, 0.10, 1.0, true}};
    std::vector<BusSpec> buses = {{5, BusKind::pq, 230.0, 1.0, 0.0},
                                  {6, BusKind::slack, 230.0, 1.0, 0.0}};
    NetworkModel net(buses, branches, {});
    const Complex yf(1e7, 0.0);
    NetworkModel faulted = net.with_fault(5, yf);

    CHECK(std::abs(faulted.y_bus()(0, 0) - net.y_bus()(0, 0) - yf) < 1e-9);
    CHECK(faulted.y_bus()(0, 1) == net.y_bus()(0, 1));
    CHECK(faulted.y_bus()(1, 1) == net.y_bus()(1, 1));

    NetworkModel cleared = faulted.without_fault();
    CHECK((cleared.y_bus() - net.y_bus()).cwiseAbs().maxCoeff() == 0.0);
    // Value semantics: the source model never changed.
    CHECK_FALSE(net.fault().has_value());
}

TEST_CASE("topology events are value-semantic") {
    std::vector<BranchSpec> branches = {{"a", 5, 6, 0.01, 0.10, 0.10, 1.0, true},
                                        {"b", 5, 6, 0.01, 0.10, 0.10, 1.0, true}};
    std::vector<BusSpec> buses = {{5, BusKind::pq, 230.0, 1.0, 0.0},
                                  {6, BusKind::slack, 230.0, 1.0, 0.0}};
    std::vector<LoadSpec> loads = {{5, 967.0, 100.0, 1.0}};
    NetworkModel net(buses, branches, loads);

    NetworkModel tripped = apply_topology_event(net, TripBranch{"b"});
    CHECK(net.branches()[1].in_service);
    CHECK_FALSE(tripped.branches()[1].in_service);

    NetworkModel scaled = apply_topology_event(net, SetLoadScale{5, 0.9});
    CHECK(net.loads()[0].scale == 1.0);
    CHECK(scaled.loads()[0].scale == 0.9);

    NetworkModel faulted = apply_topology_event(net, SetFault{5, Complex(0.0, -100.0)});
    CHECK(faulted.fault().has_value());
    NetworkModel cleared = apply_topology_event(faulted, ClearFaultEvent{});
    CHECK_FALSE(cleared.fault().has_value());
}

TEST_CASE("validation rejects malformed networks") {
    auto buses = four_buses();
    std::vector<BranchSpec> ok = {{"L", 5, 6, 0.01, 0.10, 0.0, 1.0, true}};

    SUBCASE("duplicate bus id") {
        buses.push_back({5, BusKind::pq, 230.0, 1.0, 0.0});
        CHECK_THROWS_AS(NetworkModel(buses, ok, {}), StructuralError);
    }
    SUBCASE("two slack buses named in the message") {
        buses[0].kind = BusKind::slack;
        try {
            NetworkModel net(buses, ok, {});
            FAIL("expected a StructuralError");
        } catch (const StructuralError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("[bus] id 1") != std::string::npos);
            CHECK(msg.find("[bus] id 6") != std::string::npos);
        }
    }
    SUBCASE("no slack bus") {
        buses[3].kind = BusKind::pq;
        CHECK_THROWS_AS(NetworkModel(buses, ok, {}), StructuralError);
    }
    SUBCASE("zero branch reactance") {
        std::vector<BranchSpec> bad = {{"L", 5, 6, 0.01, 0.0, 0.0, 1.0, true}};
        CHECK_THROWS_AS(NetworkModel(buses, bad, {}), StructuralError);
    }
    SUBCASE("branch to unknown bus") {
        std::vector<BranchSpec> bad = {{"L", 5, 99, 0.01, 0.10, 0.0, 1.0, true}};
        CHECK_THROWS_AS(NetworkModel(buses, bad, {}), StructuralError);
    }
    SUBCASE("self-loop branch") {
        std::vector<BranchSpec> bad = {{"L", 5, 5, 0.01, 0.10, 0.0, 1.0, true}};
        CHECK_THROWS_AS(NetworkModel(buses, bad, {}), StructuralError);
    }
    SUBCASE("non-positive tap") {
        std::vector<BranchSpec> bad = {{"L", 5, 6, 0.01, 0.10, 0.0, 0.0, true}};
        CHECK_THROWS_AS(NetworkModel(buses, bad, {}), StructuralError);
    }
    SUBCASE("duplicate branch id") {
        std::vector<BranchSpec> bad = {{"L", 5, 6, 0.01, 0.10, 0.0, 1.0, true},
                                       {"L", 1, 5, 0.0, 0.0166667, 0.0, 1.0, true}};
        CHECK_THROWS_AS(NetworkModel(buses, bad, {}), StructuralError);
    }
    SUBCASE("load at unknown bus") {
        std::vector<LoadSpec> bad = {{99, 100.0, 0.0, 1.0}};
        CHECK_THROWS_AS(NetworkModel(buses, ok, bad), StructuralError);
    }
    SUBCASE("unknown bus id lookup") {
        NetworkModel net(buses, ok, {});
        CHECK_THROWS_AS(net.bus_index(42), StructuralError);
    }
    SUBCASE("negative load scale") {
        std::vector<LoadSpec> loads = {{5, 967.0, 100.0, 1.0}};
        NetworkModel net(buses, ok, loads);
        CHECK_THROWS_AS(net.with_load_scale(5, -0.1), StructuralError);
        CHECK_THROWS_AS(net.with_load_scale(6, 0.5), StructuralError);
    }
}
