#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rmsim/scenario.hpp"
#include "rmsim/studies.hpp"

using namespace rmsim;

namespace {

std::string scn(const char* name) { return std::string(SCENARIO_DIR) + "/" + name; }

Trace make_trace(const std::vector<std::string>& columns, double t_end, double dt,
                 const std::vector<std::function<double(double)>>& f) {
    REQUIRE(columns.size() == f.size());
    Trace trace;
    trace.columns = columns;
    const auto n = static_cast<size_t>(std::llround(t_end / dt));
    for (size_t i = 0; i <= n; ++i) {
        const double t = static_cast<double>(i) * dt;
        trace.times.push_back(t);
        std::vector<double> row;
        row.reserve(f.size());
        for (const auto& fn : f) row.push_back(fn(t));
        trace.rows.push_back(std::move(row));
    }
    return trace;
}

const std::map<std::string, DeviceTech> kTech{
    {"SM-1", DeviceTech::synchronous_machine},
    {"GFM-VSC-2", DeviceTech::gfm_converter},
};

} // namespace

TEST_CASE("constant angles stay synchronized") {
    const Trace trace = make_trace({"SM-1.angle_deg", "GFM-VSC-2.angle_deg"}, 5.0, 0.01,
                                   {[](double) { return 42.0; }, [](double) { return -7.0; }});
    const auto verdict = detect_loss_of_sync(trace);
    CHECK(verdict.stable);
    CHECK(verdict.violating_devices.empty());
    CHECK(verdict.criterion.empty());
}

TEST_CASE("angle excursion past the threshold flags the right device and time") {
    // SM-1 ramps at 200 deg/s from t = 2 s (fast enough that the excursion
    // fires before any slip window closes); the converter holds still.
    const auto ramp = [](double t) { return t < 2.0 ? 0.0 : 200.0 * (t - 2.0); };
    const Trace trace = make_trace({"SM-1.angle_deg", "GFM-VSC-2.angle_deg"}, 8.0, 0.01,
                                   {ramp, [](double) { return 10.0; }});

    SUBCASE("default 180-degree threshold") {
        const auto verdict = detect_loss_of_sync(trace);
        REQUIRE_FALSE(verdict.stable);
        CHECK(verdict.criterion == "angle_excursion");
        CHECK(verdict.first_violation_time == doctest::Approx(2.9).epsilon(0.01));
        REQUIRE(verdict.violating_devices.size() == 1);
        CHECK(verdict.violating_devices[0] == "SM-1");
    }

    SUBCASE("tighter threshold flags earlier, never later") {
        const auto at_180 = detect_loss_of_sync(trace, 180.0);
        const auto at_90 = detect_loss_of_sync(trace, 90.0);
        REQUIRE_FALSE(at_180.stable);
        REQUIRE_FALSE(at_90.stable);
        CHECK(at_90.first_violation_time < at_180.first_violation_time);
        CHECK(at_90.first_violation_time == doctest::Approx(2.46).epsilon(0.01));
    }

    SUBCASE("disturbance class is carried through") {
        const auto verdict =
            detect_loss_of_sync(trace, 180.0, 2.0, 0.0, DisturbanceClass::small);
        CHECK(verdict.disturbance_class == DisturbanceClass::small);
    }
}

TEST_CASE("sustained slip triggers without a threshold crossing") {
    // 50 deg/s drift from t = 1 s: too slow for a quick excursion check, but a
    // monotone run two seconds long sweeping 100 degrees.
    const auto drift = [](double t) { return t < 1.0 ? 0.0 : 50.0 * (t - 1.0); };
    const Trace trace =
        make_trace({"SM-1.angle_deg"}, 6.0, 0.01, {drift});
    const auto verdict = detect_loss_of_sync(trace, 1e6, 2.0);
    REQUIRE_FALSE(verdict.stable);
    CHECK(verdict.criterion == "sustained_slip");
    CHECK(verdict.first_violation_time == doctest::Approx(3.0).epsilon(0.01));
}

TEST_CASE("the reference sample anchors the excursion test") {
    // A step to 100 degrees before the reference time must not count against
    // the post-disturbance baseline.
    const auto step = [](double t) { return t < 0.5 ? 0.0 : 100.0; };
    const Trace trace = make_trace({"SM-1.angle_deg"}, 5.0, 0.01, {step});
    CHECK_FALSE(detect_loss_of_sync(trace, 50.0, 2.0, 0.0).stable);
    CHECK(detect_loss_of_sync(trace, 50.0, 2.0, 2.0).stable);
}

TEST_CASE("a trace without angle channels is rejected") {
    const Trace trace = make_trace({"SM-1.v_pu"}, 1.0, 0.01, {[](double) { return 1.0; }});
    CHECK_THROWS_AS(detect_loss_of_sync(trace), StructuralError);
}

TEST_CASE("ringdown fit recovers frequency and growth of a synthetic signal") {
    const double w = 2.0 * kPi * 0.51;

    SUBCASE("growing oscillation") {
        const Trace trace = make_trace({"x"}, 20.0, 1e-3, {[&](double t) {
                                           return 0.2 * std::exp(0.1 * t) * std::sin(w * t + 0.3);
                                       }});
        const auto est = estimate_oscillation(trace, "x", 0.0);
        REQUIRE(est.frequency.has_value());
        CHECK(*est.frequency == doctest::Approx(0.51).epsilon(0.01));
        CHECK(est.growth_rate == doctest::Approx(0.10).epsilon(0.1));
        CHECK(est.amplitude == doctest::Approx(0.2).epsilon(0.15));
        CHECK(est.fit_residual < 0.05);
    }

    SUBCASE("decaying oscillation") {
        const Trace trace = make_trace({"x"}, 20.0, 1e-3, {[&](double t) {
                                           return 1.5 * std::exp(-0.3 * t) * std::sin(w * t);
                                       }});
        const auto est = estimate_oscillation(trace, "x", 0.0);
        REQUIRE(est.frequency.has_value());
        CHECK(*est.frequency == doctest::Approx(0.51).epsilon(0.01));
        CHECK(est.growth_rate == doctest::Approx(-0.30).epsilon(0.05));
    }

    SUBCASE("constant signal has nothing to fit") {
        const Trace trace = make_trace({"x"}, 10.0, 0.01, {[](double) { return 3.0; }});
        CHECK_FALSE(estimate_oscillation(trace, "x", 0.0).frequency.has_value());
    }

    SUBCASE("pure trend is removed, not mistaken for a mode") {
        const Trace trace = make_trace({"x"}, 10.0, 0.01, {[](double t) { return 0.5 * t; }});
        CHECK_FALSE(estimate_oscillation(trace, "x", 0.0).frequency.has_value());
    }
}

TEST_CASE("taxonomy mapping covers both classes and all technology mixes") {
    StabilityVerdict verdict;

    SUBCASE("stable events carry no label") {
        const auto label = classify_event(verdict, kTech);
        CHECK(label.proposed == ProposedLabel::none);
        CHECK(label.legacy.empty());
        CHECK(label.rationale.empty());
        CHECK(to_string(label.proposed) == "none");
    }

    verdict.stable = false;
    verdict.first_violation_time = 2.0;

    SUBCASE("large disturbance, machine only") {
        verdict.violating_devices = {"SM-1"};
        const auto label = classify_event(verdict, kTech);
        CHECK(label.proposed == ProposedLabel::angle_stability_large_disturbance);
        CHECK(label.legacy == std::set<LegacyLabel>{LegacyLabel::rotor_angle_large});
        REQUIRE(label.rationale.size() == 1);
        CHECK(label.rationale[0].find("SM-1") != std::string::npos);
        CHECK(label.rationale[0].find("synchronous_machine") != std::string::npos);
    }

    SUBCASE("large disturbance, converter only") {
        verdict.violating_devices = {"GFM-VSC-2"};
        const auto label = classify_event(verdict, kTech);
        CHECK(label.proposed == ProposedLabel::angle_stability_large_disturbance);
        CHECK(label.legacy == std::set<LegacyLabel>{LegacyLabel::converter_driven_slow});
    }

    SUBCASE("large disturbance, both technologies") {
        verdict.violating_devices = {"SM-1", "GFM-VSC-2"};
        const auto label = classify_event(verdict, kTech);
        CHECK(label.proposed == ProposedLabel::angle_stability_large_disturbance);
        CHECK(label.legacy == std::set<LegacyLabel>{LegacyLabel::rotor_angle_large,
                                                    LegacyLabel::converter_driven_slow});
        CHECK(label.rationale.size() == 2);
        CHECK(to_string(ProposedLabel::angle_stability_large_disturbance) ==
              "angle_stability_large_disturbance");
    }

    SUBCASE("small disturbance swaps the machine-side legacy label") {
        verdict.disturbance_class = DisturbanceClass::small;
        verdict.violating_devices = {"SM-1", "GFM-VSC-2"};
        const auto label = classify_event(verdict, kTech);
        CHECK(label.proposed == ProposedLabel::angle_stability_small_disturbance);
        CHECK(label.legacy == std::set<LegacyLabel>{LegacyLabel::rotor_angle_small,
                                                    LegacyLabel::converter_driven_slow});
    }

    SUBCASE("an untagged violator is a structural problem") {
        verdict.violating_devices = {"mystery"};
        CHECK_THROWS_AS(classify_event(verdict, kTech), StructuralError);
    }
}

TEST_CASE("clearing-time bisection lands a verified bracket with the expected budget") {
    const Scenario sc = load_scenario(scn("canonical.scn"));
    const DynamicSystem sys = make_system(sc);
    const FaultTemplate fault = make_fault_template(sc);

    const CctResult res = find_cct(sys, sc.sim, fault, sc.study.cct_lo, sc.study.cct_hi,
                                   sc.study.cct_tol);
    CHECK(res.cct > sc.study.cct_lo);
    CHECK(res.cct < sc.study.cct_hi);
    CHECK(res.bracket_hi - res.bracket_lo <= res.tolerance + 1e-12);
    CHECK(res.cct == doctest::Approx(0.5 * (res.bracket_lo + res.bracket_hi)));
    // [0.15, 0.20] at 2 ms: 2 endpoint checks + 5 bisection probes.
    CHECK(res.evaluations == 5);
    CHECK(res.total_simulations == 7);

    // The bracket is real: stable on the low side, unstable on the high side.
    Trace stable_trace;
    CHECK(fault_run_is_stable(sys, sc.sim, fault, res.bracket_lo, &stable_trace));
    CHECK_FALSE(fault_run_is_stable(sys, sc.sim, fault, res.bracket_hi));
    CHECK(stable_trace.times.back() ==
          doctest::Approx(fault.t_fault + res.bracket_lo + fault.t_post));
}

TEST_CASE("a stable-stable window widens upward until instability appears") {
    const Scenario sc = load_scenario(scn("canonical.scn"));
    const DynamicSystem sys = make_system(sc);
    const FaultTemplate fault = make_fault_template(sc);

    const CctResult res = find_cct(sys, sc.sim, fault, 0.05, 0.10, sc.study.cct_tol);
    CHECK(res.cct > 0.15);
    CHECK(res.cct < 0.20);
    CHECK(res.bracket_hi - res.bracket_lo <= res.tolerance + 1e-12);
}

TEST_CASE("bracket failures are reported, not guessed around") {
    const Scenario sc = load_scenario(scn("canonical.scn"));
    const DynamicSystem sys = make_system(sc);
    const FaultTemplate fault = make_fault_template(sc);

    SUBCASE("degenerate window") {
        CHECK_THROWS_AS(find_cct(sys, sc.sim, fault, 0.2, 0.2, 0.002), NoBracketError);
    }
    SUBCASE("non-positive tolerance") {
        CHECK_THROWS_AS(find_cct(sys, sc.sim, fault, 0.1, 0.2, 0.0), StructuralError);
    }
    SUBCASE("negative clearing time") {
        CHECK_THROWS_AS(find_cct(sys, sc.sim, fault, -0.1, 0.2, 0.002), StructuralError);
    }
    SUBCASE("window entirely past the critical time") {
        CHECK_THROWS_AS(find_cct(sys, sc.sim, fault, 0.30, 0.40, 0.002), NoBracketError);
    }
}
