#pragma once

#include <span>
#include <string>
#include <variant>
#include <vector>

#include "rmsim/common.hpp"

namespace rmsim {

enum class DeviceTech { synchronous_machine, gfm_converter };

/// Machine dq frame convention: phasor = (d + jq) * exp(j(delta - pi/2)),
/// i.e. a pure q-axis EMF appears at network angle delta.
inline Complex to_machine_dq(Complex phasor, double delta) {
    return phasor * std::polar(1.0, -(delta - kPi / 2.0));
}
inline Complex from_machine_dq(Complex dq, double delta) {
    return dq * std::polar(1.0, delta - kPi / 2.0);
}

/// Current-saturation algorithm: scale the reference onto the limit circle,
/// preserving its angle. `limited` reports whether the clamp engaged.
Complex csa_limit(Complex i_ref, double i_max, bool* limited = nullptr);

struct ExciterParams {
    bool enabled = true;
    double ka = 200.0;
    double ta = 0.01; // s
    double efd_min = -6.0;
    double efd_max = 6.0;
};

struct PssParams {
    bool enabled = true;
    double ks = 20.0;
    double tw = 10.0; // washout, s
    double t1 = 0.05; // lead-lag pair 1
    double t2 = 0.02;
    double t3 = 0.05; // lead-lag pair 2
    double t4 = 0.02;
    double vs_max = 0.2;
    double vs_min = -0.2;
};

struct GovernorParams {
    bool enabled = false;
    double droop = 0.05; // pu speed per pu power
    double tg = 0.5;     // s
};

struct SyncMachineParams {
    std::string name = "SM";
    int bus = 0;
    double s_rated_mva = 900.0;
    double p_dispatch_mw = 0.0;
    double h = 3.5;  // s, machine base
    double d = 0.0;  // pu torque / pu speed
    double xd = 1.8; // pu reactances, machine base
    double xq = 1.7;
    double xdp = 0.3;
    double xqp = 0.55;
    double td0p = 8.0; // s
    double tq0p = 0.4; // s
    double ra = 0.0025;
    ExciterParams exciter;
    PssParams pss;
    GovernorParams governor;
};

/// Setpoints back-solved at initialization; constant during a run.
struct SyncMachineSetpoints {
    double pm_ref = 0.0; // pu mechanical power, machine base
    double v_ref = 1.0;  // pu exciter voltage reference
    double efd0 = 1.0;   // pu field voltage held when the exciter is disabled
};

/// Two-axis model with static exciter, speed-input PSS (washout plus two
/// lead-lag stages) and optional droop governor. State layout:
///   [delta, omega, eqp, edp] (+efd) (+pss_wash, pss_ll1, pss_ll2) (+gov)
/// delta in rad (system reference), omega is pu speed deviation.
class SyncMachine {
public:
    explicit SyncMachine(SyncMachineParams params);

    const SyncMachineParams& params() const { return p_; }
    const SyncMachineSetpoints& setpoints() const { return ref_; }
    const std::string& name() const { return p_.name; }
    int bus() const { return p_.bus; }
    DeviceTech tech() const { return DeviceTech::synchronous_machine; }

    int state_count() const;
    std::vector<std::string> state_labels() const;

    /// Back-solves the internal states and setpoints from the terminal
    /// voltage and the device's net injected power (both system base).
    std::vector<double> initialize(Complex v_term, Complex s_inj_sys);

    void derivatives(std::span<const double> x, Complex v_term, std::span<double> dx) const;

    /// Clamps limited states back into their admissible box (non-windup
    /// field-voltage limit). Applied by the integrator after every stage so
    /// the right-hand side itself stays smooth.
    void project_states(std::span<double> x) const;

    /// Constant Norton admittance folded into the dynamic network matrix
    /// (system base).
    Complex norton_admittance_sys() const;
    /// Norton source current: actual injection plus norton_admittance*v.
    Complex norton_current_sys(std::span<const double> x, Complex v_term) const;
    /// Net current into the network (system base).
    Complex injection_sys(std::span<const double> x, Complex v_term) const;

    /// Machine-base dq stator currents for the given terminal voltage.
    void stator_currents(std::span<const double> x, Complex v_term, double& id, double& iq) const;
    /// Air-gap electrical power, pu machine base.
    double electrical_power(std::span<const double> x, Complex v_term) const;

    double angle(std::span<const double> x) const { return x[0]; }
    double speed_deviation(std::span<const double> x) const { return x[1]; }

    /// Numeric parameter override by field name (e.g. "h", "d", "ka",
    /// "pss_ks"). Enabled flags are structural and cannot change mid-run.
    void set_field(const std::string& field, double value);

    double base_ratio() const { return p_.s_rated_mva / s_base_mva_; }
    void set_system_base(double s_base_mva, double f_hz) {
        s_base_mva_ = s_base_mva;
        omega_s_ = 2.0 * kPi * f_hz;
    }

private:
    double pss_output(std::span<const double> x) const;

    SyncMachineParams p_;
    SyncMachineSetpoints ref_;
    double s_base_mva_ = 100.0;
    double omega_s_ = 2.0 * kPi * 60.0;
};

struct PllParams {
    double kp = 40.0;  // rad/s per pu voltage
    double ki = 900.0; // rad/s^2 per pu voltage
    double tf = 0.02;  // s, frequency estimate filter
};

struct GfmVsmParams {
    std::string name = "GFM";
    int bus = 0;
    double s_rated_mva = 900.0;
    double p_dispatch_mw = 0.0;
    double ta_vsm = 10.0;  // s, virtual mechanical time constant
    double d_gfm = 193.0;  // pu damping on (omega_vsm - omega_pll)
    double i_max = 1.2;    // pu current limit, machine base
    double x_c = 0.15;     // pu coupling reactance, machine base
    double t_volt = 0.02;  // s, voltage-loop surrogate
    double t_curr = 0.01;  // s, current-loop surrogate
    PllParams pll;
};

struct GfmVsmSetpoints {
    double p_ref = 0.0; // pu, machine base
    double e_cmd = 1.0; // pu modulated-voltage magnitude command
};

/// Virtual-synchronous-machine grid-forming converter: swing emulation
/// whose damping acts on the PLL-estimated frequency at the connection
/// point, a CSA current limiter, and first-order voltage/current loop
/// surrogates. State layout:
///   [theta_vsm, omega_vsm, pll_theta, pll_xi, pll_omega, e_mag, i_d, i_q]
/// theta in rad (system reference); omega_vsm, pll_omega pu deviations;
/// i_d/i_q are the injected current in the VSM frame, machine base.
class GfmVsm {
public:
    explicit GfmVsm(GfmVsmParams params);

    const GfmVsmParams& params() const { return p_; }
    const GfmVsmSetpoints& setpoints() const { return ref_; }
    const std::string& name() const { return p_.name; }
    int bus() const { return p_.bus; }
    DeviceTech tech() const { return DeviceTech::gfm_converter; }

    int state_count() const { return 8; }
    std::vector<std::string> state_labels() const;

    std::vector<double> initialize(Complex v_term, Complex s_inj_sys);
    void derivatives(std::span<const double> x, Complex v_term, std::span<double> dx) const;
    void project_states(std::span<double>) const {} // no hard-limited states

    Complex norton_admittance_sys() const { return Complex(0.0, 0.0); }
    Complex norton_current_sys(std::span<const double> x, Complex v_term) const;
    Complex injection_sys(std::span<const double> x, Complex v_term) const;

    /// True when the CSA limiter clamps the present current reference.
    bool limiter_engaged(std::span<const double> x, Complex v_term) const;

    double angle(std::span<const double> x) const { return x[0]; }
    double speed_deviation(std::span<const double> x) const { return x[1]; }
    /// Injected current magnitude, pu machine base.
    double current_magnitude(std::span<const double> x) const;

    void set_field(const std::string& field, double value);

    double base_ratio() const { return p_.s_rated_mva / s_base_mva_; }
    void set_system_base(double s_base_mva, double f_hz) {
        s_base_mva_ = s_base_mva;
        omega_s_ = 2.0 * kPi * f_hz;
    }

private:
    Complex current_reference(std::span<const double> x, Complex v_term, bool* limited) const;

    GfmVsmParams p_;
    GfmVsmSetpoints ref_;
    double s_base_mva_ = 100.0;
    double omega_s_ = 2.0 * kPi * 60.0;
};

/// Ideal voltage source pinning its bus: magnitude, angle and frequency
/// constant for all time. Defines the system angle reference.
struct InfiniteBusModel {
    int bus = 0;
    double v_mag = 1.0;
    double angle = 0.0;
    double freq_pu = 1.0;
    Complex phasor() const { return std::polar(v_mag, angle); }
};

using Device = std::variant<SyncMachine, GfmVsm>;

inline const std::string& device_name(const Device& d) {
    return std::visit([](const auto& dev) -> const std::string& { return dev.name(); }, d);
}
inline int device_bus(const Device& d) {
    return std::visit([](const auto& dev) { return dev.bus(); }, d);
}
inline int device_state_count(const Device& d) {
    return std::visit([](const auto& dev) { return dev.state_count(); }, d);
}
inline DeviceTech device_tech(const Device& d) {
    return std::visit([](const auto& dev) { return dev.tech(); }, d);
}

/// System angular frequency used by every angle integrator, rad/s.
struct SystemBase {
    double s_base_mva = 100.0;
    double f_hz = 60.0;
    double omega_s() const { return 2.0 * kPi * f_hz; }
};

} // namespace rmsim
