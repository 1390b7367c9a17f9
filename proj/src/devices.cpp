#include "rmsim/devices.hpp"

#include <algorithm>
#include <cmath>

namespace rmsim {

Complex csa_limit(Complex i_ref, double i_max, bool* limited) {
    double mag = std::abs(i_ref);
    if (mag > i_max) {
        if (limited) *limited = true;
        if (mag == 0.0) return Complex(0.0, 0.0);
        return i_ref * (i_max / mag);
    }
    if (limited) *limited = false;
    return i_ref;
}

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw StructuralError(what);
}

} // namespace

// ---------------------------------------------------------------------------
// SyncMachine

SyncMachine::SyncMachine(SyncMachineParams params) : p_(std::move(params)) {
    require(p_.s_rated_mva > 0, p_.name + ": s_rated_mva must be positive");
    require(p_.h > 0, p_.name + ": inertia constant must be positive");
    require(p_.td0p > 0 && p_.tq0p > 0, p_.name + ": open-circuit time constants must be positive");
    require(p_.xdp > 0 && p_.xqp > 0, p_.name + ": transient reactances must be positive");
    require(p_.xd >= p_.xdp && p_.xq >= p_.xqp,
            p_.name + ": synchronous reactances must dominate transient ones");
    require(!p_.exciter.enabled || p_.exciter.ta > 0, p_.name + ": exciter ta must be positive");
    require(!p_.exciter.enabled || p_.exciter.efd_min < p_.exciter.efd_max,
            p_.name + ": exciter limits must satisfy efd_min < efd_max");
    if (p_.pss.enabled) {
        require(p_.pss.tw > 0 && p_.pss.t2 > 0 && p_.pss.t4 > 0,
                p_.name + ": pss lag time constants must be positive");
    }
    require(!p_.governor.enabled || (p_.governor.droop > 0 && p_.governor.tg > 0),
            p_.name + ": governor droop and tg must be positive");
}

int SyncMachine::state_count() const {
    int n = 4;
    if (p_.exciter.enabled) n += 1;
    if (p_.pss.enabled) n += 3;
    if (p_.governor.enabled) n += 1;
    return n;
}

std::vector<std::string> SyncMachine::state_labels() const {
    std::vector<std::string> labels{"delta", "omega", "eqp", "edp"};
    if (p_.exciter.enabled) labels.push_back("efd");
    if (p_.pss.enabled) {
        labels.push_back("pss_wash");
        labels.push_back("pss_ll1");
        labels.push_back("pss_ll2");
    }
    if (p_.governor.enabled) labels.push_back("gov");
    for (auto& l : labels) l = p_.name + "." + l;
    return labels;
}

std::vector<double> SyncMachine::initialize(Complex v_term, Complex s_inj_sys) {
    const double k = base_ratio();
    const Complex s_mach = s_inj_sys / k;
    if (std::abs(s_mach) > 1.0 + 1e-9) {
        throw InitializationError(p_.name + ": dispatch exceeds rating (|S| = " +
                                  std::to_string(std::abs(s_mach)) + " pu)");
    }
    if (std::abs(v_term) < 1e-6) {
        throw InitializationError(p_.name + ": terminal voltage is zero at initialization");
    }
    const Complex i_mach = std::conj(s_mach / v_term);

    const double delta = std::arg(v_term + Complex(p_.ra, p_.xq) * i_mach);
    const Complex vdq = to_machine_dq(v_term, delta);
    const Complex idq = to_machine_dq(i_mach, delta);
    const double vd = vdq.real(), vq = vdq.imag();
    const double id = idq.real(), iq = idq.imag();

    const double eqp = vq + p_.ra * iq + p_.xdp * id;
    const double edp = vd + p_.ra * id - p_.xqp * iq;
    const double efd = eqp + (p_.xd - p_.xdp) * id;
    const double pe = edp * id + eqp * iq + (p_.xqp - p_.xdp) * id * iq;

    ref_.pm_ref = pe;
    if (p_.exciter.enabled) {
        if (efd > p_.exciter.efd_max || efd < p_.exciter.efd_min) {
            throw InitializationError(p_.name + ": required field voltage " +
                                      std::to_string(efd) + " pu outside exciter limits");
        }
        ref_.v_ref = std::abs(v_term) + efd / p_.exciter.ka;
    }
    ref_.efd0 = efd;

    std::vector<double> x(static_cast<size_t>(state_count()), 0.0);
    x[0] = delta;
    x[1] = 0.0;
    x[2] = eqp;
    x[3] = edp;
    if (p_.exciter.enabled) x[4] = efd;
    // PSS and governor states are zero at equilibrium.
    return x;
}

void SyncMachine::stator_currents(std::span<const double> x, Complex v_term, double& id,
                                  double& iq) const {
    const double delta = x[0];
    const Complex vdq = to_machine_dq(v_term, delta);
    const double ed_err = x[3] - vdq.real(); // edp - vd
    const double eq_err = x[2] - vdq.imag(); // eqp - vq
    const double det = p_.ra * p_.ra + p_.xdp * p_.xqp;
    id = (p_.ra * ed_err + p_.xqp * eq_err) / det;
    iq = (-p_.xdp * ed_err + p_.ra * eq_err) / det;
}

double SyncMachine::electrical_power(std::span<const double> x, Complex v_term) const {
    double id, iq;
    stator_currents(x, v_term, id, iq);
    return x[3] * id + x[2] * iq + (p_.xqp - p_.xdp) * id * iq;
}

double SyncMachine::pss_output(std::span<const double> x) const {
    if (!p_.pss.enabled) return 0.0;
    const auto& s = p_.pss;
    const int base = p_.exciter.enabled ? 5 : 4;
    const double u = x[1];
    const double y1 = s.ks * u - x[base];                         // washout output
    const double y2 = x[base + 1] + (s.t1 / s.t2) * (y1 - x[base + 1]);
    const double y3 = x[base + 2] + (s.t3 / s.t4) * (y2 - x[base + 2]);
    return std::clamp(y3, s.vs_min, s.vs_max);
}

void SyncMachine::derivatives(std::span<const double> x, Complex v_term,
                              std::span<double> dx) const {
    const double omega = x[1];
    double id, iq;
    stator_currents(x, v_term, id, iq);
    const double pe = x[3] * id + x[2] * iq + (p_.xqp - p_.xdp) * id * iq;

    int idx = 4;
    const int efd_idx = p_.exciter.enabled ? idx++ : -1;
    const int pss_idx = p_.pss.enabled ? idx : -1;
    if (p_.pss.enabled) idx += 3;
    const int gov_idx = p_.governor.enabled ? idx++ : -1;

    double efd = ref_.efd0;
    if (efd_idx >= 0) {
        efd = std::clamp(x[efd_idx], p_.exciter.efd_min, p_.exciter.efd_max);
    }
    double pm = ref_.pm_ref;
    if (gov_idx >= 0) pm += x[gov_idx];

    dx[0] = omega_s_ * omega;
    dx[1] = (pm - pe - p_.d * omega) / (2.0 * p_.h);
    dx[2] = (-x[2] - (p_.xd - p_.xdp) * id + efd) / p_.td0p;
    dx[3] = (-x[3] + (p_.xq - p_.xqp) * iq) / p_.tq0p;

    if (efd_idx >= 0) {
        const double verr = ref_.v_ref - std::abs(v_term) + pss_output(x);
        // Non-windup limiting is realized by projection (project_states), which keeps
        // the RHS smooth for the implicit corrector.
        dx[efd_idx] = (p_.exciter.ka * verr - x[efd_idx]) / p_.exciter.ta;
    }
    if (pss_idx >= 0) {
        const auto& s = p_.pss;
        const double y1 = s.ks * omega - x[pss_idx];
        const double y2 = x[pss_idx + 1] + (s.t1 / s.t2) * (y1 - x[pss_idx + 1]);
        dx[pss_idx] = y1 / s.tw;
        dx[pss_idx + 1] = (y1 - x[pss_idx + 1]) / s.t2;
        dx[pss_idx + 2] = (y2 - x[pss_idx + 2]) / s.t4;
    }
    if (gov_idx >= 0) {
        dx[gov_idx] = (-omega / p_.governor.droop - x[gov_idx]) / p_.governor.tg;
    }
}

void SyncMachine::project_states(std::span<double> x) const {
    if (p_.exciter.enabled) {
        double& efd = x[4];
        efd = std::clamp(efd, p_.exciter.efd_min, p_.exciter.efd_max);
    }
}

Complex SyncMachine::norton_admittance_sys() const {
    const Complex z_mach(p_.ra, 0.5 * (p_.xdp + p_.xqp));
    return base_ratio() / z_mach;
}

Complex SyncMachine::injection_sys(std::span<const double> x, Complex v_term) const {
    double id, iq;
    stator_currents(x, v_term, id, iq);
    const Complex i_mach = from_machine_dq(Complex(id, iq), x[0]);
    return i_mach * base_ratio();
}

Complex SyncMachine::norton_current_sys(std::span<const double> x, Complex v_term) const {
    return injection_sys(x, v_term) + norton_admittance_sys() * v_term;
}

void SyncMachine::set_field(const std::string& field, double value) {
    if (field == "h") p_.h = value;
    else if (field == "d") p_.d = value;
    else if (field == "xd") p_.xd = value;
    else if (field == "xq") p_.xq = value;
    else if (field == "xdp") p_.xdp = value;
    else if (field == "xqp") p_.xqp = value;
    else if (field == "td0p") p_.td0p = value;
    else if (field == "tq0p") p_.tq0p = value;
    else if (field == "ra") p_.ra = value;
    else if (field == "p_dispatch_mw") p_.p_dispatch_mw = value;
    else if (field == "s_rated_mva") p_.s_rated_mva = value;
    else if (field == "ka") p_.exciter.ka = value;
    else if (field == "ta") p_.exciter.ta = value;
    else if (field == "efd_min") p_.exciter.efd_min = value;
    else if (field == "efd_max") p_.exciter.efd_max = value;
    else if (field == "pss_ks") p_.pss.ks = value;
    else if (field == "pss_tw") p_.pss.tw = value;
    else if (field == "pss_t1") p_.pss.t1 = value;
    else if (field == "pss_t2") p_.pss.t2 = value;
    else if (field == "pss_t3") p_.pss.t3 = value;
    else if (field == "pss_t4") p_.pss.t4 = value;
    else if (field == "pss_vs_max") p_.pss.vs_max = value;
    else if (field == "pss_vs_min") p_.pss.vs_min = value;
    else if (field == "gov_droop" || field == "gov_r") p_.governor.droop = value;
    else if (field == "gov_tg") p_.governor.tg = value;
    else throw StructuralError(p_.name + ": unknown parameter field '" + field + "'");
}

// ---------------------------------------------------------------------------
// GfmVsm

GfmVsm::GfmVsm(GfmVsmParams params) : p_(std::move(params)) {
    require(p_.s_rated_mva > 0, p_.name + ": s_rated_mva must be positive");
    require(p_.ta_vsm > 0, p_.name + ": ta_vsm must be positive");
    require(p_.i_max > 0, p_.name + ": i_max must be positive");
    require(p_.x_c > 0, p_.name + ": x_c must be positive");
    require(p_.t_volt > 0 && p_.t_curr > 0, p_.name + ": loop time constants must be positive");
    require(p_.pll.tf > 0, p_.name + ": pll tf must be positive");
}

std::vector<std::string> GfmVsm::state_labels() const {
    std::vector<std::string> labels{"theta_vsm", "omega_vsm", "pll_theta", "pll_xi",
                                    "pll_omega",  "e_mag",     "i_d",       "i_q"};
    for (auto& l : labels) l = p_.name + "." + l;
    return labels;
}

std::vector<double> GfmVsm::initialize(Complex v_term, Complex s_inj_sys) {
    const double k = base_ratio();
    const Complex s_mach = s_inj_sys / k;
    if (std::abs(s_mach) > 1.0 + 1e-9) {
        throw InitializationError(p_.name + ": dispatch exceeds rating (|S| = " +
                                  std::to_string(std::abs(s_mach)) + " pu)");
    }
    if (std::abs(v_term) < 1e-6) {
        throw InitializationError(p_.name + ": terminal voltage is zero at initialization");
    }
    const Complex i_mach = std::conj(s_mach / v_term);
    if (std::abs(i_mach) > p_.i_max + 1e-9) {
        throw InitializationError(p_.name + ": steady-state current " +
                                  std::to_string(std::abs(i_mach)) + " pu exceeds i_max");
    }

    const Complex e = v_term + Complex(0.0, p_.x_c) * i_mach;
    const double theta = std::arg(e);
    ref_.e_cmd = std::abs(e);
    ref_.p_ref = (v_term * std::conj(i_mach)).real();

    const Complex idq = to_machine_dq(i_mach, theta);
    std::vector<double> x(8, 0.0);
    x[0] = theta;
    x[1] = 0.0;                   // omega_vsm
    x[2] = std::arg(v_term);      // pll_theta
    x[3] = 0.0;                   // pll_xi
    x[4] = 0.0;                   // pll_omega
    x[5] = std::abs(e);           // e_mag
    x[6] = idq.real();
    x[7] = idq.imag();
    return x;
}

Complex GfmVsm::current_reference(std::span<const double> x, Complex v_term,
                                  bool* limited) const {
    const Complex e = std::polar(x[5], x[0]);
    const Complex i_ref = (e - v_term) / Complex(0.0, p_.x_c);
    return csa_limit(i_ref, p_.i_max, limited);
}

void GfmVsm::derivatives(std::span<const double> x, Complex v_term, std::span<double> dx) const {
    const double theta = x[0];
    const double omega_vsm = x[1];
    const double pll_theta = x[2];
    const double pll_xi = x[3];
    const double pll_omega = x[4];

    const Complex i_ref_dq = to_machine_dq(current_reference(x, v_term, nullptr), theta);
    const Complex i_inj = from_machine_dq(Complex(x[6], x[7]), theta);
    const double p_meas = (v_term * std::conj(i_inj)).real();

    // PLL: q-axis voltage error in the PLL frame drives a PI tracker; the
    // estimated frequency deviation is low-pass filtered. The error is not
    // normalised by |v|, so a collapsed bus (|v| = 0) freezes the tracker
    // instead of producing 0/0.
    const double vq_pll = (v_term * std::polar(1.0, -pll_theta)).imag();
    const double pll_speed = p_.pll.kp * vq_pll + pll_xi; // rad/s deviation

    dx[0] = omega_s_ * omega_vsm;
    dx[1] = (ref_.p_ref - p_meas - p_.d_gfm * (omega_vsm - pll_omega)) / p_.ta_vsm;
    dx[2] = pll_speed;
    dx[3] = p_.pll.ki * vq_pll;
    dx[4] = (pll_speed / omega_s_ - pll_omega) / p_.pll.tf;
    dx[5] = (ref_.e_cmd - x[5]) / p_.t_volt;
    dx[6] = (i_ref_dq.real() - x[6]) / p_.t_curr;
    dx[7] = (i_ref_dq.imag() - x[7]) / p_.t_curr;
}

Complex GfmVsm::injection_sys(std::span<const double> x, Complex /*v_term*/) const {
    return from_machine_dq(Complex(x[6], x[7]), x[0]) * base_ratio();
}

Complex GfmVsm::norton_current_sys(std::span<const double> x, Complex v_term) const {
    return injection_sys(x, v_term);
}

bool GfmVsm::limiter_engaged(std::span<const double> x, Complex v_term) const {
    bool limited = false;
    current_reference(x, v_term, &limited);
    return limited;
}

double GfmVsm::current_magnitude(std::span<const double> x) const {
    return std::hypot(x[6], x[7]);
}

void GfmVsm::set_field(const std::string& field, double value) {
    if (field == "ta_vsm") p_.ta_vsm = value;
    else if (field == "d_gfm") p_.d_gfm = value;
    else if (field == "i_max") p_.i_max = value;
    else if (field == "x_c") p_.x_c = value;
    else if (field == "t_volt") p_.t_volt = value;
    else if (field == "t_curr") p_.t_curr = value;
    else if (field == "pll_kp") p_.pll.kp = value;
    else if (field == "pll_ki") p_.pll.ki = value;
    else if (field == "pll_tf") p_.pll.tf = value;
    else if (field == "p_dispatch_mw") p_.p_dispatch_mw = value;
    else if (field == "s_rated_mva") p_.s_rated_mva = value;
    else throw StructuralError(p_.name + ": unknown parameter field '" + field + "'");
}

} // namespace rmsim
