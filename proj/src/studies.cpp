#include "rmsim/studies.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace rmsim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Violation {
    double time = kInf;
    std::string criterion;
};

Violation scan_device_angle(const std::vector<double>& t, const std::vector<double>& a,
                            size_t i_ref, double threshold_deg, double window_s) {
    Violation v;
    const double a_ref = a[i_ref];

    for (size_t i = i_ref; i < a.size(); ++i) {
        if (std::abs(a[i] - a_ref) > threshold_deg) {
            v.time = t[i];
            v.criterion = "angle_excursion";
            break;
        }
    }

    // Sustained monotone slip: a run of one-signed increments lasting at
    // least the window and sweeping at least 90 degrees.
    int dir = 0;
    size_t run_start = i_ref;
    for (size_t i = i_ref + 1; i < a.size(); ++i) {
        const double d = a[i] - a[i - 1];
        const int s = d > 1e-9 ? 1 : (d < -1e-9 ? -1 : 0);
        if (s == 0) {
            dir = 0;
            run_start = i;
            continue;
        }
        if (s != dir) {
            dir = s;
            run_start = i - 1;
        }
        if (t[i] - t[run_start] >= window_s && std::abs(a[i] - a[run_start]) >= 90.0) {
            if (t[i] < v.time) {
                v.time = t[i];
                v.criterion = "sustained_slip";
            }
            break;
        }
    }
    return v;
}

} // namespace

StabilityVerdict detect_loss_of_sync(const Trace& trace, double angle_threshold_deg,
                                     double window_s, double t_reference,
                                     DisturbanceClass disturbance_class) {
    StabilityVerdict verdict;
    verdict.disturbance_class = disturbance_class;

    const std::string suffix = ".angle_deg";
    std::vector<std::pair<std::string, size_t>> angle_cols;
    for (size_t c = 0; c < trace.columns.size(); ++c) {
        const auto& name = trace.columns[c];
        if (name.size() > suffix.size() &&
            name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
            angle_cols.emplace_back(name.substr(0, name.size() - suffix.size()), c);
        }
    }
    if (angle_cols.empty()) throw StructuralError("trace has no *.angle_deg channels");
    if (trace.times.empty()) return verdict;

    size_t i_ref = trace.times.size() - 1;
    for (size_t i = 0; i < trace.times.size(); ++i) {
        if (trace.times[i] >= t_reference - 1e-9) {
            i_ref = i;
            break;
        }
    }

    double first_time = kInf;
    std::string first_criterion;
    for (const auto& [device, col] : angle_cols) {
        std::vector<double> a(trace.rows.size());
        for (size_t r = 0; r < trace.rows.size(); ++r) a[r] = trace.rows[r][col];
        const Violation v =
            scan_device_angle(trace.times, a, i_ref, angle_threshold_deg, window_s);
        if (v.time < kInf) {
            verdict.violating_devices.push_back(device);
            if (v.time < first_time) {
                first_time = v.time;
                first_criterion = v.criterion;
            }
        }
    }

    if (!verdict.violating_devices.empty()) {
        verdict.stable = false;
        verdict.first_violation_time = first_time;
        verdict.criterion = first_criterion;
    }
    return verdict;
}

bool fault_run_is_stable(const DynamicSystem& system, const SimConfig& config,
                         const FaultTemplate& fault, double t_clear, Trace* trace_out) {
    SimConfig cfg = config;
    cfg.t_end = fault.t_fault + t_clear + fault.t_post;
    std::vector<Event> events;
    events.push_back(ApplyFault{fault.t_fault, fault.bus, fault.r, fault.x});
    events.push_back(ClearFault{fault.t_fault + t_clear, fault.trip_branch});

    Simulator sim(system, cfg);
    Trace trace = sim.run(events);
    const auto verdict =
        detect_loss_of_sync(trace, fault.angle_threshold_deg, fault.slip_window_s,
                            fault.t_fault + t_clear, DisturbanceClass::large);
    if (trace_out) *trace_out = std::move(trace);
    return verdict.stable;
}

CctResult find_cct(const DynamicSystem& system, const SimConfig& config,
                   const FaultTemplate& fault, double t_lo, double t_hi, double tol) {
    if (tol <= 0.0) throw StructuralError("cct tolerance must be positive");
    if (t_lo < 0.0) throw StructuralError("clearing times must be non-negative");
    if (!(t_lo < t_hi)) {
        throw NoBracketError("degenerate clearing-time bracket [" + std::to_string(t_lo) + ", " +
                             std::to_string(t_hi) + "] s");
    }

    int sims = 0;
    const auto probe = [&](double tc) {
        ++sims;
        return fault_run_is_stable(system, config, fault, tc);
    };

    const bool lo_stable = probe(t_lo);
    bool hi_stable = probe(t_hi);
    if (!lo_stable) {
        throw NoBracketError("no bracket: clearing at " + std::to_string(t_lo) +
                             " s is unstable and at " + std::to_string(t_hi) + " s is " +
                             (hi_stable ? "stable" : "unstable"));
    }
    if (hi_stable) {
        // Widen upward a bounded number of times looking for instability.
        double lo = t_hi;
        double span = t_hi - t_lo;
        for (int k = 0; k < 4 && hi_stable; ++k) {
            span *= 2.0;
            t_lo = lo;
            t_hi = lo + span;
            hi_stable = probe(t_hi);
            if (hi_stable) lo = t_hi;
        }
        if (hi_stable) {
            throw NoBracketError("no bracket: both endpoints stable after widening to " +
                                 std::to_string(t_hi) + " s");
        }
    }

    CctResult result;
    result.tolerance = tol;
    double lo = t_lo, hi = t_hi;
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        ++result.evaluations;
        if (probe(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    result.cct = 0.5 * (lo + hi);
    result.bracket_lo = lo;
    result.bracket_hi = hi;
    result.total_simulations = sims;
    return result;
}

namespace {

double golden_min(const std::function<double(double)>& f, double a, double b, int iters) {
    const double phi = 0.6180339887498949;
    double x1 = b - phi * (b - a);
    double x2 = a + phi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int i = 0; i < iters; ++i) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = f(x2);
        }
    }
    return f1 < f2 ? x1 : x2;
}

} // namespace

OscillationEstimate estimate_oscillation(const Trace& trace, const std::string& channel,
                                         double t_start) {
    OscillationEstimate est;
    const auto y_all = trace.column(channel);

    std::vector<double> tau, y;
    double t0 = 0.0;
    bool have_t0 = false;
    for (size_t i = 0; i < trace.times.size(); ++i) {
        if (trace.times[i] < t_start - 1e-9) continue;
        if (!have_t0) {
            t0 = trace.times[i];
            have_t0 = true;
        }
        tau.push_back(trace.times[i] - t0);
        y.push_back(y_all[i]);
    }
    const size_t n = tau.size();
    if (n < 16) return est;
    const double span = tau.back();
    if (span <= 0.0) return est;

    // Linear detrend.
    double st = 0, st2 = 0, sy = 0, sty = 0;
    for (size_t i = 0; i < n; ++i) {
        st += tau[i];
        st2 += tau[i] * tau[i];
        sy += y[i];
        sty += tau[i] * y[i];
    }
    const double nn = static_cast<double>(n);
    const double det = nn * st2 - st * st;
    const double c1 = det != 0.0 ? (nn * sty - st * sy) / det : 0.0;
    const double c0 = (sy - c1 * st) / nn;

    std::vector<double> e(n);
    double e_max = 0.0, e_sq = 0.0;
    for (size_t i = 0; i < n; ++i) {
        e[i] = y[i] - c0 - c1 * tau[i];
        e_max = std::max(e_max, std::abs(e[i]));
        e_sq += e[i] * e[i];
    }
    if (e_max < 1e-9 * std::max(1.0, std::abs(c0))) return est; // flat signal

    // Windowed spectral scan over a frequency grid.
    const auto spectrum_mag = [&](double f) {
        double re = 0.0, im = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double w = 0.5 * (1.0 - std::cos(2.0 * kPi * tau[i] / span));
            const double ph = 2.0 * kPi * f * tau[i];
            re += w * e[i] * std::cos(ph);
            im -= w * e[i] * std::sin(ph);
        }
        return std::hypot(re, im);
    };
    const double dt_med = span / static_cast<double>(n - 1);
    const double f_lo = std::max(0.02, 1.0 / span);
    const double f_hi = std::max(f_lo * 1.5, std::min(0.45 / dt_med, 20.0));
    const double df = 1.0 / (8.0 * span);
    double f_peak = f_lo, s_peak = -1.0;
    for (double f = f_lo; f <= f_hi; f += df) {
        const double s = spectrum_mag(f);
        if (s > s_peak) {
            s_peak = s;
            f_peak = f;
        }
    }
    {
        const double sm = spectrum_mag(std::max(f_lo, f_peak - df));
        const double sp = spectrum_mag(f_peak + df);
        const double denom = sm - 2.0 * s_peak + sp;
        if (denom < 0.0) {
            double shift = 0.5 * (sm - sp) / denom;
            shift = std::clamp(shift, -1.0, 1.0);
            f_peak += shift * df;
        }
    }

    // Envelope growth seed from per-half-cycle extrema.
    double sigma0 = 0.0;
    {
        std::vector<double> pt, pv;
        size_t seg_start = 0;
        for (size_t i = 1; i <= n; ++i) {
            const bool flip = i == n || (e[i] > 0) != (e[seg_start] > 0);
            if (!flip) continue;
            double m = 0.0, tm = tau[seg_start];
            for (size_t k = seg_start; k < i; ++k) {
                if (std::abs(e[k]) > m) {
                    m = std::abs(e[k]);
                    tm = tau[k];
                }
            }
            if (m > 1e-12 * e_max + 0.0 && m > 1e-14) {
                pt.push_back(tm);
                pv.push_back(std::log(m));
            }
            seg_start = i;
        }
        if (pt.size() >= 4) {
            double a_ = 0, b_ = 0, cc = 0, dd = 0;
            for (size_t i = 0; i < pt.size(); ++i) {
                a_ += pt[i];
                b_ += pt[i] * pt[i];
                cc += pv[i];
                dd += pt[i] * pv[i];
            }
            const double m_ = static_cast<double>(pt.size());
            const double den = m_ * b_ - a_ * a_;
            if (den != 0.0) sigma0 = (m_ * dd - a_ * cc) / den;
        }
    }

    // Profiled least squares on e^{sigma t}(a cos wt + b sin wt): for fixed
    // (f, sigma) the amplitudes are a 2x2 linear solve.
    double best_a = 0.0, best_b = 0.0;
    const auto residual_at = [&](double f, double sigma, double* a_out, double* b_out) {
        double m11 = 0, m12 = 0, m22 = 0, r1 = 0, r2 = 0;
        for (size_t i = 0; i < n; ++i) {
            const double g = std::exp(std::clamp(sigma * tau[i], -50.0, 50.0));
            const double ph = 2.0 * kPi * f * tau[i];
            const double bc = g * std::cos(ph), bs = g * std::sin(ph);
            m11 += bc * bc;
            m12 += bc * bs;
            m22 += bs * bs;
            r1 += bc * e[i];
            r2 += bs * e[i];
        }
        const double den = m11 * m22 - m12 * m12;
        if (std::abs(den) < 1e-300) return e_sq;
        const double a = (m22 * r1 - m12 * r2) / den;
        const double b = (m11 * r2 - m12 * r1) / den;
        if (a_out) *a_out = a;
        if (b_out) *b_out = b;
        double rss = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double g = std::exp(std::clamp(sigma * tau[i], -50.0, 50.0));
            const double ph = 2.0 * kPi * f * tau[i];
            const double model = g * (a * std::cos(ph) + b * std::sin(ph));
            rss += (e[i] - model) * (e[i] - model);
        }
        return rss;
    };

    double f_fit = f_peak, sigma_fit = sigma0;
    const double sig_half = std::max(3.0 / span, 0.5 * std::abs(sigma0));
    const double f_half = std::max(df, 0.5 / span);
    for (int round = 0; round < 4; ++round) {
        const double fh = f_half / (round + 1.0);
        const double sh = sig_half / (round + 1.0);
        f_fit = golden_min([&](double f) { return residual_at(f, sigma_fit, nullptr, nullptr); },
                           std::max(0.5 * f_lo, f_fit - fh), f_fit + fh, 30);
        sigma_fit = golden_min(
            [&](double s) { return residual_at(f_fit, s, nullptr, nullptr); },
            sigma_fit - sh, sigma_fit + sh, 30);
    }
    const double rss = residual_at(f_fit, sigma_fit, &best_a, &best_b);

    est.frequency = f_fit;
    est.growth_rate = sigma_fit;
    est.amplitude = std::hypot(best_a, best_b);
    est.fit_residual = e_sq > 0.0 ? std::clamp(std::sqrt(rss / e_sq), 0.0, 1.0) : 0.0;
    return est;
}

std::string to_string(ProposedLabel label) {
    switch (label) {
        case ProposedLabel::none: return "none";
        case ProposedLabel::angle_stability_small_disturbance:
            return "angle_stability_small_disturbance";
        case ProposedLabel::angle_stability_large_disturbance:
            return "angle_stability_large_disturbance";
    }
    return "none";
}

std::string to_string(LegacyLabel label) {
    switch (label) {
        case LegacyLabel::rotor_angle_small: return "rotor_angle_small";
        case LegacyLabel::rotor_angle_large: return "rotor_angle_large";
        case LegacyLabel::converter_driven_slow: return "converter_driven_slow";
    }
    return "";
}

std::string to_string(DisturbanceClass cls) {
    return cls == DisturbanceClass::small ? "small" : "large";
}

std::string to_string(DeviceTech tech) {
    return tech == DeviceTech::synchronous_machine ? "synchronous_machine" : "gfm_converter";
}

TaxonomyLabel classify_event(const StabilityVerdict& verdict,
                             const std::map<std::string, DeviceTech>& technologies) {
    TaxonomyLabel label;
    if (verdict.stable) return label;

    const bool small = verdict.disturbance_class == DisturbanceClass::small;
    label.proposed = small ? ProposedLabel::angle_stability_small_disturbance
                           : ProposedLabel::angle_stability_large_disturbance;
    for (const auto& device : verdict.violating_devices) {
        const auto it = technologies.find(device);
        if (it == technologies.end()) {
            throw StructuralError("no technology tag for violating device '" + device + "'");
        }
        LegacyLabel l;
        switch (it->second) {
            case DeviceTech::synchronous_machine:
                l = small ? LegacyLabel::rotor_angle_small : LegacyLabel::rotor_angle_large;
                break;
            case DeviceTech::gfm_converter:
            default:
                l = LegacyLabel::converter_driven_slow;
                break;
        }
        label.legacy.insert(l);
        label.rationale.push_back(device + ": " + to_string(it->second) + " -> " + to_string(l));
    }
    return label;
}

} // namespace rmsim
