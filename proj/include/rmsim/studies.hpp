#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rmsim/devices.hpp"
#include "rmsim/simulation.hpp"

namespace rmsim {

enum class DisturbanceClass { small, large };

struct StabilityVerdict {
    bool stable = true;
    double first_violation_time = 0.0; // meaningful only when unstable
    std::vector<std::string> violating_devices;
    DisturbanceClass disturbance_class = DisturbanceClass::large;
    std::string criterion; // "angle_excursion", "sustained_slip" or ""
};

/// Scans every *.angle_deg channel for loss of synchronism: an excursion of
/// more than `angle_threshold_deg` away from the device's value at
/// `t_reference` (the post-disturbance reference), or a monotone slip lasting
/// longer than `window_s` that covers at least 90 degrees.
StabilityVerdict detect_loss_of_sync(const Trace& trace, double angle_threshold_deg = 180.0,
                                     double window_s = 2.0, double t_reference = 0.0,
                                     DisturbanceClass disturbance_class = DisturbanceClass::large);

/// Parameterized fault for clearing-time searches: applied at `t_fault`,
/// cleared `t_clear` later (the search variable), optionally tripping a
/// branch, then observed for `t_post` seconds.
struct FaultTemplate {
    double t_fault = 1.0;
    int bus = 0;
    double r = 0.0;
    double x = 0.0;
    std::optional<std::string> trip_branch;
    double t_post = 5.0;
    double angle_threshold_deg = 180.0;
    double slip_window_s = 2.0;
};

struct CctResult {
    double cct = 0.0;        // midpoint of the final bracket, seconds
    double bracket_lo = 0.0; // last stable clearing time
    double bracket_hi = 0.0; // first unstable clearing time
    double tolerance = 0.0;
    int evaluations = 0;       // bisection midpoint probes
    int total_simulations = 0; // including endpoint verification
};

/// True when clearing the templated fault after `t_clear` keeps the system
/// in synchronism. One full simulation.
bool fault_run_is_stable(const DynamicSystem& system, const SimConfig& config,
                         const FaultTemplate& fault, double t_clear, Trace* trace_out = nullptr);

/// Bisection on the clearing time. The endpoints are verified first: an
/// unstable t_lo is a no-bracket error; a stable t_hi is widened a bounded
/// number of times before giving up.
CctResult find_cct(const DynamicSystem& system, const SimConfig& config,
                   const FaultTemplate& fault, double t_lo, double t_hi, double tol = 0.002);

struct OscillationEstimate {
    std::optional<double> frequency; // Hz; absent when the signal is flat
    double growth_rate = 0.0;        // 1/s, Re(lambda) equivalent
    double amplitude = 0.0;          // channel units at the fit start
    double fit_residual = 0.0;       // relative, in [0, 1]
};

/// Ringdown fit of one channel from `t_start` on: linear detrend, spectral
/// peak with quadratic interpolation, envelope growth seed, then a profiled
/// least-squares refinement of e^{sigma t}(a cos wt + b sin wt).
OscillationEstimate estimate_oscillation(const Trace& trace, const std::string& channel,
                                         double t_start);

enum class ProposedLabel {
    none,
    angle_stability_small_disturbance,
    angle_stability_large_disturbance,
};

enum class LegacyLabel {
    rotor_angle_small,
    rotor_angle_large,
    converter_driven_slow,
};

struct TaxonomyLabel {
    ProposedLabel proposed = ProposedLabel::none;
    std::set<LegacyLabel> legacy;
    std::vector<std::string> rationale; // one line per violating device
};

std::string to_string(ProposedLabel label);
std::string to_string(LegacyLabel label);
std::string to_string(DisturbanceClass cls);
std::string to_string(DeviceTech tech);

/// Maps a verdict onto both taxonomies: the proposed single label follows
/// the disturbance class alone, the legacy set is the union over the
/// violating devices' technologies.
TaxonomyLabel classify_event(const StabilityVerdict& verdict,
                             const std::map<std::string, DeviceTech>& technologies);

} // namespace rmsim
