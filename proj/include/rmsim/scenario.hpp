#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rmsim/devices.hpp"
#include "rmsim/network.hpp"
#include "rmsim/powerflow.hpp"
#include "rmsim/simulation.hpp"
#include "rmsim/studies.hpp"

namespace rmsim {

/// Study hooks carried by the scenario: a fault template for clearing-time
/// work plus ringdown-fit settings. All optional; fault_bus < 0 means no
/// template was declared.
struct StudySpec {
    std::string name = "custom";
    double t_fault = 1.0;
    int fault_bus = -1;
    double fault_r = 0.0;
    double fault_x = 0.0;
    std::optional<std::string> trip_branch;
    double t_post = 5.0;
    double angle_threshold_deg = 180.0;
    double slip_window_s = 2.0;
    double cct_lo = 0.15;
    double cct_hi = 0.20;
    double cct_tol = 0.002;
    std::string ringdown_channel; // empty: first device's angle channel
    double ringdown_skip = 0.2;   // fraction of the post-event span skipped
};

struct Scenario {
    std::string name = "scenario";
    double s_base_mva = 100.0;
    double f_hz = 60.0;
    SimConfig sim;
    std::vector<BusSpec> buses;
    std::vector<BranchSpec> branches;
    std::vector<LoadSpec> loads;
    std::vector<SyncMachineParams> machines;
    std::vector<GfmVsmParams> gfms;
    std::vector<Event> events;
    StudySpec study;
};

/// Strict line-oriented parser: `[section]` headers and `key = value` lines,
/// full-line `#` comments. Unknown sections or keys, malformed numbers and
/// duplicate singleton sections are ParseErrors carrying the line number;
/// semantic problems (dangling references, duplicate names) are
/// StructuralErrors.
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::string& path);
std::string serialize_scenario(const Scenario& scenario);

/// Reference and uniqueness checks over the parsed model (also run by
/// parse_scenario).
void validate_scenario(const Scenario& scenario);

/// Pre-build parameter override. Paths: `machine.<field>` (all machines),
/// `gfm.<field>` (all converters), `generators.p_dispatch_mw` (every
/// device), or `<device-name>.<field>`. Nested fields use dots that map to
/// the flat scenario keys (`machine.pss.enabled` -> pss_enabled). Enable
/// flags accept 0/1.
void apply_override(Scenario& scenario, const std::string& path, double value);
/// Same, with a combined "path=value" assignment string.
void apply_override(Scenario& scenario, const std::string& assignment);

NetworkModel make_network(const Scenario& scenario);
std::vector<Device> make_devices(const Scenario& scenario);
std::vector<GenDispatch> make_dispatch(const Scenario& scenario);
SystemBase make_base(const Scenario& scenario);
std::map<std::string, DeviceTech> technology_map(const Scenario& scenario);

/// Fault template from the [study] section; throws when none was declared.
FaultTemplate make_fault_template(const Scenario& scenario);

/// Ringdown channel from the study, defaulting to the first device's angle.
std::string ringdown_channel(const Scenario& scenario);

/// Full pipeline: power flow then dynamic initialization. The returned
/// system is ready to simulate or linearize.
DynamicSystem make_system(const Scenario& scenario);

} // namespace rmsim
