#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "rmsim/common.hpp"

namespace rmsim {

enum class BusKind { slack, pv, pq };

struct BusSpec {
    int id = 0;
    BusKind kind = BusKind::pq;
    double base_kv = 0.0;
    double v_setpoint = 1.0;     // pu, pv/slack
    double angle_setpoint_deg = 0.0; // slack only
};

struct BranchSpec {
    std::string id;
    int from = 0;
    int to = 0;
    double r = 0.0;       // pu on system base
    double x = 0.0;       // pu on system base
    double b_shunt = 0.0; // pu total line charging
    double tap = 1.0;     // pu ratio, from side
    bool in_service = true;
};

struct LoadSpec {
    int bus = 0;
    double p_mw = 0.0;
    double q_mvar = 0.0;
    double scale = 1.0; // event-controlled multiplier
};

struct FaultShunt {
    int bus = 0; // external bus id
    Complex y;   // pu admittance added to the diagonal
};

/// Topology events, applied with value semantics (the source model is
/// never mutated).
struct SetFault {
    int bus = 0;
    Complex y;
};
struct ClearFaultEvent {};
struct TripBranch {
    std::string id;
};
struct SetLoadScale {
    int bus = 0;
    double scale = 1.0;
};
using TopologyEvent = std::variant<SetFault, ClearFaultEvent, TripBranch, SetLoadScale>;

/// Static network: buses, branches, loads and the assembled bus admittance
/// matrix. Immutable after construction; topology changes return a new model.
class NetworkModel {
public:
    NetworkModel(std::vector<BusSpec> buses, std::vector<BranchSpec> branches,
                 std::vector<LoadSpec> loads, double s_base_mva = 100.0);

    int n_buses() const { return static_cast<int>(buses_.size()); }
    const std::vector<BusSpec>& buses() const { return buses_; }
    const std::vector<BranchSpec>& branches() const { return branches_; }
    const std::vector<LoadSpec>& loads() const { return loads_; }
    double s_base_mva() const { return s_base_mva_; }

    /// Dense index of an external bus id; throws StructuralError if unknown.
    int bus_index(int bus_id) const;
    const BusSpec& bus(int index) const { return buses_.at(index); }
    int slack_index() const { return slack_index_; }

    const Eigen::MatrixXcd& y_bus() const { return y_bus_; }
    const std::optional<FaultShunt>& fault() const { return fault_; }

    NetworkModel with_fault(int bus_id, Complex y) const;
    NetworkModel without_fault() const;
    NetworkModel with_branch_tripped(const std::string& branch_id) const;
    NetworkModel with_load_scale(int bus_id, double scale) const;

private:
    void validate() const;
    void rebuild();

    std::vector<BusSpec> buses_;
    std::vector<BranchSpec> branches_;
    std::vector<LoadSpec> loads_;
    double s_base_mva_;
    std::optional<FaultShunt> fault_;
    int slack_index_ = -1;
    Eigen::MatrixXcd y_bus_;
};

/// Pi-model admittance assembly. Out-of-service branches contribute
/// nothing; the fault shunt (if set) lands on the diagonal of its bus.
Eigen::MatrixXcd assemble_admittance(const NetworkModel& network);

NetworkModel apply_topology_event(const NetworkModel& network, const TopologyEvent& event);

} // namespace rmsim
