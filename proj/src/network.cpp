#include "rmsim/network.hpp"

#include <algorithm>
#include <set>

namespace rmsim {

NetworkModel::NetworkModel(std::vector<BusSpec> buses, std::vector<BranchSpec> branches,
                           std::vector<LoadSpec> loads, double s_base_mva)
    : buses_(std::move(buses)), branches_(std::move(branches)), loads_(std::move(loads)),
      s_base_mva_(s_base_mva) {
    validate();
    rebuild();
}

void NetworkModel::validate() const {
    if (s_base_mva_ <= 0.0)
        throw StructuralError("system base must be positive");

    std::set<int> ids;
    std::string slack_list;
    int slack_count = 0;
    for (const auto& b : buses_) {
        if (!ids.insert(b.id).second)
            throw StructuralError("duplicate bus id " + std::to_string(b.id));
        if (b.base_kv <= 0.0)
            throw StructuralError("bus " + std::to_string(b.id) + ": base_kv must be positive");
        if (b.kind == BusKind::slack) {
            ++slack_count;
            if (!slack_list.empty()) slack_list += ", ";
            slack_list += "[bus] id " + std::to_string(b.id);
        }
    }
    if (slack_count != 1)
        throw StructuralError("network must have exactly one slack bus, found " +
                              std::to_string(slack_count) +
                              (slack_list.empty() ? "" : " (" + slack_list + ")"));

    std::set<std::string> branch_ids;
    for (const auto& br : branches_) {
        if (!branch_ids.insert(br.id).second)
            throw StructuralError("duplicate branch id '" + br.id + "'");
        if (br.x == 0.0)
            throw StructuralError("branch '" + br.id + "': x must be nonzero");
        if (br.tap <= 0.0)
            throw StructuralError("branch '" + br.id + "': tap must be positive");
        if (br.from == br.to)
            throw StructuralError("branch '" + br.id + "': from and to coincide");
        if (ids.find(br.from) == ids.end() || ids.find(br.to) == ids.end())
            throw StructuralError("branch '" + br.id + "' references an unknown bus");
    }
    for (const auto& l : loads_) {
        if (ids.find(l.bus) == ids.end())
            throw StructuralError("load references unknown bus " + std::to_string(l.bus));
        if (l.scale < 0.0)
            throw StructuralError("load scale must be non-negative");
    }
}

void NetworkModel::rebuild() {
    slack_index_ = -1;
    for (int i = 0; i < n_buses(); ++i)
        if (buses_[i].kind == BusKind::slack)
            slack_index_ = i;
    y_bus_ = assemble_admittance(*this);
}

int NetworkModel::bus_index(int bus_id) const {
    for (int i = 0; i < n_buses(); ++i)
        if (buses_[i].id == bus_id)
            return i;
    throw StructuralError("unknown bus id " + std::to_string(bus_id));
}

NetworkModel NetworkModel::with_fault(int bus_id, Complex y) const {
    NetworkModel out = *this;
    out.bus_index(bus_id); // existence check
    out.fault_ = FaultShunt{bus_id, y};
    out.rebuild();
    return out;
}

NetworkModel NetworkModel::without_fault() const {
    NetworkModel out = *this;
    out.fault_.reset();
    out.rebuild();
    return out;
}

NetworkModel NetworkModel::with_branch_tripped(const std::string& branch_id) const {
    NetworkModel out = *this;
    auto it = std::find_if(out.branches_.begin(), out.branches_.end(),
                           [&](const BranchSpec& b) { return b.id == branch_id; });
    if (it == out.branches_.end())
        throw StructuralError("unknown branch id '" + branch_id + "'");
    it->in_service = false;
    out.rebuild();
    return out;
}

NetworkModel NetworkModel::with_load_scale(int bus_id, double scale) const {
    if (scale < 0.0)
        throw StructuralError("load scale must be non-negative");
    NetworkModel out = *this;
    bool found = false;
    for (auto& l : out.loads_)
        if (l.bus == bus_id) {
            l.scale = scale;
            found = true;
        }
    if (!found)
        throw StructuralError("no load at bus " + std::to_string(bus_id));
    return out;
}

Eigen::MatrixXcd assemble_admittance(const NetworkModel& network) {
    const int n = network.n_buses();
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);

    for (const auto& br : network.branches()) {
        if (!br.in_service)
            continue;
        const int i = network.bus_index(br.from);
        const int j = network.bus_index(br.to);
        const Complex ys = 1.0 / Complex(br.r, br.x);
        const Complex ysh(0.0, br.b_shunt / 2.0);
        const double a = br.tap;
        y(i, i) += (ys + ysh) / (a * a);
        y(j, j) += ys + ysh;
        y(i, j) -= ys / a;
        y(j, i) -= ys / a;
    }

    if (network.fault())
        y(network.bus_index(network.fault()->bus), network.bus_index(network.fault()->bus)) +=
            network.fault()->y;

    return y;
}

NetworkModel apply_topology_event(const NetworkModel& network, const TopologyEvent& event) {
    return std::visit(
        [&](const auto& e) -> NetworkModel {
            using T = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<T, SetFault>)
                return network.with_fault(e.bus, e.y);
            else if constexpr (std::is_same_v<T, ClearFaultEvent>)
                return network.without_fault();
            else if constexpr (std::is_same_v<T, TripBranch>)
                return network.with_branch_tripped(e.id);
            else
                return network.with_load_scale(e.bus, e.scale);
        },
        event);
}

} // namespace rmsim
