#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rmsim/network.hpp"

namespace rmsim {

/// Active-power dispatch of a generator at a pv bus (the bus v_setpoint
/// supplies the voltage target).
struct GenDispatch {
    int bus = 0;
    double p_mw = 0.0;
};

struct PowerFlowOptions {
    double tol = 1e-10; // pu power mismatch
    int max_iter = 30;
};

struct PowerFlowSolution {
    Eigen::VectorXcd v;          // pu complex voltage per bus (dense index order)
    Eigen::VectorXcd s_injected; // pu net complex power per bus
    int iterations = 0;
    double max_mismatch = 0.0;
};

/// Full Newton-Raphson in polar form. Load buses draw p0*scale, q0*scale;
/// pv buses hold v_setpoint and inject dispatch minus local load. Throws
/// PowerFlowDiverged after max_iter, NumericalError on a singular Jacobian.
PowerFlowSolution solve_power_flow(const NetworkModel& network,
                                   std::span<const GenDispatch> dispatch,
                                   const PowerFlowOptions& options = {});

} // namespace rmsim
