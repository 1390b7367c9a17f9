#pragma once

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

#include "rmsim/devices.hpp"
#include "rmsim/network.hpp"
#include "rmsim/powerflow.hpp"

namespace rmsim {

struct ApplyFault {
    double time = 0.0;
    int bus = 0;
    double r = 0.0; // fault impedance; r = x = 0 means a bolted fault
    double x = 0.0;
};
struct ClearFault {
    double time = 0.0;
    std::optional<std::string> trip_branch; // branch removed together with the fault
};
struct LoadScale {
    double time = 0.0;
    int bus = 0;
    double scale = 1.0; // absolute factor on the nominal load
};
struct ParamOverride {
    double time = 0.0;
    std::string device;
    std::string field;
    double value = 0.0;
};

using Event = std::variant<ApplyFault, ClearFault, LoadScale, ParamOverride>;

double event_time(const Event& e);

enum class Integrator { trapezoidal, rk4 };

struct SimConfig {
    double t_end = 10.0;
    double dt = 0.001; // s; capped at 0.01 by validation
    Integrator integrator = Integrator::trapezoidal;
    double network_solve_tol = 1e-10;
    int max_inner_iter = 50;
    double equilibrium_tol = 1e-8;
};

/// Uniform-rate record of device output channels. `columns` excludes time;
/// rows align with `times`.
struct Trace {
    std::vector<std::string> columns;
    std::vector<double> times;
    std::vector<std::vector<double>> rows;
    int stride = 1;
    bool truncated = false;

    int column_index(const std::string& name) const; // -1 when absent
    std::vector<double> column(const std::string& name) const;
};

/// Thrown when a run aborts mid-way; carries whatever was simulated so the
/// caller can still persist a partial trace.
class SimulationError : public NumericalError {
public:
    SimulationError(const std::string& msg, double t, Trace partial)
        : NumericalError(msg.find(" at t") != std::string::npos
                             ? msg
                             : msg + " at t=" + std::to_string(t) + " s"),
          time_(t),
          partial_(std::move(partial)) {}
    double time() const { return time_; }
    const Trace& partial_trace() const { return partial_; }

private:
    double time_;
    Trace partial_;
};

/// Algebraic network plus dynamic devices: owns the current topology, the
/// constant-impedance load representation and the device state layout, and
/// evaluates the coupled right-hand side x' = f(x) with the network solved
/// implicitly at each call.
class DynamicSystem {
public:
    DynamicSystem(NetworkModel network, std::vector<Device> devices, SystemBase base,
                  double network_tol = 1e-10, int max_inner_iter = 50);

    /// Back-solves every device from the power-flow operating point, freezes
    /// loads as constant shunts at their solved voltages and verifies the
    /// result is an equilibrium of the dynamic model.
    void initialize(const PowerFlowSolution& pf, double equilibrium_tol = 1e-8);

    int n_states() const { return n_states_; }
    const std::vector<double>& x0() const { return x0_; }
    std::vector<std::string> state_labels() const;

    const std::vector<Device>& devices() const { return devices_; }
    const NetworkModel& network() const { return network_; }
    const SystemBase& base() const { return base_; }
    const InfiniteBusModel& infinite_bus() const { return infinite_bus_; }
    std::pair<int, int> device_state_span(int device_index) const;

    /// Solves the algebraic network for the given device states. Returns all
    /// bus voltages (system pu).
    Eigen::VectorXcd solve_network(std::span<const double> x) const;
    void derivatives(std::span<const double> x, std::span<double> dx) const;
    /// Clamps hard-limited device states (non-windup limits) in place.
    void project(std::span<double> x) const;

    /// Applies a disturbance, rebuilding the network matrices.
    void apply_event(const Event& event);

    /// Time used to annotate solver failures.
    void set_context_time(double t) { context_time_ = t; }

    std::vector<std::string> channel_columns() const;
    void channel_row(std::span<const double> x, const Eigen::VectorXcd& v,
                     std::span<double> out) const;

private:
    void rebuild();
    Eigen::VectorXcd norton_currents(std::span<const double> x,
                                     const Eigen::VectorXcd& v) const;

    NetworkModel network_;
    std::vector<Device> devices_;
    SystemBase base_;
    InfiniteBusModel infinite_bus_;
    double network_tol_;
    int max_inner_iter_;
    double context_time_ = 0.0;

    int n_states_ = 0;
    std::vector<int> offsets_;      // state offset per device
    std::vector<int> device_bus_;   // bus index per device
    std::vector<double> x0_;
    bool initialized_ = false;

    // Load representation frozen at initialization: admittance per bus for
    // scale = 1, plus the active scale factors.
    Eigen::VectorXcd load_y_nominal_;
    std::vector<double> load_scale_; // per bus

    // Cached factorization of the reduced dynamic admittance matrix.
    Eigen::MatrixXcd y_dyn_;
    std::vector<int> free_rows_; // bus indices excluding the slack
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu_;
    mutable Eigen::VectorXcd v_guess_;
};

/// Fixed-step time-domain engine: trapezoidal (predictor-corrector) or RK4,
/// with disturbances applied exactly at their timestamps by splitting steps.
class Simulator {
public:
    Simulator(DynamicSystem system, SimConfig config);

    /// Runs from the initialized operating point to t_end. Events must carry
    /// times within [0, t_end]; they are applied in time order.
    Trace run(std::span<const Event> events);

    /// Starts the next run from `x` instead of the initialized equilibrium
    /// (e.g. to study a state perturbation without shaping an event for it).
    void set_initial_state(std::vector<double> x);

    DynamicSystem& system() { return system_; }
    const DynamicSystem& system() const { return system_; }
    const SimConfig& config() const { return config_; }
    const std::vector<double>& final_state() const { return x_; }

private:
    void step_trapezoidal(double t, double h);
    void step_rk4(double t, double h);

    DynamicSystem system_;
    SimConfig config_;
    std::vector<double> x_;
    std::optional<std::vector<double>> x_start_;
};

/// Keeps every stride-th sample (stride = 1 is the identity), always
/// retaining the first and last rows.
Trace resample(const Trace& trace, int stride);

} // namespace rmsim
