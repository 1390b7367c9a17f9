#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rmsim/simulation.hpp"

namespace rmsim {

/// Central-difference Jacobian of a vector field. `f` must write n outputs
/// for n inputs; each state j is perturbed by +-h*max(|x_j|, 1).
Eigen::MatrixXd numeric_jacobian(
    const std::function<void(std::span<const double>, std::span<double>)>& f,
    std::span<const double> x, double h = 1e-6);

struct LinearModel {
    Eigen::MatrixXd a;
    std::vector<std::string> state_labels;
    std::vector<double> equilibrium;
};

/// Linearizes the coupled differential-algebraic system about its
/// initialized operating point; the algebraic network is re-solved at every
/// perturbed state, so `a` is the fully reduced state matrix.
LinearModel linearize(const DynamicSystem& system, double h = 1e-6);

struct Mode {
    Complex eigenvalue;
    double frequency_hz = 0.0;  // |Im|/2pi
    double damping_ratio = 0.0; // -Re/|lambda|, 0 for a zero eigenvalue
    Eigen::VectorXd participation; // per-state magnitudes, max = 1
    Complex participation_sum;     // signed sum before normalization (= 1)
};

/// All modes of the state matrix sorted by damping ratio ascending; complex
/// pairs are reported once with Im >= 0.
std::vector<Mode> eigenmodes(const LinearModel& model);

/// Indices of the k largest participation entries, descending.
std::vector<int> top_participating_states(const Mode& mode, int k);

struct ConsistencyReport {
    bool conclusive = false;
    double freq_error = 0.0;   // relative
    double growth_error = 0.0; // relative
};

/// Cross-validates the least-damped oscillatory mode against a ringdown fit
/// of one trace channel. The first 20% of the trace span is skipped to let
/// the nonlinear transient die out. Inconclusive (not an error) when either
/// side has nothing oscillatory to offer.
ConsistencyReport mode_time_consistency(const LinearModel& model, const Trace& trace,
                                        const std::string& channel);

/// Exact response of the linear model to an initial state offset, sampled at
/// `times`: rows are time points, columns states.
Eigen::MatrixXd linear_response(const LinearModel& model, const Eigen::VectorXd& dx0,
                                std::span<const double> times);

} // namespace rmsim
