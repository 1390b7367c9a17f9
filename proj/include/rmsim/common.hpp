#pragma once

#include <complex>
#include <stdexcept>
#include <string>

namespace rmsim {

using Complex = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Malformed input data: dangling references, duplicate ids, invariant
/// violations in specs. Maps to CLI exit code 2.
class StructuralError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Scenario file syntax or schema violation; carries the offending line.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, int line)
        : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

/// Power-flow Newton iteration failed to reach tolerance.
class PowerFlowDiverged : public std::runtime_error {
public:
    PowerFlowDiverged(const std::string& msg, double last_mismatch)
        : std::runtime_error(msg), last_mismatch_(last_mismatch) {}
    double last_mismatch() const { return last_mismatch_; }

private:
    double last_mismatch_;
};

/// A device cannot realize its power-flow dispatch (rating or limit hit).
class InitializationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// NaN/overflow or a solver that stopped making progress.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inner iteration (network fixed point or integrator corrector) exceeded
/// its budget; carries the simulation time where it happened.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& msg, double t)
        : std::runtime_error(msg + " at t=" + std::to_string(t) + " s"), time_(t) {}
    double time() const { return time_; }

private:
    double time_;
};

/// find_cct could not establish a stable/unstable bracket.
class NoBracketError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace rmsim
