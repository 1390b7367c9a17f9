#include "rmsim/smallsignal.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "rmsim/studies.hpp"

namespace rmsim {

Eigen::MatrixXd numeric_jacobian(
    const std::function<void(std::span<const double>, std::span<double>)>& f,
    std::span<const double> x, double h) {
    const int n = static_cast<int>(x.size());
    Eigen::MatrixXd jac(n, n);
    std::vector<double> xp(x.begin(), x.end());
    std::vector<double> f_plus(static_cast<size_t>(n)), f_minus(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) {
        const double step = h * std::max(std::abs(x[static_cast<size_t>(j)]), 1.0);
        const double saved = xp[static_cast<size_t>(j)];
        xp[static_cast<size_t>(j)] = saved + step;
        f(xp, f_plus);
        xp[static_cast<size_t>(j)] = saved - step;
        f(xp, f_minus);
        xp[static_cast<size_t>(j)] = saved;
        for (int i = 0; i < n; ++i) {
            jac(i, j) = (f_plus[static_cast<size_t>(i)] - f_minus[static_cast<size_t>(i)]) /
                        (2.0 * step);
        }
    }
    return jac;
}

LinearModel linearize(const DynamicSystem& system, double h) {
    LinearModel model;
    model.state_labels = system.state_labels();
    model.equilibrium = system.x0();

    const auto labels = model.state_labels;
    int current_col = -1;
    const auto f = [&](std::span<const double> x, std::span<double> dx) {
        try {
            system.derivatives(x, dx);
        } catch (const std::runtime_error& err) {
            const std::string state =
                current_col >= 0 && current_col < static_cast<int>(labels.size())
                    ? labels[static_cast<size_t>(current_col)]
                    : "<unknown>";
            throw NumericalError("linearization failed perturbing state " + state + ": " +
                                 err.what());
        }
    };

    // Re-implement the column loop here so the failing state can be named.
    const int n = system.n_states();
    model.a.resize(n, n);
    std::vector<double> xp = model.equilibrium;
    std::vector<double> f_plus(static_cast<size_t>(n)), f_minus(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) {
        current_col = j;
        const double step = h * std::max(std::abs(xp[static_cast<size_t>(j)]), 1.0);
        const double saved = xp[static_cast<size_t>(j)];
        xp[static_cast<size_t>(j)] = saved + step;
        f(xp, f_plus);
        xp[static_cast<size_t>(j)] = saved - step;
        f(xp, f_minus);
        xp[static_cast<size_t>(j)] = saved;
        for (int i = 0; i < n; ++i) {
            model.a(i, j) = (f_plus[static_cast<size_t>(i)] - f_minus[static_cast<size_t>(i)]) /
                            (2.0 * step);
        }
    }
    if (!model.a.allFinite()) throw NumericalError("state matrix contains non-finite entries");
    return model;
}

std::vector<Mode> eigenmodes(const LinearModel& model) {
    Eigen::EigenSolver<Eigen::MatrixXd> solver(model.a);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("eigenvalue decomposition did not converge");
    }
    const Eigen::VectorXcd lambda = solver.eigenvalues();
    const Eigen::MatrixXcd v = solver.eigenvectors();
    const Eigen::MatrixXcd w = v.inverse(); // rows are left eigenvectors, W V = I

    const int n = static_cast<int>(lambda.size());
    std::vector<Mode> modes;
    for (int i = 0; i < n; ++i) {
        const double im_tol = 1e-9 * (1.0 + std::abs(lambda(i)));
        if (lambda(i).imag() < -im_tol) continue; // conjugate partner reported instead
        Mode m;
        m.eigenvalue = lambda(i);
        m.frequency_hz = std::abs(lambda(i).imag()) / (2.0 * kPi);
        const double mag = std::abs(lambda(i));
        m.damping_ratio = mag < 1e-12 ? 0.0 : -lambda(i).real() / mag;
        m.participation.resize(n);
        m.participation_sum = Complex(0.0, 0.0);
        double max_p = 0.0;
        for (int k = 0; k < n; ++k) {
            const Complex p = v(k, i) * w(i, k);
            m.participation_sum += p;
            m.participation(k) = std::abs(p);
            max_p = std::max(max_p, m.participation(k));
        }
        if (max_p > 0.0) m.participation /= max_p;
        modes.push_back(std::move(m));
    }
    std::sort(modes.begin(), modes.end(),
              [](const Mode& a, const Mode& b) { return a.damping_ratio < b.damping_ratio; });
    return modes;
}

std::vector<int> top_participating_states(const Mode& mode, int k) {
    std::vector<int> idx(static_cast<size_t>(mode.participation.size()));
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return mode.participation(a) > mode.participation(b);
    });
    idx.resize(std::min<size_t>(idx.size(), static_cast<size_t>(std::max(k, 0))));
    return idx;
}

ConsistencyReport mode_time_consistency(const LinearModel& model, const Trace& trace,
                                        const std::string& channel) {
    ConsistencyReport report;
    const auto modes = eigenmodes(model);
    const Mode* target = nullptr;
    for (const auto& m : modes) {
        if (m.frequency_hz > 0.01) { // least-damped oscillatory: list is damping-sorted
            target = &m;
            break;
        }
    }
    if (!target || trace.times.size() < 2) return report;

    const double t0 = trace.times.front();
    const double span = trace.times.back() - t0;
    const auto est = estimate_oscillation(trace, channel, t0 + 0.2 * span);
    if (!est.frequency) return report;

    report.conclusive = true;
    report.freq_error = std::abs(*est.frequency - target->frequency_hz) / target->frequency_hz;
    const double re = target->eigenvalue.real();
    report.growth_error = std::abs(est.growth_rate - re) / std::max(std::abs(re), 1e-6);
    return report;
}

Eigen::MatrixXd linear_response(const LinearModel& model, const Eigen::VectorXd& dx0,
                                std::span<const double> times) {
    Eigen::EigenSolver<Eigen::MatrixXd> solver(model.a);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("eigenvalue decomposition did not converge");
    }
    const Eigen::MatrixXcd v = solver.eigenvectors();
    const Eigen::VectorXcd lambda = solver.eigenvalues();
    const Eigen::VectorXcd c = v.partialPivLu().solve(dx0.cast<Complex>());

    Eigen::MatrixXd out(static_cast<int>(times.size()), model.a.rows());
    for (size_t r = 0; r < times.size(); ++r) {
        Eigen::VectorXcd phase(lambda.size());
        for (int i = 0; i < lambda.size(); ++i) {
            phase(i) = c(i) * std::exp(lambda(i) * times[r]);
        }
        out.row(static_cast<int>(r)) = (v * phase).real().transpose();
    }
    return out;
}

} // namespace rmsim
