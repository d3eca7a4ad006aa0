#ifndef FRACDIFF_STEPPER_HPP
#define FRACDIFF_STEPPER_HPP

#include "fracdiff/assembly.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fracdiff {

/// psi(y) = |y|^{(1-m)/m} y = sign(y) |y|^{1/m}; psi(0) = 0 by continuity.
inline double psi(double y, double m) {
    if (y == 0.0) return 0.0;
    return std::copysign(std::pow(std::abs(y), 1.0 / m), y);
}

/// Exact inverse of psi: sign(y) |y|^m.
inline double psi_inv(double y, double m) {
    if (y == 0.0) return 0.0;
    return std::copysign(std::pow(std::abs(y), m), y);
}

/// Convex potential with Psi' = psi: Psi(y) = m/(m+1) |y|^{(m+1)/m}.
inline double psi_antiderivative(double y, double m) {
    if (y == 0.0) return 0.0;
    return m / (m + 1.0) * std::pow(std::abs(y), (m + 1.0) / m);
}

/// psi'(y) = (1/m) |y|^{1/m - 1}, taken as 0 at y = 0 for m != 1 (the
/// quadratic part of the step energy keeps the Jacobian positive definite
/// there); for m = 1 it is identically 1.
inline double psi_derivative(double y, double m) {
    if (m == 1.0) return 1.0;
    if (y == 0.0) return 0.0;
    return std::pow(std::abs(y), 1.0 / m - 1.0) / m;
}

struct StepConfig {
    double m = 0.5;
    double tau = 1e-3;
    int n_steps = 0;
    double newton_tol = 1e-10;
    int newton_max_iter = 50;
    double line_search_beta = 0.5;

    void validate() const {
        if (!(m > 0.0)) throw std::invalid_argument("StepConfig: m must be positive");
        if (!(tau > 0.0)) throw std::invalid_argument("StepConfig: tau must be positive");
        if (n_steps < 0) throw std::invalid_argument("StepConfig: n_steps must be nonnegative");
        if (!(newton_tol > 0.0)) throw std::invalid_argument("StepConfig: newton_tol must be positive");
        if (newton_max_iter < 1) throw std::invalid_argument("StepConfig: newton_max_iter must be >= 1");
        if (!(line_search_beta > 0.0 && line_search_beta < 1.0))
            throw std::invalid_argument("StepConfig: line_search_beta must lie in (0,1)");
    }
};

struct StepDiagnostics {
    int newton_iterations = 0;
    double residual = 0.0;
    double energy = 0.0;
    bool energy_monotone = true;
    int line_search_backtracks = 0;
};

struct StepResult {
    Eigen::VectorXd w;
    StepDiagnostics diagnostics;
};

namespace detail {

// Minimize E(w) = sum_i M_i Psi(w_i) - b.w + (theta/2) w^T A w by Newton
// with backtracking. Strictly convex: the Hessian diag(M psi'(w)) + theta A
// is positive definite because A is and psi' >= 0.
inline StepResult minimize_step_energy(const Eigen::VectorXd& b, double theta,
                                       const NonlocalSystem& sys, double m,
                                       const Eigen::VectorXd& w_init, double tol_abs,
                                       int max_iter, double beta) {
    const Eigen::MatrixXd& A = sys.stiffness;
    const Eigen::VectorXd& M = sys.lumped_mass;
    const int n = static_cast<int>(M.size());

    // Energy and the magnitude of its constituents; the latter sets the
    // roundoff floor below which decreases are unresolvable in doubles.
    auto energy = [&](const Eigen::VectorXd& w, const Eigen::VectorXd& Aw, double& mag) {
        const double lin = -b.dot(w);
        const double quad = 0.5 * theta * w.dot(Aw);
        double pot = 0.0;
        for (int i = 0; i < n; ++i) pot += M[i] * psi_antiderivative(w[i], m);
        mag = std::abs(lin) + std::abs(quad) + pot;
        return lin + quad + pot;
    };

    StepResult out;
    out.w = w_init;
    Eigen::VectorXd Aw = A * out.w;
    double mag = 0.0;
    double E = energy(out.w, Aw, mag);
    out.diagnostics.energy = E;

    for (int iter = 0; iter <= max_iter; ++iter) {
        Eigen::VectorXd grad = theta * Aw - b;
        for (int i = 0; i < n; ++i) grad[i] += M[i] * psi(out.w[i], m);
        const double res = grad.lpNorm<Eigen::Infinity>();
        out.diagnostics.residual = res;
        if (!std::isfinite(E) || !std::isfinite(res))
            throw std::runtime_error("step: non-finite energy");
        if (res <= tol_abs) {
            out.diagnostics.newton_iterations = iter;
            out.diagnostics.energy = E;
            return out;
        }
        if (iter == max_iter) break;

        Eigen::MatrixXd J = theta * A;
        for (int i = 0; i < n; ++i) J(i, i) += M[i] * psi_derivative(out.w[i], m);
        Eigen::LLT<Eigen::MatrixXd> llt(J);
        if (llt.info() != Eigen::Success)
            throw std::runtime_error("step: Jacobian not positive definite");
        const Eigen::VectorXd dir = llt.solve(-grad);

        const double predicted = -grad.dot(dir);
        const double noise = 32.0 * std::numeric_limits<double>::epsilon() * (mag + 1e-300);
        if (predicted <= noise) {
            // Quadratic-convergence regime: the decrease is below the energy's
            // float resolution, take the plain Newton step.
            out.w += dir;
            Aw = A * out.w;
            E = energy(out.w, Aw, mag);
            continue;
        }

        double t = 1.0;
        for (;;) {
            const Eigen::VectorXd w_new = out.w + t * dir;
            const Eigen::VectorXd Aw_new = A * w_new;
            double mag_new = 0.0;
            const double E_new = energy(w_new, Aw_new, mag_new);
            if (E_new < E) {
                out.w = w_new;
                Aw = Aw_new;
                E = E_new;
                mag = mag_new;
                break;
            }
            ++out.diagnostics.line_search_backtracks;
            t *= beta;
            if (t < 1e-14) {
                out.diagnostics.energy_monotone = false;
                throw std::runtime_error("step: line search failed to decrease the energy");
            }
        }
    }
    char msg[128];
    std::snprintf(msg, sizeof(msg), "step: newton_max_iter exceeded (last residual %.3e)",
                  out.diagnostics.residual);
    throw std::runtime_error(msg);
}

} // namespace detail

/// One backward Euler step: w solves M o (psi(w) - psi(w_prev)) + tau A w = 0
/// over the free nodes, equivalently minimizes the strictly convex energy
/// sum_i M_i Psi(w_i) - sum_i M_i psi(w_prev_i) w_i + (tau/2) w^T A w.
/// The stopping test is ||gradient||_inf <= newton_tol * max(1, ||M o psi(w_prev)||_inf).
inline StepResult backward_euler_step(const Eigen::VectorXd& w_prev, const NonlocalSystem& sys,
                                      const StepConfig& cfg) {
    cfg.validate();
    if (w_prev.size() != sys.lumped_mass.size())
        throw std::invalid_argument("backward_euler_step: dimension mismatch");
    if (!w_prev.allFinite()) throw std::invalid_argument("backward_euler_step: w_prev not finite");
    Eigen::VectorXd b(w_prev.size());
    for (int i = 0; i < w_prev.size(); ++i) b[i] = sys.lumped_mass[i] * psi(w_prev[i], cfg.m);
    const double scale = std::max(1.0, b.lpNorm<Eigen::Infinity>());
    return detail::minimize_step_energy(b, cfg.tau, sys, cfg.m, w_prev, cfg.newton_tol * scale,
                                        cfg.newton_max_iter, cfg.line_search_beta);
}

struct Trajectory {
    std::vector<Eigen::VectorXd> steps;  // W_0 ... W_M over free nodes
    std::vector<double> times;           // 0, tau, ..., M tau
    std::vector<StepDiagnostics> diagnostics;  // per computed step (size M)
    double m = 1.0;
    double tau = 0.0;

    int n_steps() const { return static_cast<int>(steps.size()) - 1; }
    double final_time() const { return times.back(); }
};

/// Run the backward Euler scheme from full nodal initial values. The values
/// are those of w_0 by default, or of u_0 when values_are_u is set (then
/// w_0 = psi^{-1}(u_0) nodewise). Constrained nodes must carry zeros. The
/// first stored step W_0 keeps the nodal values of w_0 exactly: the scheme's
/// psi / interpolate / psi^{-1} composition cancels at the nodes.
inline Trajectory run_simulation(const Eigen::VectorXd& initial_full, bool values_are_u,
                                 const NonlocalSystem& sys, const StepConfig& cfg) {
    cfg.validate();
    if (initial_full.size() != sys.mesh.n_nodes())
        throw std::invalid_argument("run_simulation: initial values must cover all nodes");
    for (int i = 0; i < sys.mesh.n_nodes(); ++i)
        if (!sys.mesh.is_free(i) && initial_full[i] != 0.0)
            throw std::invalid_argument("run_simulation: nonzero initial value on a constrained node");
    if (!initial_full.allFinite())
        throw std::invalid_argument("run_simulation: non-finite initial values");

    Eigen::VectorXd w0 = gather_free(sys.mesh, initial_full);
    if (values_are_u)
        for (int i = 0; i < w0.size(); ++i) w0[i] = psi_inv(w0[i], cfg.m);

    Trajectory traj;
    traj.m = cfg.m;
    traj.tau = cfg.tau;
    traj.steps.reserve(static_cast<std::size_t>(cfg.n_steps) + 1);
    traj.steps.push_back(w0);
    traj.times.push_back(0.0);
    for (int nstep = 1; nstep <= cfg.n_steps; ++nstep) {
        try {
            StepResult r = backward_euler_step(traj.steps.back(), sys, cfg);
            traj.steps.push_back(std::move(r.w));
            traj.diagnostics.push_back(r.diagnostics);
            traj.times.push_back(nstep * cfg.tau);
        } catch (const std::exception& err) {
            throw std::runtime_error("run_simulation: step " + std::to_string(nstep) + ": " +
                                     err.what());
        }
    }
    return traj;
}

/// Time-independent problem M o psi(V) + A V = M o f over the free nodes
/// (f given as a full nodal vector), solved by the same convex Newton
/// machinery with the quadratic weight set to one.
inline Eigen::VectorXd elliptic_solve(const Eigen::VectorXd& f_full, const NonlocalSystem& sys,
                                      double m, double tol = 1e-12, int max_iter = 100) {
    if (!(m > 0.0)) throw std::invalid_argument("elliptic_solve: m must be positive");
    if (f_full.size() != sys.mesh.n_nodes())
        throw std::invalid_argument("elliptic_solve: f must cover all nodes");
    const Eigen::VectorXd f = gather_free(sys.mesh, f_full);
    Eigen::VectorXd b(f.size());
    for (int i = 0; i < f.size(); ++i) b[i] = sys.lumped_mass[i] * f[i];
    const double scale = std::max(1.0, b.lpNorm<Eigen::Infinity>());
    const Eigen::VectorXd init = Eigen::VectorXd::Zero(f.size());
    return detail::minimize_step_energy(b, 1.0, sys, m, init, tol * scale, max_iter, 0.5).w;
}

struct StabilityCheck {
    double lhs = 0.0;    // (1/(m+1)) sum M_i |W_M,i|^{(m+1)/m} + tau sum_n W_n^T A W_n
    double rhs = 0.0;    // (1/(m+1)) sum M_i |W_0,i|^{(m+1)/m}
    double slack = 0.0;  // rhs - lhs, nonnegative up to solver tolerance
    bool passed = false;
};

/// Discrete stability inequality at the lumped level: testing each step
/// against its own solution telescopes into
///   (1/(m+1)) ||W_M||^p_{p,lumped} + tau sum_n W_n^T A W_n
///     <= (1/(m+1)) ||W_0||^p_{p,lumped},   p = (m+1)/m.
inline StabilityCheck stability_check(const Trajectory& traj, const NonlocalSystem& sys,
                                      double rel_slack = 1e-9) {
    const double p = (traj.m + 1.0) / traj.m;
    const Eigen::VectorXd& M = sys.lumped_mass;
    auto lumped_norm = [&](const Eigen::VectorXd& w) {
        double t = 0.0;
        for (int i = 0; i < w.size(); ++i) t += M[i] * std::pow(std::abs(w[i]), p);
        return t / (traj.m + 1.0);
    };

    StabilityCheck out;
    out.rhs = lumped_norm(traj.steps.front());
    double energy_sum = 0.0;
    for (std::size_t n = 1; n < traj.steps.size(); ++n)
        energy_sum += traj.steps[n].dot(sys.stiffness * traj.steps[n]);
    out.lhs = lumped_norm(traj.steps.back()) + traj.tau * energy_sum;
    out.slack = out.rhs - out.lhs;
    out.passed = out.slack >= -rel_slack * std::abs(out.rhs);
    return out;
}

/// Trajectory CSV: "time,node_index,coordinate,W,U" with U = psi(W) nodewise,
/// over all mesh nodes (constrained rows carry zeros).
inline void write_trajectory_csv(const Trajectory& traj, const Mesh& mesh, std::ostream& out) {
    out << "time,node_index,coordinate,W,U\n";
    char buf[160];
    for (std::size_t n = 0; n < traj.steps.size(); ++n) {
        const Eigen::VectorXd full = scatter_free(mesh, traj.steps[n]);
        for (int i = 0; i < mesh.n_nodes(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.12g,%d,%.12g,%.17g,%.17g\n", traj.times[n], i,
                          mesh.node(i), full[i], psi(full[i], traj.m));
            out << buf;
        }
    }
}

} // namespace fracdiff

#endif
