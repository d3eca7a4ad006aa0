#ifndef FRACDIFF_ANALYSIS_HPP
#define FRACDIFF_ANALYSIS_HPP

#include "fracdiff/assembly.hpp"
#include "fracdiff/stepper.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace fracdiff {

/// Quasi-norm ||v2||_{(v1,p)} = sqrt( int_Omega (|v1|+|v2|)^{p-2} |v2|^2 ),
/// elementwise Gauss quadrature over the solution domain only. Points where
/// |v1| + |v2| = 0 contribute zero (the integrand's limit).
inline double quasi_norm(const Eigen::VectorXd& v1_full, const Eigen::VectorXd& v2_full, double p,
                         const Mesh& mesh, int quad_order = 4) {
    if (!(p > 1.0)) throw std::invalid_argument("quasi_norm: p must exceed 1");
    if (v1_full.size() != mesh.n_nodes() || v2_full.size() != mesh.n_nodes())
        throw std::invalid_argument("quasi_norm: nodal vectors must cover all nodes");
    const GaussRule& g = GaussRule::get(quad_order);
    double total = 0.0;
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const double x0 = mesh.element_left(e), x1 = mesh.element_right(e);
        if (0.5 * (x0 + x1) <= mesh.domain_a() || 0.5 * (x0 + x1) >= mesh.domain_b()) continue;
        const double half = 0.5 * (x1 - x0);
        for (int q = 0; q < g.size(); ++q) {
            const double t = 0.5 * (1.0 + g.points[static_cast<std::size_t>(q)]);
            const double a = (1.0 - t) * v1_full[e] + t * v1_full[e + 1];
            const double b = (1.0 - t) * v2_full[e] + t * v2_full[e + 1];
            const double base = std::abs(a) + std::abs(b);
            if (base == 0.0) continue;
            total += half * g.weights[static_cast<std::size_t>(q)] * std::pow(base, p - 2.0) * b * b;
        }
    }
    return std::sqrt(total);
}

/// |v|^2_{H^s} of the zero-extended P1 function with the given free
/// coefficients: exactly the stiffness quadratic form.
inline double hs_seminorm_sq(const Eigen::VectorXd& coeffs_free, const NonlocalSystem& sys) {
    if (coeffs_free.size() != sys.stiffness.rows())
        throw std::invalid_argument("hs_seminorm_sq: dimension mismatch");
    return coeffs_free.dot(sys.stiffness * coeffs_free);
}

/// Exact L2 norm (squared) of a full nodal P1 function over the meshed region.
inline double l2_norm_sq(const Eigen::VectorXd& full, const Mesh& mesh) {
    if (full.size() != mesh.n_nodes()) throw std::invalid_argument("l2_norm_sq: size mismatch");
    double total = 0.0;
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const double h = mesh.element_length(e);
        const double va = full[e], vb = full[e + 1];
        total += h * (va * va + va * vb + vb * vb) / 3.0;
    }
    return total;
}

/// Prolongate a coarse free-coefficient vector to the free coefficients of a
/// nested finer mesh (the represented function is unchanged).
inline Eigen::VectorXd prolong_free(const Eigen::VectorXd& coarse_free, const Mesh& coarse,
                                    const Mesh& fine) {
    return gather_free(fine, prolongate(scatter_free(coarse, coarse_free), fine));
}

namespace detail {

inline Eigen::VectorXd restrict_transpose_once(const Eigen::VectorXd& fine_full) {
    const int nf = static_cast<int>(fine_full.size());
    const int nc = (nf + 1) / 2;
    Eigen::VectorXd c(nc);
    for (int k = 0; k < nc; ++k) {
        double v = fine_full[2 * k];
        if (2 * k - 1 >= 0) v += 0.5 * fine_full[2 * k - 1];
        if (2 * k + 1 < nf) v += 0.5 * fine_full[2 * k + 1];
        c[k] = v;
    }
    return c;
}

/// Transpose of nodal prolongation, applied level by level down to the
/// coarse mesh size (full nodal coordinates).
inline Eigen::VectorXd prolongation_transpose(const Eigen::VectorXd& fine_full, const Mesh& fine,
                                              const Mesh& coarse) {
    int levels = 0;
    const Mesh* m = &fine;
    while (m->n_nodes() != coarse.n_nodes()) {
        if (!m->parent()) throw std::invalid_argument("prolongation_transpose: meshes not nested");
        m = m->parent().get();
        ++levels;
    }
    Eigen::VectorXd v = fine_full;
    for (int l = 0; l < levels; ++l) v = restrict_transpose_once(v);
    return v;
}

} // namespace detail

/// H^s projection onto the coarse space of a function given by fine free
/// coefficients (nested meshes): solves A_c p = b with b_i = a(v, phi_i^c),
/// the pairing evaluated exactly through the fine stiffness matrix, which
/// carries the same singular-pair quadrature and tail terms as any assembly.
class HsProjector {
public:
    HsProjector(const NonlocalSystem& fine_sys, const NonlocalSystem& coarse_sys)
        : fine_(fine_sys), coarse_(coarse_sys), llt_(coarse_sys.stiffness) {
        if (llt_.info() != Eigen::Success)
            throw std::runtime_error("HsProjector: coarse stiffness not positive definite");
    }

    Eigen::VectorXd apply(const Eigen::VectorXd& v_fine_free) const {
        const Eigen::VectorXd y = scatter_free(fine_.mesh, fine_.stiffness * v_fine_free);
        const Eigen::VectorXd b_full = detail::prolongation_transpose(y, fine_.mesh, coarse_.mesh);
        return llt_.solve(gather_free(coarse_.mesh, b_full));
    }

private:
    const NonlocalSystem& fine_;
    const NonlocalSystem& coarse_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
};

inline Eigen::VectorXd hs_projection(const Eigen::VectorXd& v_fine_free,
                                     const NonlocalSystem& fine_sys,
                                     const NonlocalSystem& coarse_sys) {
    return HsProjector(fine_sys, coarse_sys).apply(v_fine_free);
}

namespace detail {

/// Time-grid relation of a reference/coarse trajectory pair: the coarse step
/// must be an integer multiple of the fine one and both must end at the same
/// time.
inline int time_ratio(const Trajectory& ref, const Trajectory& coarse) {
    if (ref.n_steps() < 1 || coarse.n_steps() < 1)
        throw std::invalid_argument("trajectory comparison needs at least one step");
    const double rho = coarse.tau / ref.tau;
    const int r = static_cast<int>(std::llround(rho));
    if (r < 1 || std::abs(rho - r) > 1e-9 * rho)
        throw std::invalid_argument("coarse time step is not a multiple of the reference step");
    if (std::abs(ref.final_time() - coarse.final_time()) >
        1e-9 * std::max(ref.final_time(), coarse.final_time()))
        throw std::invalid_argument("trajectories cover different time spans");
    if (ref.n_steps() != coarse.n_steps() * r)
        throw std::invalid_argument("trajectory step counts are inconsistent");
    return r;
}

} // namespace detail

/// sup over coarse step ends t_n of the full H^s norm of
/// int_0^{t_n} (w_ref - W) dt, both trajectories taken as their
/// piecewise-constant-in-time reconstructions on the fine mesh.
inline double time_integrated_hs_error(const Trajectory& ref, const Trajectory& coarse,
                                       const NonlocalSystem& fine_sys, const Mesh& coarse_mesh) {
    const int rho = detail::time_ratio(ref, coarse);
    const Mesh& fine_mesh = fine_sys.mesh;
    Eigen::VectorXd running = Eigen::VectorXd::Zero(fine_mesh.n_free());
    double sup = 0.0;
    for (int n = 1; n <= coarse.n_steps(); ++n) {
        for (int k = (n - 1) * rho + 1; k <= n * rho; ++k)
            running += ref.tau * ref.steps[static_cast<std::size_t>(k)];
        running -= coarse.tau * prolong_free(coarse.steps[static_cast<std::size_t>(n)], coarse_mesh, fine_mesh);
        const double sq = hs_seminorm_sq(running, fine_sys) +
                          l2_norm_sq(scatter_free(fine_mesh, running), fine_mesh);
        sup = std::max(sup, sq);
    }
    return std::sqrt(sup);
}

/// int_0^T ||w_ref - W||^2_{(w_ref, p)} dt with p = (m+1)/m, by exact time
/// quadrature of the piecewise-constant reconstructions.
inline double quasi_norm_error_time(const Trajectory& ref, const Trajectory& coarse, double m,
                                    const Mesh& fine_mesh, const Mesh& coarse_mesh,
                                    int quad_order = 4) {
    const int rho = detail::time_ratio(ref, coarse);
    const double p = (m + 1.0) / m;
    double total = 0.0;
    for (int n = 1; n <= coarse.n_steps(); ++n) {
        const Eigen::VectorXd W_full = scatter_free(
            fine_mesh, prolong_free(coarse.steps[static_cast<std::size_t>(n)], coarse_mesh, fine_mesh));
        for (int k = (n - 1) * rho + 1; k <= n * rho; ++k) {
            const Eigen::VectorXd w_full =
                scatter_free(fine_mesh, ref.steps[static_cast<std::size_t>(k)]);
            const double q = quasi_norm(w_full, w_full - W_full, p, fine_mesh, quad_order);
            total += ref.tau * q * q;
        }
    }
    return total;
}

/// Lumped realization of int_0^T (psi(w_ref) - psi(W), w_ref - W) dt on the
/// fine mesh; by the quasi-norm equivalence it should track
/// quasi_norm_error_time within a bounded ratio.
inline double lumped_pairing_error_time(const Trajectory& ref, const Trajectory& coarse,
                                        const NonlocalSystem& fine_sys, const Mesh& coarse_mesh) {
    const int rho = detail::time_ratio(ref, coarse);
    const double m = ref.m;
    const Eigen::VectorXd& M = fine_sys.lumped_mass;
    double total = 0.0;
    for (int n = 1; n <= coarse.n_steps(); ++n) {
        const Eigen::VectorXd W =
            prolong_free(coarse.steps[static_cast<std::size_t>(n)], coarse_mesh, fine_sys.mesh);
        for (int k = (n - 1) * rho + 1; k <= n * rho; ++k) {
            const Eigen::VectorXd& w = ref.steps[static_cast<std::size_t>(k)];
            double slice = 0.0;
            for (int i = 0; i < w.size(); ++i)
                slice += M[i] * (psi(w[i], m) - psi(W[i], m)) * (w[i] - W[i]);
            total += ref.tau * slice;
        }
    }
    return total;
}

/// Space-time L^{m+1} error of u = psi(w_ref) against U = psi(W), pointwise
/// composition at the quadrature nodes.
inline double lmplus1_error(const Trajectory& ref, const Trajectory& coarse, double m,
                            const Mesh& fine_mesh, const Mesh& coarse_mesh, int quad_order = 4) {
    const int rho = detail::time_ratio(ref, coarse);
    const GaussRule& g = GaussRule::get(quad_order);
    double total = 0.0;
    for (int n = 1; n <= coarse.n_steps(); ++n) {
        const Eigen::VectorXd W_full = scatter_free(
            fine_mesh, prolong_free(coarse.steps[static_cast<std::size_t>(n)], coarse_mesh, fine_mesh));
        for (int k = (n - 1) * rho + 1; k <= n * rho; ++k) {
            const Eigen::VectorXd w_full =
                scatter_free(fine_mesh, ref.steps[static_cast<std::size_t>(k)]);
            double slice = 0.0;
            for (int e = 0; e < fine_mesh.n_elements(); ++e) {
                const double x0 = fine_mesh.element_left(e), x1 = fine_mesh.element_right(e);
                if (0.5 * (x0 + x1) <= fine_mesh.domain_a() ||
                    0.5 * (x0 + x1) >= fine_mesh.domain_b())
                    continue;
                const double half = 0.5 * (x1 - x0);
                for (int q = 0; q < g.size(); ++q) {
                    const double t = 0.5 * (1.0 + g.points[static_cast<std::size_t>(q)]);
                    const double wv = (1.0 - t) * w_full[e] + t * w_full[e + 1];
                    const double Wv = (1.0 - t) * W_full[e] + t * W_full[e + 1];
                    slice += half * g.weights[static_cast<std::size_t>(q)] *
                             std::pow(std::abs(psi(wv, m) - psi(Wv, m)), m + 1.0);
                }
            }
            total += ref.tau * slice;
        }
    }
    return std::pow(total, 1.0 / (m + 1.0));
}

struct CeaOutcome {
    bool exact = false;  // reference already lies in the coarse space
    double ratio = 0.0;
};

/// Measured quasi-best-approximation ratio of the nonlinear elliptic
/// discretization: discrete-error energy over interpolation-error energy,
/// both in quasi-norm + H^s seminorm, evaluated on the fine mesh with the
/// nodal interpolant standing in for the infimum.
inline CeaOutcome cea_ratio(const Eigen::VectorXd& v_fine_free,
                            const Eigen::VectorXd& V_coarse_free, const NonlocalSystem& fine_sys,
                            const NonlocalSystem& coarse_sys, double m, int quad_order = 4) {
    const Mesh& fine_mesh = fine_sys.mesh;
    const Mesh& coarse_mesh = coarse_sys.mesh;
    const double p = (m + 1.0) / m;

    const Eigen::VectorXd v_full = scatter_free(fine_mesh, v_fine_free);
    const Eigen::VectorXd V_free_fine = prolong_free(V_coarse_free, coarse_mesh, fine_mesh);
    const Eigen::VectorXd e_free = v_fine_free - V_free_fine;
    const double qe = quasi_norm(v_full, scatter_free(fine_mesh, e_free), p, fine_mesh, quad_order);
    const double num = qe * qe + hs_seminorm_sq(e_free, fine_sys);

    const Eigen::VectorXd interp_coarse = restrict_nodal(v_full, fine_mesh, coarse_mesh);
    const Eigen::VectorXd interp_fine_full = prolongate(interp_coarse, fine_mesh);
    const Eigen::VectorXd d_free = v_fine_free - gather_free(fine_mesh, interp_fine_full);
    const double qd = quasi_norm(v_full, scatter_free(fine_mesh, d_free), p, fine_mesh, quad_order);
    const double den = qd * qd + hs_seminorm_sq(d_free, fine_sys);

    CeaOutcome out;
    if (den == 0.0) {
        out.exact = true;
        return out;
    }
    out.ratio = num / den;
    return out;
}

/// Estimated orders of convergence: eoc_k = log(e_k/e_{k+1}) / log(s_k/s_{k+1}).
inline std::vector<double> estimate_eoc(const std::vector<double>& errors,
                                        const std::vector<double>& steps) {
    if (errors.size() != steps.size() || errors.size() < 2)
        throw std::invalid_argument("estimate_eoc: needs equally sized sequences of length >= 2");
    for (double e : errors)
        if (!(e > 0.0)) throw std::invalid_argument("estimate_eoc: errors must be positive");
    for (std::size_t i = 0; i < steps.size(); ++i)
        if (!(steps[i] > 0.0) || (i > 0 && steps[i] >= steps[i - 1]))
            throw std::invalid_argument("estimate_eoc: steps must be positive and strictly decreasing");
    std::vector<double> eoc;
    eoc.reserve(errors.size() - 1);
    for (std::size_t i = 0; i + 1 < errors.size(); ++i)
        eoc.push_back(std::log(errors[i] / errors[i + 1]) / std::log(steps[i] / steps[i + 1]));
    return eoc;
}

} // namespace fracdiff

#endif
