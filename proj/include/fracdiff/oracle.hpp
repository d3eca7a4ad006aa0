#ifndef FRACDIFF_ORACLE_HPP
#define FRACDIFF_ORACLE_HPP

#include "fracdiff/kernel.hpp"
#include "fracdiff/mesh.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace fracdiff {

// Brute-force reference assembly. Deliberately shares no quadrature code
// with assemble_stiffness: plain adaptive subdivision in the original (x,z)
// coordinates, with the diagonal singularity integrated out analytically in
// the inner variable, and tails obtained from an exponentially mapped
// adaptive rule. Slow by design; intended for meshes with at most 64 free
// nodes.

namespace oracle_detail {

// Classic tabulated 5-point Gauss-Legendre constants (Abramowitz & Stegun).
inline constexpr double g5x[5] = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                  0.5384693101056831, 0.9061798459386640};
inline constexpr double g5w[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                  0.4786286704993665, 0.2369268850561891};

struct Budget {
    std::int64_t evals = 0;
    std::int64_t limit = 400000000;
    void charge(std::int64_t n) {
        evals += n;
        if (evals > limit)
            throw std::runtime_error("oracle_assemble: tolerance not reached within budget");
    }
};

template <class F>
double tensor5(F&& f, double x0, double x1, double z0, double z1) {
    const double xm = 0.5 * (x0 + x1), xh = 0.5 * (x1 - x0);
    const double zm = 0.5 * (z0 + z1), zh = 0.5 * (z1 - z0);
    double sum = 0.0;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
            sum += g5w[i] * g5w[j] * f(xm + xh * g5x[i], zm + zh * g5x[j]);
    return xh * zh * sum;
}


template <class F>
double simpson_rec(F&& f, double a, double b, double fa, double fm, double fb, double whole,
                   double tol, int depth, Budget& budget) {
    budget.charge(2);
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (std::abs(delta) <= 15.0 * tol || depth >= 48) return left + right + delta / 15.0;
    return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1, budget) +
           simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1, budget);
}

template <class F>
double adaptive_simpson(F&& f, double a, double b, double tol, Budget& budget) {
    if (b <= a) return 0.0;
    budget.charge(3);
    const double fa = f(a), fm = f(0.5 * (a + b)), fb = f(b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson_rec(f, a, b, fa, fm, fb, whole, tol, 0, budget);
}

// Complement integral int_{R \ (A,B)} k(x,z) dz for the fractional kernel,
// via the substitution z = edge -/+ d*e^u which turns the algebraic decay
// into an exponential one; the truncated mapped range carries an e^{-50}
// leftover.
inline double tail_numeric(const Kernel& k, double x, double A, double B, Budget& budget) {
    double total = 0.0;
    for (const double d : {x - A, B - x}) {
        const double span = 50.0 / (2.0 * k.s);
        total += adaptive_simpson(
            [&](double u) {
                const double v = d * std::exp(u);
                return k.radial(v) * v;  // dv = v du
            },
            0.0, span, 1e-14 * std::pow(d, -2.0 * k.s), budget);
    }
    return total;
}

// Inner integral int_K (x-z)^2 k(|x-z|) dz in closed form; used to remove
// the diagonal singularity of identical-element squares before the outer
// adaptive pass.
inline double inner_second_moment(const Kernel& k, double x, double z0, double z1) {
    double dl = x - z0, dr = z1 - x;
    if (k.has_finite_horizon()) {
        dl = std::min(dl, k.epsilon);
        dr = std::min(dr, k.epsilon);
    }
    if (k.kind == KernelKind::constant_ball)
        return k.constant * (dl * dl * dl + dr * dr * dr) / 3.0;
    const double e2 = 2.0 - 2.0 * k.s;
    return k.constant * (std::pow(std::max(dl, 0.0), e2) + std::pow(std::max(dr, 0.0), e2)) / e2;
}

} // namespace oracle_detail

/// Reference stiffness matrix, adaptive to roughly `tolerance` relative
/// accuracy per entry. Pre: at most 64 free nodes. Throws when the
/// subdivision budget is exhausted before reaching the tolerance.
inline Eigen::MatrixXd oracle_assemble(const Mesh& mesh, const Kernel& kernel, double tolerance) {
    if (mesh.n_free() > 64)
        throw std::invalid_argument("oracle_assemble: mesh too large (more than 64 free nodes)");
    if (tolerance <= 0.0) throw std::invalid_argument("oracle_assemble: tolerance must be positive");
    kernel.validate();

    using namespace oracle_detail;
    const int E = mesh.n_elements();
    const int nf = mesh.n_free();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(nf, nf);
    Budget budget;

    auto scatter = [&](int na, int nb, double v) {
        const int fa = mesh.free_index(na), fb = mesh.free_index(nb);
        if (fa < 0 || fb < 0) return;
        A(fa, fb) += v;
        if (fa != fb) A(fb, fa) += v;
    };

    // Identical-element squares first; they dominate the diagonal and set
    // the scale used to distribute absolute tolerances below.
    for (int e = 0; e < E; ++e) {
        const double x0 = mesh.element_left(e), x1 = mesh.element_right(e);
        const double h = x1 - x0;
        const std::array<int, 2> nodes{e, e + 1};
        const std::array<double, 2> slope{-1.0 / h, 1.0 / h};
        if (!mesh.is_free(e) && !mesh.is_free(e + 1)) continue;
        const double base =
            adaptive_simpson([&](double x) { return inner_second_moment(kernel, x, x0, x1); }, x0,
                             x1, 1e-13 * std::pow(h, 2.0 - 2.0 * kernel.s) * kernel.constant * h,
                             budget);
        for (int ia = 0; ia < 2; ++ia)
            for (int ib = ia; ib < 2; ++ib)
                scatter(nodes[static_cast<std::size_t>(ia)], nodes[static_cast<std::size_t>(ib)],
                        slope[static_cast<std::size_t>(ia)] * slope[static_cast<std::size_t>(ib)] * base);
    }

    double scale = 0.0;
    for (int i = 0; i < nf; ++i) scale = std::max(scale, std::abs(A(i, i)));
    if (scale == 0.0) scale = 1.0;
    const double floor_tol = 1e-3 * tolerance * scale / std::max(E, 1);

    // Off-diagonal element squares by nested adaptive interval subdivision,
    // inner in z (with the horizon cut applied exactly to the bounds) and
    // outer in x. The touching-corner singularity is integrable and gets
    // resolved by the recursion concentrating there.
    for (int e = 0; e < E; ++e) {
        for (int f = e + 1; f < E; ++f) {
            const double x0 = mesh.element_left(e), x1 = mesh.element_right(e);
            const double z0 = mesh.element_left(f), z1 = mesh.element_right(f);
            if (kernel.has_finite_horizon() && z0 - x1 >= kernel.epsilon) continue;
            std::array<int, 4> nds{};
            int count = 0;
            for (int n : {e, e + 1, f, f + 1})
                if (count == 0 || nds[static_cast<std::size_t>(count - 1)] != n) nds[static_cast<std::size_t>(count++)] = n;
            for (int ia = 0; ia < count; ++ia) {
                for (int ib = ia; ib < count; ++ib) {
                    const int na = nds[static_cast<std::size_t>(ia)], nb = nds[static_cast<std::size_t>(ib)];
                    if (!mesh.is_free(na) || !mesh.is_free(nb)) continue;
                    auto integrand = [&](double x, double z) {
                        const double r = std::abs(x - z);
                        if (r == 0.0) return 0.0;
                        return (mesh.hat(na, x) - mesh.hat(na, z)) *
                               (mesh.hat(nb, x) - mesh.hat(nb, z)) * kernel.radial(r);
                    };
                    const double probe = std::abs(tensor5(integrand, x0, x1, z0, z1));
                    const double tol = std::max(0.3 * tolerance * probe, floor_tol);
                    const double inner_tol = 0.25 * tol / (x1 - x0);
                    auto slice = [&](double x) {
                        double zlo = z0, zhi = z1;
                        if (kernel.has_finite_horizon()) {
                            zlo = std::max(zlo, x - kernel.epsilon);
                            zhi = std::min(zhi, x + kernel.epsilon);
                        }
                        if (zhi <= zlo) return 0.0;
                        return adaptive_simpson([&](double z) { return integrand(x, z); }, zlo,
                                                zhi, inner_tol, budget);
                    };
                    const double v = adaptive_simpson(slice, x0, x1, 0.5 * tol, budget);
                    // Unordered element pair: the mirrored square contributes equally.
                    scatter(na, nb, 2.0 * v);
                }
            }
        }
    }

    if (kernel.kind == KernelKind::fractional) {
        const double A_ext = mesh.extent_left(), B_ext = mesh.extent_right();
        for (int e = 0; e < E; ++e) {
            const double x0 = mesh.element_left(e), x1 = mesh.element_right(e);
            const std::array<int, 2> nodes{e, e + 1};
            for (int ia = 0; ia < 2; ++ia) {
                for (int ib = ia; ib < 2; ++ib) {
                    const int na = nodes[static_cast<std::size_t>(ia)], nb = nodes[static_cast<std::size_t>(ib)];
                    if (!mesh.is_free(na) || !mesh.is_free(nb)) continue;
                    const double v = adaptive_simpson(
                        [&](double x) {
                            if (x <= A_ext || x >= B_ext) return 0.0;
                            return mesh.hat(na, x) * mesh.hat(nb, x) *
                                   tail_numeric(kernel, x, A_ext, B_ext, budget);
                        },
                        x0, x1, std::max(0.1 * tolerance * scale, floor_tol), budget);
                    scatter(na, nb, 2.0 * v);
                }
            }
        }
    }

    return A;
}

} // namespace fracdiff

#endif
