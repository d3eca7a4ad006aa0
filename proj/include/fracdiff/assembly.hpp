#ifndef FRACDIFF_ASSEMBLY_HPP
#define FRACDIFF_ASSEMBLY_HPP

#include "fracdiff/kernel.hpp"
#include "fracdiff/mesh.hpp"
#include "fracdiff/quadrature.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace fracdiff {

struct AssemblyDiagnostics {
    long identical_pairs = 0;
    long adjacent_pairs = 0;
    long disjoint_pairs = 0;  // handled by tensor Gauss
    long split_pairs = 0;     // disjoint pairs cut by the horizon, relative-coordinate route
    long skipped_pairs = 0;   // entirely beyond the horizon
    double tail_total = 0.0;  // sum of assembled complement-tail contributions
};

/// Stiffness matrix of the nonlocal bilinear form over the free nodes,
/// a(u,v) = iint_{DxD} (u(x)-u(z))(v(x)-v(z)) k(x,z) dz dx, plus, for the
/// pure fractional kernel, the closed-form complement-tail part
/// 2 int_D u v tail(x) dx. Together with the lumped (vertex rule) mass
/// diagonal this is everything a time step needs. Immutable once assembled.
struct NonlocalSystem {
    Eigen::MatrixXd stiffness;
    Eigen::VectorXd lumped_mass;
    Mesh mesh;
    Kernel kernel;
    int quadrature_order = 8;
    AssemblyDiagnostics diagnostics;
};

/// Lumped mass over free nodes: entry i = integral of the hat of node i.
inline Eigen::VectorXd assemble_lumped_mass(const Mesh& mesh) {
    Eigen::VectorXd m(mesh.n_free());
    for (int k = 0; k < mesh.n_free(); ++k) {
        const int i = mesh.free_nodes()[static_cast<std::size_t>(k)];
        m[k] = 0.5 * (mesh.node(i + 1) - mesh.node(i - 1));
    }
    return m;
}

namespace detail {

// Local pair contribution over up to four nodal hats.
struct LocalPair {
    std::array<int, 4> nodes{};
    int count = 0;
    std::array<std::array<double, 4>, 4> value{};

    void add_outer(const std::array<double, 4>& d, double w) {
        for (int a = 0; a < count; ++a)
            for (int b = a; b < count; ++b) value[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] += w * d[static_cast<std::size_t>(a)] * d[static_cast<std::size_t>(b)];
    }
};

inline LocalPair make_local(int e, int f) {
    LocalPair lp;
    lp.nodes[0] = e;
    lp.nodes[1] = e + 1;
    lp.count = 2;
    if (f > e) {
        if (f == e + 1) {
            lp.nodes[2] = f + 1;
            lp.count = 3;
        } else {
            lp.nodes[2] = f;
            lp.nodes[3] = f + 1;
            lp.count = 4;
        }
    }
    return lp;
}

// Identical element pair K x K. The hat differences are slope * (x - z), so
// the double integral collapses to the radial moment
// 2 int_0^{min(h,eps)} (h - r) r^2 k(r) dr, which is elementary.
inline void pair_identical(const Mesh& mesh, const Kernel& k, int e, LocalPair& lp) {
    const double h = mesh.element_length(e);
    const double R = k.has_finite_horizon() ? std::min(h, k.epsilon) : h;
    double moment;
    if (k.kind == KernelKind::constant_ball) {
        moment = 2.0 * k.constant * (h * R * R * R / 3.0 - R * R * R * R / 4.0);
    } else {
        const double e2 = 2.0 - 2.0 * k.s, e3 = 3.0 - 2.0 * k.s;
        moment = 2.0 * k.constant * (h * std::pow(R, e2) / e2 - std::pow(R, e3) / e3);
    }
    const double inv_h = 1.0 / h;
    const std::array<double, 2> slope{-inv_h, inv_h};
    for (int a = 0; a < 2; ++a)
        for (int b = a; b < 2; ++b)
            lp.value[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] +=
                slope[static_cast<std::size_t>(a)] * slope[static_cast<std::size_t>(b)] * moment;
}

// Inner slice integral F_ab(r) = int over {x in Ke, x + r in Kf} of
// (phi_a(x)-phi_a(x+r))(phi_b(x)-phi_b(x+r)) dx. The integrand is quadratic
// in x, so a 3-point Gauss rule is exact.
inline void slice_values(const Mesh& mesh, const LocalPair& lp, double r, double p0, double p1,
                         double q0, double q1, std::array<std::array<double, 4>, 4>& F) {
    for (auto& row : F) row.fill(0.0);
    const double xlo = std::max(p0, q0 - r);
    const double xhi = std::min(p1, q1 - r);
    if (xhi <= xlo) return;
    const GaussRule& g = GaussRule::get(3);
    const double mid = 0.5 * (xlo + xhi), half = 0.5 * (xhi - xlo);
    for (int q = 0; q < g.size(); ++q) {
        const double x = mid + half * g.points[static_cast<std::size_t>(q)];
        const double w = half * g.weights[static_cast<std::size_t>(q)];
        std::array<double, 4> d{};
        for (int a = 0; a < lp.count; ++a)
            d[static_cast<std::size_t>(a)] =
                mesh.hat(lp.nodes[static_cast<std::size_t>(a)], x) - mesh.hat(lp.nodes[static_cast<std::size_t>(a)], x + r);
        for (int a = 0; a < lp.count; ++a)
            for (int b = a; b < lp.count; ++b)
                F[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] += w * d[static_cast<std::size_t>(a)] * d[static_cast<std::size_t>(b)];
    }
}

// Relative-coordinate route for touching pairs and for disjoint pairs cut
// by a finite horizon: a(.,.) restricted to Ke x Kf equals
// int F_ab(r) k(r) dr over the reachable r-range. F is piecewise cubic in r
// with breakpoints where the slice bounds switch. On the first piece of a
// touching pair F = A r^2 + B r^3 exactly (it vanishes to second order at
// r = 0), so that piece integrates against the singular kernel in closed
// form; the remaining pieces use geometrically graded Gauss panels.
inline void pair_relative(const Mesh& mesh, const Kernel& k, int e, int f, int order,
                          LocalPair& lp) {
    const double p0 = mesh.element_left(e), p1 = mesh.element_right(e);
    const double q0 = mesh.element_left(f), q1 = mesh.element_right(f);
    const double r_lo = std::max(0.0, q0 - p1);
    double r_hi = q1 - p0;
    if (k.has_finite_horizon()) r_hi = std::min(r_hi, k.epsilon);
    if (r_hi <= r_lo) return;

    std::vector<double> cuts{r_lo};
    for (double c : {q0 - p0, q1 - p1})
        if (c > r_lo + 1e-15 && c < r_hi - 1e-15) cuts.push_back(c);
    cuts.push_back(r_hi);
    std::sort(cuts.begin(), cuts.end());

    std::array<std::array<double, 4>, 4> F{};
    std::size_t first = 0;
    if (r_lo == 0.0) {
        const double r1 = cuts[1];
        if (k.singular_at_zero()) {
            std::array<std::array<double, 4>, 4> Fa{}, Fh{};
            slice_values(mesh, lp, r1, p0, p1, q0, q1, Fa);
            slice_values(mesh, lp, 0.5 * r1, p0, p1, q0, q1, Fh);
            const double e2 = 2.0 - 2.0 * k.s, e3 = 3.0 - 2.0 * k.s;
            const double w2 = k.constant * std::pow(r1, e2) / e2;
            const double w3 = k.constant * std::pow(r1, e3) / e3;
            for (int a = 0; a < lp.count; ++a)
                for (int b = a; b < lp.count; ++b) {
                    const double FA = Fa[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
                    const double FH = Fh[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
                    const double A = (8.0 * FH - FA) / (r1 * r1);
                    const double B = (2.0 * FA - 8.0 * FH) / (r1 * r1 * r1);
                    lp.value[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] += A * w2 + B * w3;
                }
        } else {
            // Bounded kernel: the integrand is polynomial on (0, r1).
            const GaussRule& g = GaussRule::get(order);
            for (int q = 0; q < g.size(); ++q) {
                const double r = 0.5 * r1 * (1.0 + g.points[static_cast<std::size_t>(q)]);
                const double w = 0.5 * r1 * g.weights[static_cast<std::size_t>(q)];
                slice_values(mesh, lp, r, p0, p1, q0, q1, F);
                const double kw = w * k.radial(r);
                for (int a = 0; a < lp.count; ++a)
                    for (int b = a; b < lp.count; ++b)
                        lp.value[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] +=
                            kw * F[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
            }
        }
        first = 1;
    }

    const GaussRule& g = GaussRule::get(order);
    for (std::size_t piece = first; piece + 1 < cuts.size(); ++piece) {
        const std::vector<double> panels = geometric_panels(cuts[piece], cuts[piece + 1]);
        for (std::size_t p = 0; p + 1 < panels.size(); ++p) {
            const double mid = 0.5 * (panels[p] + panels[p + 1]);
            const double half = 0.5 * (panels[p + 1] - panels[p]);
            for (int q = 0; q < g.size(); ++q) {
                const double r = mid + half * g.points[static_cast<std::size_t>(q)];
                const double w = half * g.weights[static_cast<std::size_t>(q)];
                slice_values(mesh, lp, r, p0, p1, q0, q1, F);
                const double kw = w * k.radial(r);
                for (int a = 0; a < lp.count; ++a)
                    for (int b = a; b < lp.count; ++b)
                        lp.value[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] +=
                            kw * F[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
            }
        }
    }
}

// Tensor Gauss-Legendre for well-separated pairs with a smooth kernel on
// Ke x Kf.
inline void pair_tensor(const Mesh& mesh, const Kernel& k, int e, int f, int order,
                        LocalPair& lp) {
    const GaussRule& g = GaussRule::get(order);
    const double x0 = mesh.element_left(e), x1 = mesh.element_right(e);
    const double z0 = mesh.element_left(f), z1 = mesh.element_right(f);
    const double xm = 0.5 * (x0 + x1), xh = 0.5 * (x1 - x0);
    const double zm = 0.5 * (z0 + z1), zh = 0.5 * (z1 - z0);
    for (int qx = 0; qx < g.size(); ++qx) {
        const double x = xm + xh * g.points[static_cast<std::size_t>(qx)];
        const double wx = xh * g.weights[static_cast<std::size_t>(qx)];
        std::array<double, 4> hx{};
        for (int a = 0; a < lp.count; ++a) hx[static_cast<std::size_t>(a)] = mesh.hat(lp.nodes[static_cast<std::size_t>(a)], x);
        for (int qz = 0; qz < g.size(); ++qz) {
            const double z = zm + zh * g.points[static_cast<std::size_t>(qz)];
            const double w = wx * zh * g.weights[static_cast<std::size_t>(qz)];
            const double kv = k.radial(std::abs(x - z));
            std::array<double, 4> d{};
            for (int a = 0; a < lp.count; ++a)
                d[static_cast<std::size_t>(a)] = hx[static_cast<std::size_t>(a)] - mesh.hat(lp.nodes[static_cast<std::size_t>(a)], z);
            lp.add_outer(d, w * kv);
        }
    }
}

// Complement-tail contribution for the pure fractional kernel:
// 2 int_K phi_a phi_b tail(x) dx per element. The tail factor is singular at
// the ends of the meshed region; on the touching elements only hats that
// vanish there can be free, so the surviving integrand reduces to an exact
// power moment. Elsewhere plain Gauss applies.
inline double tail_element_side(const Mesh& mesh, const Kernel& k, int e, int na, int nb,
                                bool left_side, int order) {
    const double x0 = mesh.element_left(e), x1 = mesh.element_right(e);
    const double h = x1 - x0;
    const double edge = left_side ? mesh.extent_left() : mesh.extent_right();
    const double twos = 2.0 * k.s;
    const bool touches = left_side ? (e == 0) : (e == mesh.n_elements() - 1);
    if (touches) {
        // phi_a, phi_b vanish at the touching end; product = c2 * t^2 with
        // t the distance to it.
        const double sa = 1.0 / h, sb = 1.0 / h;
        const double c2 = sa * sb;
        return c2 * std::pow(h, 3.0 - twos) / (3.0 - twos);
    }
    return gauss_integrate(
        [&](double x) {
            const double dist = left_side ? (x - edge) : (edge - x);
            return mesh.hat(na, x) * mesh.hat(nb, x) * std::pow(dist, -twos);
        },
        x0, x1, order);
}

inline void add_tail_terms(const Mesh& mesh, const Kernel& k, int order, Eigen::MatrixXd& A,
                           AssemblyDiagnostics& diag) {
    const double factor = 2.0 * k.constant / (2.0 * k.s);
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const std::array<int, 2> nodes{e, e + 1};
        for (int ia = 0; ia < 2; ++ia) {
            const int na = nodes[static_cast<std::size_t>(ia)];
            if (!mesh.is_free(na)) continue;
            for (int ib = ia; ib < 2; ++ib) {
                const int nb = nodes[static_cast<std::size_t>(ib)];
                if (!mesh.is_free(nb)) continue;
                const double v = factor * (tail_element_side(mesh, k, e, na, nb, true, order) +
                                           tail_element_side(mesh, k, e, na, nb, false, order));
                const int fa = mesh.free_index(na), fb = mesh.free_index(nb);
                A(fa, fb) += v;
                if (fa != fb) A(fb, fa) += v;
                diag.tail_total += (fa != fb ? 2.0 : 1.0) * v;
            }
        }
    }
}

} // namespace detail

/// Assemble the nonlocal system for the given mesh and kernel. Pair classes:
/// identical pairs reduce to an exact radial moment, touching pairs use the
/// singularity-removing relative-coordinate rule, disjoint pairs use tensor
/// Gauss of the given order (or the relative-coordinate rule when a finite
/// horizon cuts through the pair). Deterministic: fixed pair order, single
/// thread.
inline NonlocalSystem assemble_stiffness(const Mesh& mesh, const Kernel& kernel,
                                         int quadrature_order = 8) {
    if (quadrature_order < 2)
        throw std::invalid_argument("assemble_stiffness: quadrature_order must be >= 2");
    kernel.validate();
    if (kernel.has_finite_horizon()) {
        const double diam = mesh.extent_right() - mesh.extent_left();
        const double tol = 1e-12 * diam;
        if (mesh.collar_width() + tol < kernel.epsilon && kernel.epsilon + tol < diam)
            throw std::invalid_argument(
                "assemble_stiffness: truncated kernel requires collar_width >= epsilon");
    }

    const int E = mesh.n_elements();
    const int nf = mesh.n_free();
    NonlocalSystem sys{Eigen::MatrixXd::Zero(nf, nf), assemble_lumped_mass(mesh), mesh, kernel,
                       quadrature_order, {}};
    Eigen::MatrixXd& A = sys.stiffness;
    AssemblyDiagnostics& diag = sys.diagnostics;

    for (int e = 0; e < E; ++e) {
        for (int f = e; f < E; ++f) {
            detail::LocalPair lp = detail::make_local(e, f);
            bool any_free = false;
            for (int a = 0; a < lp.count; ++a) any_free |= mesh.is_free(lp.nodes[static_cast<std::size_t>(a)]);
            if (!any_free) continue;

            const double gap = mesh.element_left(f) - mesh.element_right(e);
            if (kernel.has_finite_horizon() && gap >= kernel.epsilon) {
                ++diag.skipped_pairs;
                continue;
            }

            if (f == e) {
                detail::pair_identical(mesh, kernel, e, lp);
                ++diag.identical_pairs;
            } else if (f == e + 1) {
                detail::pair_relative(mesh, kernel, e, f, quadrature_order, lp);
                ++diag.adjacent_pairs;
            } else if (kernel.has_finite_horizon() &&
                       mesh.element_right(f) - mesh.element_left(e) > kernel.epsilon) {
                detail::pair_relative(mesh, kernel, e, f, quadrature_order, lp);
                ++diag.split_pairs;
            } else {
                detail::pair_tensor(mesh, kernel, e, f, quadrature_order, lp);
                ++diag.disjoint_pairs;
            }

            const double factor = (f == e) ? 1.0 : 2.0;
            for (int a = 0; a < lp.count; ++a) {
                const int fa = mesh.free_index(lp.nodes[static_cast<std::size_t>(a)]);
                if (fa < 0) continue;
                for (int b = a; b < lp.count; ++b) {
                    const int fb = mesh.free_index(lp.nodes[static_cast<std::size_t>(b)]);
                    if (fb < 0) continue;
                    const double v = factor * lp.value[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
                    A(fa, fb) += v;
                    if (fa != fb) A(fb, fa) += v;
                }
            }
        }
    }

    if (kernel.kind == KernelKind::fractional)
        detail::add_tail_terms(mesh, kernel, quadrature_order, A, diag);

    if (!A.allFinite())
        throw std::runtime_error("assemble_stiffness: non-finite entry (quadrature blow-up)");
    return sys;
}

/// Coordinate text dump: header "symmetric <n>", then the lower triangle as
/// "i j value" lines with 17 significant digits.
inline void dump_matrix(const Eigen::MatrixXd& A, std::ostream& out) {
    out << "symmetric " << A.rows() << '\n';
    char buf[64];
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j <= i; ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", A(i, j));
            out << i << ' ' << j << ' ' << buf << '\n';
        }
}

} // namespace fracdiff

#endif
