#ifndef FRACDIFF_QUADRATURE_HPP
#define FRACDIFF_QUADRATURE_HPP

#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace fracdiff {

/// Gauss-Legendre rule with n points on [-1,1]; exact for polynomials of
/// degree 2n-1. Nodes are computed by Newton iteration on the Legendre
/// recurrence and cached per order.
struct GaussRule {
    std::vector<double> points;
    std::vector<double> weights;

    explicit GaussRule(int n) {
        if (n < 1) throw std::invalid_argument("GaussRule: order must be >= 1");
        points.resize(static_cast<std::size_t>(n));
        weights.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < (n + 1) / 2; ++i) {
            // Chebyshev-based initial guess, then Newton on P_n.
            double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
            double dp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = x;
                for (int k = 2; k <= n; ++k) {
                    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (x * p1 - p0) / (x * x - 1.0);
                const double dx = p1 / dp;
                x -= dx;
                if (std::abs(dx) < 1e-15) break;
            }
            points[static_cast<std::size_t>(i)] = -x;
            points[static_cast<std::size_t>(n - 1 - i)] = x;
            const double w = 2.0 / ((1.0 - x * x) * dp * dp);
            weights[static_cast<std::size_t>(i)] = w;
            weights[static_cast<std::size_t>(n - 1 - i)] = w;
        }
        if (n % 2 == 1) points[static_cast<std::size_t>(n / 2)] = 0.0;
    }

    static const GaussRule& get(int n) {
        static std::map<int, GaussRule> cache;
        auto it = cache.find(n);
        if (it == cache.end()) it = cache.emplace(n, GaussRule(n)).first;
        return it->second;
    }

    int size() const { return static_cast<int>(points.size()); }
};

/// Integrate f over [a,b] with an n-point Gauss rule.
template <class F>
double gauss_integrate(F&& f, double a, double b, int n) {
    const GaussRule& rule = GaussRule::get(n);
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double sum = 0.0;
    for (int q = 0; q < rule.size(); ++q)
        sum += rule.weights[static_cast<std::size_t>(q)] *
               f(mid + half * rule.points[static_cast<std::size_t>(q)]);
    return half * sum;
}

/// Panel edges subdividing [r0,r1] (0 < r0 < r1) geometrically relative to
/// the origin, so that each panel is at most as wide as its distance from
/// zero. Smooth integrands with a power singularity at zero are then
/// resolved to near machine precision by a fixed-order Gauss rule per panel.
inline std::vector<double> geometric_panels(double r0, double r1) {
    std::vector<double> edges{r0};
    double e = r0;
    while (e < r1) {
        e = std::min(2.0 * e, r1);
        edges.push_back(e);
    }
    return edges;
}

} // namespace fracdiff

#endif
