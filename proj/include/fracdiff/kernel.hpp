#ifndef FRACDIFF_KERNEL_HPP
#define FRACDIFF_KERNEL_HPP

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace fracdiff {

enum class KernelKind { fractional, truncated_fractional, constant_ball };

inline const char* to_string(KernelKind k) {
    switch (k) {
        case KernelKind::fractional: return "fractional";
        case KernelKind::truncated_fractional: return "truncated_fractional";
        case KernelKind::constant_ball: return "constant_ball";
    }
    return "?";
}

/// Symmetric nonnegative interaction kernel in one dimension. The
/// fractional kind is constant * |x-z|^{-(1+2s)}; the truncated kind is the
/// same inside the horizon epsilon and zero beyond; constant_ball is a flat
/// constant inside the horizon. Immutable value object.
struct Kernel {
    KernelKind kind = KernelKind::fractional;
    double s = 0.5;          // fractional exponent, in (0,1)
    double epsilon = 0.0;    // horizon; only truncated_fractional / constant_ball
    double constant = 1.0;   // multiplicative constant

    static Kernel fractional(double s, double constant = 1.0) {
        Kernel k{KernelKind::fractional, s, 0.0, constant};
        k.validate();
        return k;
    }
    static Kernel truncated(double s, double epsilon, double constant = 1.0) {
        Kernel k{KernelKind::truncated_fractional, s, epsilon, constant};
        k.validate();
        return k;
    }
    static Kernel constant_ball(double epsilon, double constant = 1.0) {
        Kernel k{KernelKind::constant_ball, 0.0, epsilon, constant};
        k.validate();
        return k;
    }

    void validate() const {
        if (kind != KernelKind::constant_ball && (s <= 0.0 || s >= 1.0))
            throw std::invalid_argument("kernel: s must lie in (0,1)");
        if (kind != KernelKind::fractional && epsilon <= 0.0)
            throw std::invalid_argument("kernel: horizon epsilon must be positive");
        if (constant <= 0.0) throw std::invalid_argument("kernel: constant must be positive");
    }

    bool has_finite_horizon() const { return kind != KernelKind::fractional; }
    /// Singular r -> 0 behaviour (power kernels) vs. bounded near zero.
    bool singular_at_zero() const { return kind != KernelKind::constant_ball; }

    /// Radial profile k(r) for r = |x - z| > 0, horizon cut included.
    double radial(double r) const {
        if (has_finite_horizon() && r > epsilon) return 0.0;
        if (kind == KernelKind::constant_ball) return constant;
        return constant * std::pow(r, -(1.0 + 2.0 * s));
    }
};

/// Pointwise kernel value; the diagonal x = z is a misuse (quadrature must
/// never sample it) and throws.
inline double eval_kernel(const Kernel& k, double x, double z) {
    if (x == z) throw std::invalid_argument("eval_kernel: singular evaluation at x == z");
    return k.radial(std::abs(x - z));
}

/// Integral of the kernel over the complement of (a,b), for a < x < b.
/// Closed form; for finite-horizon kernels it vanishes as soon as x is at
/// least epsilon away from the complement.
inline double tail_integral(const Kernel& k, double x, double a, double b) {
    if (!(x > a && x < b)) throw std::invalid_argument("tail_integral: x outside (a,b)");
    const double dl = x - a, dr = b - x;
    switch (k.kind) {
        case KernelKind::fractional: {
            const double e = 2.0 * k.s;
            return k.constant / e * (std::pow(dl, -e) + std::pow(dr, -e));
        }
        case KernelKind::truncated_fractional: {
            const double e = 2.0 * k.s;
            const double cut = std::pow(k.epsilon, -e);
            double t = 0.0;
            if (dl < k.epsilon) t += std::pow(dl, -e) - cut;
            if (dr < k.epsilon) t += std::pow(dr, -e) - cut;
            return k.constant / e * t;
        }
        case KernelKind::constant_ball: {
            double t = 0.0;
            if (dl < k.epsilon) t += k.epsilon - dl;
            if (dr < k.epsilon) t += k.epsilon - dr;
            return k.constant * t;
        }
    }
    return 0.0;
}

/// Standard 1D normalization constant of the fractional Laplacian,
/// 4^s * s * Gamma(s + 1/2) / (sqrt(pi) * Gamma(1 - s)). Offered as an
/// opt-in preset for Kernel::constant; the default constant stays 1.
inline double normalization_constant(double s) {
    if (s <= 0.0 || s >= 1.0)
        throw std::invalid_argument("normalization_constant: s must lie in (0,1)");
    return std::pow(4.0, s) * s * std::tgamma(s + 0.5) /
           (std::sqrt(std::numbers::pi) * std::tgamma(1.0 - s));
}

} // namespace fracdiff

#endif
