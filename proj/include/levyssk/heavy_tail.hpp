#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "levyssk/common.hpp"
#include "levyssk/rng.hpp"

namespace levyssk {

enum class SlowVariation { Const, PolyLog };

// Heavy-tailed law P(|X| > u) = L(u) u^{-alpha}, alpha in (0,2).
//   Const:   L = 1, so tail(u) = min(1, u^{-alpha}) with support edge u0 = 1.
//   PolyLog: L(u) = (log(e*max(u,1)))^p, restricted to where the tail is
//            nonincreasing; u0 is located numerically when p > alpha.
// theta is the right-tail weight lim P(X>x)/P(|X|>x); magnitude and sign are
// drawn independently. Immutable after construction, safe to share.
class TailLaw {
public:
    static TailLaw pareto(double alpha, double theta = 0.5) {
        return TailLaw(alpha, SlowVariation::Const, 0.0, theta);
    }
    static TailLaw poly_log(double alpha, double p, double theta = 0.5) {
        return TailLaw(alpha, SlowVariation::PolyLog, p, theta);
    }

    double alpha() const { return alpha_; }
    SlowVariation kind() const { return kind_; }
    double log_power() const { return p_; }
    double theta() const { return theta_; }
    double u0() const { return u0_; }

    // P(|X| > u); 1 for u <= u0, strictly decreasing beyond
    double tail(double u) const {
        if (!(u >= 0.0)) throw std::invalid_argument("tail: u must be >= 0");
        if (u <= u0_) return 1.0;
        return std::min(1.0, raw_tail(u));
    }

    // generalized inverse inf{u >= u0 : tail(u) <= q}; q = 1 maps to u0
    double quantile(double q) const {
        if (!(q > 0.0) || !(q <= 1.0))
            throw std::invalid_argument("quantile: q must be in (0, 1]");
        if (kind_ == SlowVariation::Const) return std::pow(q, -1.0 / alpha_);
        if (q >= 1.0) return u0_;
        double lo = u0_, hi = std::max(2.0 * u0_, std::pow(q, -1.0 / alpha_));
        while (tail(hi) > q) {
            lo = hi;
            hi *= 4.0;
            if (hi > 1e300) throw numeric_error("quantile: bracket growth failed");
        }
        for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
            const double mid = 0.5 * (lo + hi);
            (tail(mid) <= q ? hi : lo) = mid;
        }
        return hi;  // tail(hi) <= q by construction
    }

    // inverse transform: |X| = quantile(U), sign + with probability theta
    double sample(Stream& rng) const {
        const double mag = quantile(rng.uniform01());
        const double s = rng.uniform01();
        return s <= theta_ ? mag : -mag;
    }

private:
    TailLaw(double alpha, SlowVariation kind, double p, double theta)
        : alpha_(alpha), kind_(kind), p_(p), theta_(theta) {
        if (!(alpha > 0.0) || !(alpha < 2.0))
            throw std::invalid_argument("TailLaw: alpha must lie strictly in (0, 2)");
        if (!(theta >= 0.0) || !(theta <= 1.0))
            throw std::invalid_argument("TailLaw: theta must lie in [0, 1]");
        if (!std::isfinite(p))
            throw std::invalid_argument("TailLaw: log exponent p must be finite");
        u0_ = locate_u0();
        check_monotone();
    }

    // L(u) u^{-alpha} without the min(1, .) clamp, valid for u >= 1
    double raw_tail(double u) const {
        if (kind_ == SlowVariation::Const) return std::pow(u, -alpha_);
        const double lg = std::log(u) + 1.0;  // log(e*u), u >= 1
        return std::pow(lg, p_) * std::pow(u, -alpha_);
    }

    double locate_u0() const {
        if (kind_ == SlowVariation::Const || p_ <= alpha_) return 1.0;
        // raw tail rises until log(e*u) = p/alpha, then decreases; the edge is
        // where it falls back through 1
        double lo = std::exp(p_ / alpha_ - 1.0), hi = 2.0 * lo;
        while (raw_tail(hi) > 1.0) hi *= 4.0;
        for (int it = 0; it < 200 && hi - lo > 1e-14 * hi; ++it) {
            const double mid = 0.5 * (lo + hi);
            (raw_tail(mid) <= 1.0 ? hi : lo) = mid;
        }
        return hi;
    }

    // numeric asserts from the law's definition: tail nonincreasing beyond u0,
    // and L(x) e^{x^delta} eventually increasing (the definition only asks for
    // monotonicity beyond some x_0; checked at delta = 0.1 on a log grid)
    void check_monotone() const {
        constexpr int kPoints = 240;
        double prev_tail = 1.0 + 1e-15;
        double lx[kPoints + 1];
        const double delta = 0.1;
        for (int k = 0; k <= kPoints; ++k) {
            const double u = u0_ * std::pow(10.0, k / 40.0);
            const double t = tail(u);
            if (t > prev_tail * (1.0 + 1e-12))
                throw std::invalid_argument("TailLaw: tail not nonincreasing beyond u0");
            prev_tail = t;
            const double log_l = (kind_ == SlowVariation::Const)
                                     ? 0.0
                                     : p_ * std::log(std::log(u) + 1.0);
            lx[k] = log_l + std::pow(u, delta);
        }
        int argmin = 0;
        for (int k = 1; k <= kPoints; ++k)
            if (lx[k] < lx[argmin]) argmin = k;
        if (argmin > (kPoints * 4) / 5)
            throw std::invalid_argument("TailLaw: L(x) exp(x^delta) not eventually increasing");
        for (int k = argmin + 1; k <= kPoints; ++k)
            if (lx[k] < lx[k - 1])
                throw std::invalid_argument("TailLaw: L(x) exp(x^delta) not eventually increasing");
    }

    friend double truncated_abs_mean(const TailLaw&, double);

    double alpha_;
    SlowVariation kind_;
    double p_;
    double theta_;
    double u0_;
};

// E[|X| 1(|X| <= a)] = int_0^a tail(u) du - a*tail(a); closed form for Const,
// adaptive quadrature (rel tol 1e-8) otherwise
inline double truncated_abs_mean(const TailLaw& law, double a) {
    if (!(a >= 0.0)) throw std::invalid_argument("truncated_abs_mean: a must be >= 0");
    if (a <= law.u0()) return 0.0;  // |X| >= u0 almost surely
    double integral = law.u0();     // tail = 1 on [0, u0]
    if (law.kind() == SlowVariation::Const) {
        const double al = law.alpha();
        integral += (al == 1.0) ? std::log(a)
                                : (std::pow(a, 1.0 - al) - 1.0) / (1.0 - al);
    } else {
        double err = 0.0;
        integral += boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
            [&](double u) { return law.tail(u); }, law.u0(), a, 12, 1e-8, &err);
    }
    return integral - a * law.tail(a);
}

// Normalizing sequences of the law at size N:
//   b_N = inf{t : P(|X|>t) <= 2/(N(N+1))}   (matrix scale)
//   a_N = inf{t : P(|X|>t) <= 1/N}          (row-sum scale)
//   c_N = N E[X 1(|X| <= a_N)]              (centering)
struct Normalizers {
    double b_n;
    double a_n;
    double c_n;
};

inline Normalizers normalizers(const TailLaw& law, std::int64_t n) {
    if (n < 1) throw std::invalid_argument("normalizers: N must be >= 1");
    const double nn = static_cast<double>(n);
    Normalizers out;
    out.b_n = law.quantile(2.0 / (nn * (nn + 1.0)));
    out.a_n = law.quantile(1.0 / nn);
    const double skew = 2.0 * law.theta() - 1.0;
    out.c_n = (skew == 0.0) ? 0.0 : nn * skew * truncated_abs_mean(law, out.a_n);
    return out;
}

// Frechet distribution function exp(-x^{-alpha}), the limit law of lambda_1/b_N
inline double frechet_cdf(double alpha, double x) {
    if (x <= 0.0) return 0.0;
    return std::exp(-std::pow(x, -alpha));
}

// Tail of the low-temperature limit variable X, supported on (1/(2beta), inf):
// P(X > u) = (1 - exp(-u^{-alpha})) / (1 - exp(-(2beta)^alpha))
inline double conditional_x_tail(double alpha, double beta, double u) {
    if (!(u > 1.0 / (2.0 * beta)))
        throw std::invalid_argument("conditional_x_tail: u must exceed 1/(2 beta)");
    return std::expm1(-std::pow(u, -alpha)) / std::expm1(-std::pow(2.0 * beta, alpha));
}

// inverse of conditional_x_tail in its second argument, for pushforward sampling
inline double conditional_x_quantile(double alpha, double beta, double q) {
    if (!(q > 0.0 && q <= 1.0))
        throw std::invalid_argument("conditional_x_quantile: q must be in (0, 1]");
    const double z = q * std::expm1(-std::pow(2.0 * beta, alpha));
    return std::pow(-std::log1p(z), -1.0 / alpha);
}

}  // namespace levyssk
