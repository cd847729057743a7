#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "levyssk/common.hpp"
#include "levyssk/ensemble.hpp"
#include "levyssk/rng.hpp"
#include "levyssk/spectra.hpp"

namespace levyssk {

// All saddle work runs in rescaled coordinates w = z/b_N, mu_i = lambda_i/b_N:
//   G(b_N w) = b_N [ 2 beta w - (1/N) sum log(w - mu_i) ] - b_N log b_N
// so with g(w) := 2 beta w - (1/N) sum log(w - mu_i) we have
//   G^{(k)}(b_N w) b_N^{k-1} = g^{(k)}(w),
// and the additive -log b_N constant is reinstated only when assembling log Z.

struct SaddleContext {
    Spectrum spectrum;
    double beta = 0.0;

    SaddleContext(Spectrum s, double b) : spectrum(std::move(s)), beta(b) {
        if (!(beta > 0.0)) throw std::invalid_argument("SaddleContext: beta must be > 0");
    }
};

enum class Phase { F1, F2 };

inline const char* phase_name(Phase p) { return p == Phase::F1 ? "F1" : "F2"; }

// F1 iff lambda_1 < b_N/(2 beta); the measure-zero tie goes to F2
inline Phase classify_phase(const Spectrum& s, double beta) {
    return s.mu1() < 1.0 / (2.0 * beta) ? Phase::F1 : Phase::F2;
}

// G^{(k)}(b_N w) b_N^{k-1} in rescaled coordinates, k = 0..4
inline std::complex<double> g_value(const SaddleContext& ctx, std::complex<double> w, int k) {
    if (k < 0 || k > 4) throw std::invalid_argument("g_value: k must be in 0..4");
    const auto& mu = ctx.spectrum.mu;
    const double n = static_cast<double>(mu.size());
    for (double m : mu)
        if (w == std::complex<double>(m, 0.0))
            throw std::invalid_argument("g_value: w coincides with an eigenvalue");
    std::complex<double> acc(0.0, 0.0);
    if (k == 0) {
        for (double m : mu) acc += std::log(w - m);
        return 2.0 * ctx.beta * w - acc / n;
    }
    for (double m : mu) acc += std::pow(w - m, -k);
    double fact = 1.0;
    for (int j = 2; j < k; ++j) fact *= j;  // (k-1)!
    const double sign = (k % 2 == 0) ? 1.0 : -1.0;
    std::complex<double> out = sign * fact * acc / n;
    if (k == 1) out += 2.0 * ctx.beta;
    return out;
}

namespace detail {

// The saddle sits at distance O(1/N) from mu_1 while |mu_1| itself can be
// huge, so everything on the real axis is evaluated in gap coordinates
// u = w - mu_1: the pole distances (mu_1 - mu_i) + u keep full double
// resolution where w - mu_i would be quantized by ulp(w).
inline double pole_distance(const std::vector<double>& mu, double gap, std::size_t i) {
    return (mu[0] - mu[i]) + gap;
}
inline double g_prime_gap(const std::vector<double>& mu, double beta, double gap) {
    NeumaierSum s;
    for (std::size_t i = 0; i < mu.size(); ++i) s.add(1.0 / pole_distance(mu, gap, i));
    return 2.0 * beta - s.value() / static_cast<double>(mu.size());
}
inline double g_second_gap(const std::vector<double>& mu, double gap) {
    NeumaierSum s;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const double d = pole_distance(mu, gap, i);
        s.add(1.0 / (d * d));
    }
    return s.value() / static_cast<double>(mu.size());
}
inline double g_zero_gap(const std::vector<double>& mu, double beta, double gap) {
    NeumaierSum s;
    for (std::size_t i = 0; i < mu.size(); ++i) s.add(std::log(pole_distance(mu, gap, i)));
    return 2.0 * beta * (mu[0] + gap) - s.value() / static_cast<double>(mu.size());
}

}  // namespace detail

struct SaddleResult {
    double gamma_over_bn = 0.0;   // w* = gamma / b_N
    double gamma = 0.0;           // raw critical point
    double gap_over_bn = 0.0;     // w* - mu_1, the solver's native coordinate
    double g_at_gamma = 0.0;      // g(w*), the -log b_N constant excluded
    double g2_at_gamma = 0.0;     // g''(w*) = G''(gamma) b_N
    double gprime_at_gamma = 0.0; // signed residual of the solve, |.| <= 1e-10
    Phase phase = Phase::F1;
    double x_n = 0.0;             // N (2 beta gamma / b_N - 1), the F1 statistic
    double stick_gap = 0.0;       // gamma - lambda_1, the F2 statistic
};

// Root of G' on (lambda_1, inf). The bracket
//   [lambda_1 + b_N/(4 beta N), lambda_1 + b_N/beta]
// is analytic: at the lower end the lambda_1 pole alone pushes G' below
// 2beta - 4beta < 0; at the upper end every pole is at distance >= b_N/beta,
// so G' >= 2beta - beta = beta > 0. Bisection safeguards secant steps: Newton
// alone can escape past the pole.
inline SaddleResult solve_gamma(const SaddleContext& ctx) {
    const auto& mu = ctx.spectrum.mu;
    const double beta = ctx.beta;
    const double n = static_cast<double>(mu.size());
    const double mu1 = ctx.spectrum.mu1();

    double lo = 1.0 / (4.0 * beta * n);  // gap coordinates
    double hi = 1.0 / beta;
    double flo = detail::g_prime_gap(mu, beta, lo);
    double fhi = detail::g_prime_gap(mu, beta, hi);
    if (!(flo < 0.0) || !(fhi > 0.0))
        throw numeric_error("solve_gamma: analytic bracket invalid");

    // alternate secant with plain bisection: secant alone degenerates into
    // one-sided false position near the pole and crawls
    double gap = 0.5 * (lo + hi), fgap;
    for (int it = 0;; ++it) {
        double cand = (it % 2 == 0) ? hi - fhi * (hi - lo) / (fhi - flo)
                                    : 0.5 * (lo + hi);
        if (!(cand > lo) || !(cand < hi)) cand = 0.5 * (lo + hi);
        gap = cand;
        fgap = detail::g_prime_gap(mu, beta, gap);
        if (fgap == 0.0) break;
        if (fgap < 0.0) { lo = gap; flo = fgap; } else { hi = gap; fhi = fgap; }
        if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::abs(hi) ||
            it >= 400) {
            gap = 0.5 * (lo + hi);
            fgap = detail::g_prime_gap(mu, beta, gap);
            break;
        }
    }
    if (!(std::abs(fgap) <= 1e-10))
        throw numeric_error("solve_gamma: |G'(gamma)| residual above 1e-10", fgap);

    SaddleResult r;
    r.gamma_over_bn = mu1 + gap;
    r.gamma = r.gamma_over_bn * ctx.spectrum.b_n;
    r.gap_over_bn = gap;
    r.g_at_gamma = detail::g_zero_gap(mu, beta, gap);
    r.g2_at_gamma = detail::g_second_gap(mu, gap);
    r.gprime_at_gamma = fgap;
    r.phase = classify_phase(ctx.spectrum, beta);
    r.x_n = n * (2.0 * beta * r.gamma_over_bn - 1.0);
    r.stick_gap = gap * ctx.spectrum.b_n;
    return r;
}

// log C_N = log Gamma(N/2) + (N/2 - 1) log(b_N / (N beta)) - log(2 pi),
// via lgamma; Gamma(N/2) itself is never materialized
inline double log_c_n(std::int64_t n, double beta, double b_n) {
    if (n < 1) throw std::invalid_argument("log_c_n: N must be >= 1");
    const double half = static_cast<double>(n) / 2.0;
    return std::lgamma(half) + (half - 1.0) * (std::log(b_n) - std::log(static_cast<double>(n) * beta)) -
           std::log(2.0 * std::numbers::pi);
}

enum class LogZMethod { Quadrature, Laplace, SphereMC, BesselN2 };

inline const char* method_name(LogZMethod m) {
    switch (m) {
        case LogZMethod::Quadrature: return "quadrature";
        case LogZMethod::Laplace: return "laplace";
        case LogZMethod::SphereMC: return "sphere_mc";
        case LogZMethod::BesselN2: return "bessel_n2";
    }
    return "?";
}

struct LogZResult {
    double log_z = 0.0;
    LogZMethod method = LogZMethod::Quadrature;
    double error_estimate = 0.0;
};

namespace detail {

// x - atan(x), stable for small x where direct subtraction cancels
inline double x_minus_atan(double x) {
    const double ax = std::abs(x);
    if (ax > 1e-3) return x - std::atan(x);
    const double x2 = x * x;
    return x * x2 * (1.0 / 3.0 - x2 / 5.0 + x2 * x2 / 7.0);
}

}  // namespace detail

// Contour evaluation of
//   log Z = log C_N + (N/(2 b_N)) G(gamma) + log int exp[(N/(2b_N))(G(gamma+it)-G(gamma))] dt.
// Conjugate symmetry folds the integral to 2 Re int_0^inf. In rescaled
// coordinates the integrand splits into an even envelope
//   exp(-1/4 sum log1p((s/d_i)^2)),        d_i = (gamma - lambda_i)/b_N,
// and a stationary phase which, using the saddle condition, reduces to
//   1/2 sum (s/d_i - atan(s/d_i)) + (N/2) g'(w*) s
// with no cancellation between the 2 beta s term and the pole sum. The
// vertical line is followed to T past the stationary bump; the remaining tail
// is either bent 135 degrees into the upper half-plane, where the integrand is
// analytic and decays like exp(-N beta r / sqrt(2)) (exact by Cauchy: the
// closing arc vanishes for every N >= 1), or, when the envelope at T is
// already below 1e-18, bounded analytically via the all-pole decay exponent
// K = sum T^2/(T^2 + d_i^2):  tail <= env(T) * T / (K/2 - 1).
//
// Ray safety: a pole at distance d_i elevates the ray exponent by at most
// (1/4) log 2 near r = (d_i - T) sqrt(1/2), where the 2 beta z decay has
// already spent N beta (d_i - T)/2. Poles with T >= 0.6 d_i never elevate at
// all (|z - mu_i| >= d_i along the ray), so T only has to clear the poles
// inside the horizon d_clear where the decay margin
//   N beta (d_i - T)/2 >= (N/4) log 2 + 45
// is not yet automatic. This keeps T = O(sigma + 1/beta) even when the
// spectrum spans several orders of magnitude.
inline LogZResult log_z_quadrature(const SaddleContext& ctx, const SaddleResult& sr) {
    using gk = boost::math::quadrature::gauss_kronrod<double, 15>;
    const auto& mu = ctx.spectrum.mu;
    const double beta = ctx.beta;
    const double n = static_cast<double>(mu.size());
    const double b_n = ctx.spectrum.b_n;
    const double gap = sr.gap_over_bn;

    std::vector<double> d(mu.size());
    NeumaierSum logd_acc;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        d[i] = detail::pole_distance(mu, gap, i);
        logd_acc.add(std::log(d[i]));
    }
    const double sum_log_d = logd_acc.value();
    const double resid = sr.gprime_at_gamma;
    const double sigma = std::sqrt(2.0 / (n * sr.g2_at_gamma));

    const auto env_exponent = [&](double s) {
        NeumaierSum a;
        for (double di : d) {
            const double x = s / di;
            a.add(std::log1p(x * x));
        }
        return -0.25 * a.value();
    };
    const auto vertical_re = [&](double s) {
        NeumaierSum env, ph;
        for (double di : d) {
            const double x = s / di;
            env.add(std::log1p(x * x));
            ph.add(detail::x_minus_atan(x));
        }
        const double phase = 0.5 * ph.value() + 0.5 * n * resid * s;
        return std::exp(-0.25 * env.value()) * std::cos(phase);
    };

    constexpr double kEnvCutoff = 1e-18;
    double t_end = 12.0 * sigma;
    bool skip_ray = false;
    double tail_bound = 0.0;
    {
        const double d_clear = std::max(t_end + 0.5 / beta + 90.0 / (n * beta),
                                        0.9 / beta + 225.0 / (n * beta));
        double d_near = 0.0;
        for (double di : d)
            if (di <= d_clear) d_near = std::max(d_near, di);

        const auto decay_exponent = [&](double t) {
            double k_sum = 0.0;
            for (double di : d) k_sum += t * t / (t * t + di * di);
            return k_sum;
        };
        double env_t = std::exp(env_exponent(t_end));
        double k_t = decay_exponent(t_end);
        if (!(env_t < kEnvCutoff && k_t > 4.0)) {
            t_end = std::max(t_end, 0.6 * d_near);
            env_t = std::exp(env_exponent(t_end));
            k_t = decay_exponent(t_end);
        }
        if (env_t < kEnvCutoff && k_t > 4.0) {
            skip_ray = true;
            tail_bound = env_t * t_end / (0.5 * k_t - 1.0);
        }
    }

    double err_vert = 0.0;
    const double i_vert =
        gk::integrate(vertical_re, 0.0, t_end, 15, 1e-10, &err_vert);

    double i_ray = 0.0, err_ray = 0.0;
    if (!skip_ray) {
        const std::complex<double> dir = std::polar(1.0, 3.0 * std::numbers::pi / 4.0);
        const auto ray_im = [&](double r) {
            const double xr = r / std::numbers::sqrt2;
            std::complex<double> logs(0.0, 0.0);
            for (double di : d) logs += std::log(std::complex<double>(di - xr, t_end + xr));
            const std::complex<double> expo =
                n * beta * std::complex<double>(-xr, t_end + xr) - 0.5 * (logs - sum_log_d);
            return std::imag(std::exp(expo) * dir);
        };
        // past r_max the global bound exp((N/4)log2 - N beta r/sqrt2) is below
        // e^{-60} of the accumulated mass
        const double r_max = std::numbers::sqrt2 * (0.25 * std::numbers::ln2 / beta) +
                             (60.0 + 45.0) * std::numbers::sqrt2 / (n * beta);
        i_ray = gk::integrate(ray_im, 0.0, r_max, 15, 1e-10, &err_ray);
    }

    const double integral = 2.0 * (i_vert + i_ray);
    const double abs_err = 2.0 * (err_vert + err_ray + tail_bound);
    if (!(integral > 0.0) || !std::isfinite(integral))
        throw numeric_error("log_z_quadrature: contour integral not positive", integral);
    const double rel_err = abs_err / integral;
    const double log_z = log_c_n(ctx.spectrum.n(), beta, b_n) +
                         0.5 * n * (sr.g_at_gamma - std::log(b_n)) + std::log(b_n) +
                         std::log(integral);
    if (!(rel_err <= 1e-6))
        throw numeric_error("log_z_quadrature: panel budget exhausted", log_z);
    return LogZResult{log_z, LogZMethod::Quadrature, rel_err};
}

// Second-order steepest-descent value
//   log C_N + (N/(2 b_N)) G(gamma) + 1/2 log(b_N/N) + 1/2 log(4 pi / G''(gamma)).
// Asymptotically exact in F1, o(N) in F2; no error bar is attached (0), the
// contract is asymptotic only.
inline LogZResult log_z_laplace(const SaddleContext& ctx, const SaddleResult& sr) {
    const double b_n = ctx.spectrum.b_n;
    const double n = static_cast<double>(ctx.spectrum.n());
    if (!(sr.g2_at_gamma > 0.0))
        throw numeric_error("log_z_laplace: G''(gamma) must be positive", sr.g2_at_gamma);
    // G''(gamma) = g''(w*)/b_N, so 4 pi / G'' = 4 pi b_N / g''
    const double log_z = log_c_n(ctx.spectrum.n(), ctx.beta, b_n) +
                         0.5 * n * (sr.g_at_gamma - std::log(b_n)) +
                         0.5 * std::log(b_n / n) +
                         0.5 * std::log(4.0 * std::numbers::pi * b_n / sr.g2_at_gamma);
    return LogZResult{log_z, LogZMethod::Laplace, 0.0};
}

// Plain sphere average: x = sqrt(N) g / |g| with g standard Gaussian, weights
// exp(beta <x, Mx> / b_N) accumulated through a running log-sum-exp so huge
// exponents cannot overflow. error_estimate is the delta-method standard
// error of log of the mean.
inline LogZResult log_z_sphere_mc(const SampledMatrix& m, double beta,
                                  std::int64_t samples, Stream& rng) {
    if (samples < 1) throw std::invalid_argument("log_z_sphere_mc: samples must be >= 1");
    const Eigen::MatrixXd dense = m.dense();
    const double n = static_cast<double>(m.n);
    Eigen::VectorXd g(m.n), tmp(m.n);

    double peak = -std::numeric_limits<double>::infinity();
    double sum_u = 0.0, sum_u2 = 0.0;  // sums of exp(e - peak) and exp(2(e - peak))
    for (std::int64_t j = 0; j < samples; ++j) {
        for (std::int64_t i = 0; i < m.n; ++i) g[i] = rng.gaussian();
        tmp.noalias() = dense * g;
        const double e = beta * n * g.dot(tmp) / (m.b_n * g.squaredNorm());
        if (e > peak) {
            const double shift = std::exp(peak - e);
            sum_u *= shift;
            sum_u2 *= shift * shift;
            peak = e;
        }
        const double u = std::exp(e - peak);
        sum_u += u;
        sum_u2 += u * u;
    }
    const double ns = static_cast<double>(samples);
    const double mean_u = sum_u / ns;
    double se = 0.0;
    if (samples > 1) {
        const double var_u = std::max(0.0, (sum_u2 - sum_u * sum_u / ns) / (ns - 1.0));
        se = std::sqrt(var_u / ns) / mean_u;
    }
    return LogZResult{peak + std::log(mean_u), LogZMethod::SphereMC, se};
}

// order-zero modified Bessel function, log scale; power series up to |x| = 8,
// asymptotic expansion beyond
inline double log_bessel_i0(double x) {
    x = std::abs(x);
    if (x <= 8.0) {
        double term = 1.0, sum = 1.0;
        for (int k = 1; k < 200; ++k) {
            term *= (x * x / 4.0) / (static_cast<double>(k) * k);
            sum += term;
            if (term < 1e-17 * sum) break;
        }
        return std::log(sum);
    }
    double term = 1.0, sum = 1.0;
    for (int k = 1; k < 40; ++k) {
        const double next = term * (2.0 * k - 1.0) * (2.0 * k - 1.0) / (8.0 * k * x);
        if (next >= term) break;  // asymptotic series: stop before divergence
        term = next;
        sum += term;
        if (term < 1e-17 * sum) break;
    }
    return x - 0.5 * std::log(2.0 * std::numbers::pi * x) + std::log(sum);
}

// closed form at N = 2: the sphere integral reduces to
//   log Z = beta (lambda_1 + lambda_2)/b_N + log I_0(beta (lambda_1 - lambda_2)/b_N)
inline LogZResult log_z_bessel_n2(double lambda1, double lambda2, double beta, double b_n) {
    const double log_z = beta * (lambda1 + lambda2) / b_n +
                         log_bessel_i0(beta * (lambda1 - lambda2) / b_n);
    return LogZResult{log_z, LogZMethod::BesselN2, 0.0};
}

// X_N/2 - (N/2) log(1 + X_N/N), the vanishing correction in the F1 decomposition
inline double high_temp_residual(double x_n, std::int64_t n) {
    const double nn = static_cast<double>(n);
    if (!(x_n > -nn))
        throw std::invalid_argument("high_temp_residual: X_N must exceed -N");
    return 0.5 * x_n - 0.5 * nn * std::log1p(x_n / nn);
}

// beta x - 1/2 log(2 e beta x), the low-temperature limit map on (1/(2 beta), inf);
// strictly increasing there, zero at the left edge
inline double low_temp_limit(double x, double beta) {
    if (!(x > 1.0 / (2.0 * beta)))
        throw std::invalid_argument("low_temp_limit: x must exceed 1/(2 beta)");
    return beta * x - 0.5 * (std::log(2.0 * beta * x) + 1.0);
}

}  // namespace levyssk
