#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "levyssk/common.hpp"
#include "levyssk/ensemble.hpp"

namespace levyssk {

// Eigenvalues of one matrix, sorted descending, plus the rescaled values
// mu_i = lambda_i / b_N. Everything downstream of the eigensolver works on mu:
// raw lambda can reach 1e9+ for small alpha and would wreck additive
// tolerances in the free-energy code.
struct Spectrum {
    std::vector<double> eigs;  // lambda_1 >= ... >= lambda_N
    std::vector<double> mu;    // eigs / b_n
    double b_n = 1.0;

    std::int64_t n() const { return static_cast<std::int64_t>(eigs.size()); }
    double lambda1() const { return eigs.front(); }
    double lambdan() const { return eigs.back(); }
    double mu1() const { return mu.front(); }
};

inline Spectrum spectrum_from_eigs(std::vector<double> eigs, double b_n) {
    if (eigs.empty()) throw std::invalid_argument("spectrum_from_eigs: empty spectrum");
    if (!(b_n > 0.0)) throw std::invalid_argument("spectrum_from_eigs: b_N must be > 0");
    std::sort(eigs.begin(), eigs.end(), std::greater<>());
    Spectrum s;
    s.eigs = std::move(eigs);
    s.b_n = b_n;
    s.mu.resize(s.eigs.size());
    for (std::size_t i = 0; i < s.eigs.size(); ++i) s.mu[i] = s.eigs[i] / b_n;
    return s;
}

// Values-only dense symmetric eigendecomposition. The trace and Frobenius
// identities sum(lambda) = Tr M and sum(lambda^2) = sum M_ij^2 are enforced
// here on every call (relative 1e-8 of the Frobenius scale).
inline Spectrum eigen_decompose(const SampledMatrix& m) {
    for (double x : m.upper)
        if (!std::isfinite(x))
            throw std::invalid_argument("eigen_decompose: non-finite matrix entry");

    Eigen::MatrixXd dense = m.dense();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(dense, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
        throw numeric_error("eigen_decompose: eigensolver did not converge");

    std::vector<double> eigs(solver.eigenvalues().data(),
                             solver.eigenvalues().data() + m.n);
    std::reverse(eigs.begin(), eigs.end());  // Eigen returns ascending

    const double frob = m.frobenius_sq();
    const double scale = std::sqrt(frob);
    NeumaierSum sum1, sum2;
    for (double l : eigs) { sum1.add(l); sum2.add(l * l); }
    if (std::abs(sum1.value() - m.trace()) > 1e-8 * std::max(scale, 1e-300))
        throw numeric_error("eigen_decompose: trace identity violated",
                            sum1.value() - m.trace());
    if (std::abs(sum2.value() - frob) > 1e-8 * std::max(frob, 1e-300))
        throw numeric_error("eigen_decompose: Frobenius identity violated",
                            sum2.value() - frob);
    return spectrum_from_eigs(std::move(eigs), m.b_n);
}

struct SpectrumSummary {
    double lambda1 = 0.0, lambda2 = 0.0, lambdan = 0.0;
    double trace_over_bn = 0.0;   // sum lambda_i / b_N
    double sumsq_over_bn2 = 0.0;  // sum lambda_i^2 / b_N^2
    double gap_over_bn = 0.0;     // (lambda_1 - lambda_2) / b_N
    double gamma_abs = 0.0;       // max(|lambda_1|, |lambda_N|)
};

inline SpectrumSummary summarize(const Spectrum& s) {
    SpectrumSummary out;
    out.lambda1 = s.eigs.front();
    out.lambda2 = s.n() > 1 ? s.eigs[1] : s.eigs[0];
    out.lambdan = s.eigs.back();
    NeumaierSum tr, sq;
    for (double m : s.mu) { tr.add(m); sq.add(m * m); }
    out.trace_over_bn = tr.value();
    out.sumsq_over_bn2 = sq.value();
    out.gap_over_bn = (out.lambda1 - out.lambda2) / s.b_n;
    out.gamma_abs = std::max(std::abs(out.lambda1), std::abs(out.lambdan));
    return out;
}

// #{ i : |lambda_i| > b_N N^{-eps} }
inline std::int64_t big_count(const Spectrum& s, double eps) {
    const double thr = std::pow(static_cast<double>(s.n()), -eps);
    std::int64_t count = 0;
    for (double m : s.mu)
        if (std::abs(m) > thr) ++count;
    return count;
}

// T_N = -sum_i log(1 - lambda_i/gamma), gamma > lambda_1 so every factor is
// positive; evaluated as -sum log1p(-mu_i/w) with w = gamma/b_N
inline double log_statistic_T(const Spectrum& s, double gamma) {
    const double w = gamma / s.b_n;
    if (!(w > s.mu1()))
        throw std::invalid_argument("log_statistic_T: gamma must exceed lambda_1");
    NeumaierSum acc;
    for (double m : s.mu) acc.add(-std::log1p(-m / w));
    return acc.value();
}

// S_k = sum_i (lambda_i/gamma)^k for k = 1..k_max
inline std::vector<double> power_sums(const Spectrum& s, double gamma, int k_max) {
    if (!(gamma > 0.0)) throw std::invalid_argument("power_sums: gamma must be > 0");
    if (k_max < 1) throw std::invalid_argument("power_sums: k_max must be >= 1");
    const double w = gamma / s.b_n;
    std::vector<NeumaierSum> acc(static_cast<std::size_t>(k_max));
    for (double m : s.mu) {
        const double r = m / w;
        double p = 1.0;
        for (int k = 0; k < k_max; ++k) {
            p *= r;
            acc[static_cast<std::size_t>(k)].add(p);
        }
    }
    std::vector<double> out(static_cast<std::size_t>(k_max));
    for (int k = 0; k < k_max; ++k) out[static_cast<std::size_t>(k)] = acc[static_cast<std::size_t>(k)].value();
    return out;
}

}  // namespace levyssk
