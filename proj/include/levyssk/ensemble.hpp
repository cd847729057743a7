#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "levyssk/common.hpp"
#include "levyssk/heavy_tail.hpp"
#include "levyssk/rng.hpp"

namespace levyssk {

struct EnsembleSpec {
    std::int64_t n = 0;
    TailLaw law = TailLaw::pareto(1.0);
    std::optional<double> truncation;  // entries become X 1(|X| <= c)
};

// One realization of the N x N symmetric heavy-tailed Wigner matrix. Only the
// upper triangle is stored (row-major, i <= j); symmetry is implicit.
// Immutable after creation.
struct SampledMatrix {
    std::int64_t n = 0;
    std::vector<double> upper;  // N(N+1)/2 entries
    double b_n = 0.0;
    std::uint64_t seed = 0;

    std::size_t index(std::int64_t i, std::int64_t j) const {
        // requires i <= j
        return static_cast<std::size_t>(i * (2 * n - i + 1) / 2 + (j - i));
    }
    double entry(std::int64_t i, std::int64_t j) const {
        return i <= j ? upper[index(i, j)] : upper[index(j, i)];
    }

    double trace() const {
        NeumaierSum s;
        for (std::int64_t i = 0; i < n; ++i) s.add(upper[index(i, i)]);
        return s.value();
    }
    // sum over all N^2 positions of M_ij^2
    double frobenius_sq() const {
        NeumaierSum s;
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = i; j < n; ++j) {
                const double v = upper[index(i, j)];
                s.add((i == j ? 1.0 : 2.0) * v * v);
            }
        return s.value();
    }

    Eigen::MatrixXd dense() const {
        Eigen::MatrixXd m(n, n);
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = i; j < n; ++j)
                m(i, j) = m(j, i) = upper[index(i, j)];
        return m;
    }
};

// Deterministic in (spec, seed): entries are drawn row-major over the upper
// triangle, two uniforms per entry (magnitude, then sign).
inline SampledMatrix sample_matrix(const EnsembleSpec& spec, std::uint64_t seed) {
    if (spec.n < 1) throw std::invalid_argument("sample_matrix: N must be >= 1");
    if (spec.truncation && !(*spec.truncation > 0.0))
        throw std::invalid_argument("sample_matrix: truncation cutoff must be positive");
    SampledMatrix m;
    m.n = spec.n;
    m.seed = seed;
    m.b_n = normalizers(spec.law, spec.n).b_n;
    m.upper.resize(static_cast<std::size_t>(spec.n) * (spec.n + 1) / 2);
    Stream rng(seed);
    for (double& x : m.upper) {
        double v = spec.law.sample(rng);
        if (spec.truncation && std::abs(v) > *spec.truncation) v = 0.0;
        x = v;
    }
    return m;
}

inline double max_abs_entry(const SampledMatrix& m) {
    double best = 0.0;
    for (double x : m.upper) best = std::max(best, std::abs(x));
    return best;
}

// Per-realization checks of the with-high-probability structure lemmas.
// Failures are data, not errors: the statements are asymptotic.
//   diag_bound:        all |M_ii| <= b_N^{11/20}
//   mixed_bound:       for every i <= j, |M_ij| <= b_N^{99/100} or |M_ii|+|M_jj| <= b_N^{1/10}
//   two_large_per_row: no row has two entries above b_N^{1/2+delta}
//   row_sum_bound:     each row's dominant entry M_ii' has |M_ii'| < b_N^{1/2+eps}
//                      or |sum_{j != i'} M_ij| < b_N^{1/2+eps}
struct WhpReport {
    bool diag_bound = true;
    bool mixed_bound = true;
    bool two_large_per_row = true;
    bool row_sum_bound = true;
};

inline WhpReport whp_diagnostics(const SampledMatrix& m, double delta, double eps) {
    WhpReport r;
    const double t_diag = std::pow(m.b_n, 11.0 / 20.0);
    const double t_big = std::pow(m.b_n, 99.0 / 100.0);
    const double t_small = std::pow(m.b_n, 1.0 / 10.0);
    const double t_delta = std::pow(m.b_n, 0.5 + delta);
    const double t_eps = std::pow(m.b_n, 0.5 + eps);

    for (std::int64_t i = 0; i < m.n; ++i)
        if (std::abs(m.entry(i, i)) > t_diag) { r.diag_bound = false; break; }

    for (std::int64_t i = 0; i < m.n && r.mixed_bound; ++i)
        for (std::int64_t j = i; j < m.n; ++j)
            if (std::abs(m.entry(i, j)) > t_big &&
                std::abs(m.entry(i, i)) + std::abs(m.entry(j, j)) > t_small) {
                r.mixed_bound = false;
                break;
            }

    for (std::int64_t i = 0; i < m.n; ++i) {
        int large = 0;
        std::int64_t dominant = 0;
        double dominant_abs = -1.0;
        NeumaierSum row_sum;
        for (std::int64_t j = 0; j < m.n; ++j) {
            const double v = m.entry(i, j);
            const double a = std::abs(v);
            if (a > t_delta) ++large;
            if (a > dominant_abs) { dominant_abs = a; dominant = j; }
            row_sum.add(v);
        }
        if (large >= 2) r.two_large_per_row = false;
        if (dominant_abs >= t_eps &&
            std::abs(row_sum.value() - m.entry(i, dominant)) >= t_eps)
            r.row_sum_bound = false;
    }
    return r;
}

}  // namespace levyssk
