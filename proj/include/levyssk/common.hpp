#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace levyssk {

// Thrown when an algorithm fails numerically (quadrature budget exhausted,
// invariant violated at runtime). Input/domain problems use std::invalid_argument.
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& what, double partial = 0.0)
        : std::runtime_error(what), partial_(partial) {}
    double partial() const { return partial_; }

private:
    double partial_;
};

// Neumaier compensated summation. The saddle equation and the spectral
// identities balance O(N) terms against each other, so plain accumulation
// noise is the limiting factor at N ~ 2000.
class NeumaierSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double compensated_sum(std::span<const double> xs) {
    NeumaierSum s;
    for (double x : xs) s.add(x);
    return s.value();
}

}  // namespace levyssk
