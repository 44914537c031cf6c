#ifndef SPARSEKAN_SPLINE_HPP
#define SPARSEKAN_SPLINE_HPP

#include <cmath>
#include <span>
#include <vector>

namespace sparsekan {

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline double silu(double x) { return x * sigmoid(x); }

inline double silu_deriv(double x) {
    double s = sigmoid(x);
    return s + x * s * (1.0 - s);
}

// Uniform extended knot grid: G intervals of degree-K B-splines over
// [domain_lo, domain_hi], with K extra equally spaced knots on each side.
// Supports G+K basis functions. Outside the extended knot span every basis
// function is zero.
struct SplineGrid {
    std::vector<double> knots;  // length G + 2K + 1, strictly increasing
    int num_intervals = 0;      // G
    int degree = 0;             // K
    double domain_lo = 0.0;
    double domain_hi = 0.0;

    int basis_count() const { return num_intervals + degree; }

    static SplineGrid uniform(int num_intervals, int degree, double lo, double hi);

    void validate() const;
};

// One learnable edge function: SiLU base plus a B-spline, each with its own
// scale. phi(x) = w_b * silu(x) + w_s * sum_m coeffs[m] * B_m(x).
struct SplineActivation {
    SplineGrid grid;
    std::vector<double> coeffs;  // length basis_count()
    double w_b = 1.0;
    double w_s = 1.0;

    void validate() const;
};

// Local basis evaluation. Writes degree+1 values into `values`; the value at
// position m belongs to basis index first+m. Positions whose index falls
// outside [0, basis_count) must be ignored by the caller. Returns
// basis_count() when x lies outside the extended knot span (nothing written).
int basis_local(const SplineGrid& grid, double x, double* values);

// As basis_local, also writing d/dx of each basis function into `derivs`.
int basis_local_with_derivative(const SplineGrid& grid, double x, double* values, double* derivs);

// Full-length basis vector B_1..B_{G+K} at x.
std::vector<double> basis_eval(const SplineGrid& grid, double x);

double activation_eval(const SplineActivation& act, double x);

struct ActivationGrad {
    double dx = 0.0;
    std::vector<double> dcoeffs;
    double dw_b = 0.0;
    double dw_s = 0.0;
};

ActivationGrad activation_grad(const SplineActivation& act, double x);

// Re-fits the grid to the sample range (1% margin per side) and solves a
// least-squares problem so the new spline reproduces the old activation on
// the samples. w_b and w_s are unchanged. Identical samples fall back to a
// unit-width domain centred on the value; rank-deficient fits return the
// minimum-norm solution.
SplineActivation update_grid_from_samples(const SplineActivation& act, std::span<const double> xs);

}  // namespace sparsekan

#endif
