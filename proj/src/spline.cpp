#include "sparsekan/spline.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace sparsekan {

namespace {

// Knot accessor that extends the uniform spacing beyond the stored range.
// Spans in the outer extension reference such phantom knots; they only feed
// basis indices the caller discards.
inline double knot_at(const SplineGrid& g, int i) {
    int n = static_cast<int>(g.knots.size());
    if (i >= 0 && i < n) return g.knots[static_cast<std::size_t>(i)];
    double step = (g.domain_hi - g.domain_lo) / g.num_intervals;
    return g.domain_lo + (i - g.degree) * step;
}

void require_finite_x(double x) {
    if (!std::isfinite(x)) throw std::invalid_argument("spline: input x must be finite");
}

}  // namespace

SplineGrid SplineGrid::uniform(int num_intervals, int degree, double lo, double hi) {
    if (num_intervals < 1) throw std::invalid_argument("SplineGrid: num_intervals must be >= 1");
    if (degree < 0 || degree > 30) throw std::invalid_argument("SplineGrid: degree must be in [0, 30]");
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
        throw std::invalid_argument("SplineGrid: need finite domain_lo < domain_hi");
    SplineGrid g;
    g.num_intervals = num_intervals;
    g.degree = degree;
    g.domain_lo = lo;
    g.domain_hi = hi;
    double step = (hi - lo) / num_intervals;
    int count = num_intervals + 2 * degree + 1;
    g.knots.resize(count);
    for (int i = 0; i < count; ++i) g.knots[static_cast<std::size_t>(i)] = lo + (i - degree) * step;
    return g;
}

void SplineGrid::validate() const {
    if (num_intervals < 1 || degree < 0 || degree > 30)
        throw std::invalid_argument("SplineGrid: bad G or K");
    if (!(domain_lo < domain_hi)) throw std::invalid_argument("SplineGrid: bad domain");
    std::size_t expect = static_cast<std::size_t>(num_intervals + 2 * degree + 1);
    if (knots.size() != expect) throw std::invalid_argument("SplineGrid: knot count mismatch");
    for (std::size_t i = 0; i + 1 < knots.size(); ++i)
        if (!(knots[i] < knots[i + 1])) throw std::invalid_argument("SplineGrid: knots not increasing");
    for (double k : knots)
        if (!std::isfinite(k)) throw std::invalid_argument("SplineGrid: non-finite knot");
}

void SplineActivation::validate() const {
    grid.validate();
    if (coeffs.size() != static_cast<std::size_t>(grid.basis_count()))
        throw std::invalid_argument("SplineActivation: coeffs length must equal basis count");
    for (double c : coeffs)
        if (!std::isfinite(c)) throw std::invalid_argument("SplineActivation: non-finite coefficient");
    if (!std::isfinite(w_b) || !std::isfinite(w_s))
        throw std::invalid_argument("SplineActivation: non-finite scale");
}

int basis_local(const SplineGrid& grid, double x, double* values) {
    require_finite_x(x);
    const int K = grid.degree;
    const int nspans = grid.num_intervals + 2 * K;
    const double t0 = grid.knots.front();
    const double tn = grid.knots.back();
    if (x < t0 || x >= tn) {
        // x == tn is treated as the closed right end of the last span so the
        // basis stays a partition of unity at domain_hi when K extension
        // knots are absent (K == 0 grids end exactly at domain_hi).
        if (!(x == tn)) return grid.basis_count();
    }

    double step = (grid.domain_hi - grid.domain_lo) / grid.num_intervals;
    int span = static_cast<int>(std::floor((x - t0) / step));
    span = std::clamp(span, 0, nspans - 1);
    while (span > 0 && x < knot_at(grid, span)) --span;
    while (span < nspans - 1 && x >= knot_at(grid, span + 1)) ++span;

    // Triangular Cox-de Boor scheme over span `span`; produces the values of
    // basis functions span-K .. span.
    double left[32];
    double right[32];
    values[0] = 1.0;
    for (int j = 1; j <= K; ++j) {
        left[j] = x - knot_at(grid, span + 1 - j);
        right[j] = knot_at(grid, span + j) - x;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            double denom = right[r + 1] + left[j - r];
            double temp = denom != 0.0 ? values[r] / denom : 0.0;
            values[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        values[j] = saved;
    }
    return span - K;
}

int basis_local_with_derivative(const SplineGrid& grid, double x, double* values, double* derivs) {
    const int K = grid.degree;
    if (K == 0) {
        int first = basis_local(grid, x, values);
        if (first != grid.basis_count()) derivs[0] = 0.0;
        return first;
    }

    // Evaluate the degree K-1 row on a reduced grid sharing the same knots,
    // then apply the standard derivative recurrence.
    require_finite_x(x);
    int first = basis_local(grid, x, values);
    if (first == grid.basis_count()) return first;
    int span = first + K;

    double lower[32];
    lower[0] = 1.0;
    double left[32];
    double right[32];
    for (int j = 1; j <= K - 1; ++j) {
        left[j] = x - knot_at(grid, span + 1 - j);
        right[j] = knot_at(grid, span + j) - x;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            double denom = right[r + 1] + left[j - r];
            double temp = denom != 0.0 ? lower[r] / denom : 0.0;
            lower[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        lower[j] = saved;
    }
    // lower[r] now holds N_{span-K+1+r, K-1}(x) for r = 0..K-1.
    for (int m = 0; m <= K; ++m) {
        int i = first + m;
        double a = 0.0;
        if (m >= 1) {
            double denom = knot_at(grid, i + K) - knot_at(grid, i);
            if (denom != 0.0) a = lower[m - 1] / denom;
        }
        double b = 0.0;
        if (m <= K - 1) {
            double denom = knot_at(grid, i + K + 1) - knot_at(grid, i + 1);
            if (denom != 0.0) b = lower[m] / denom;
        }
        derivs[m] = K * (a - b);
    }
    return first;
}

std::vector<double> basis_eval(const SplineGrid& grid, double x) {
    std::vector<double> out(static_cast<std::size_t>(grid.basis_count()), 0.0);
    double vals[32];
    int first = basis_local(grid, x, vals);
    if (first == grid.basis_count()) return out;
    for (int m = 0; m <= grid.degree; ++m) {
        int i = first + m;
        if (i >= 0 && i < grid.basis_count()) out[static_cast<std::size_t>(i)] = vals[m];
    }
    return out;
}

double activation_eval(const SplineActivation& act, double x) {
    require_finite_x(x);
    double vals[32];
    int first = basis_local(act.grid, x, vals);
    double s = 0.0;
    if (first != act.grid.basis_count()) {
        int count = act.grid.basis_count();
        for (int m = 0; m <= act.grid.degree; ++m) {
            int i = first + m;
            if (i >= 0 && i < count) s += act.coeffs[static_cast<std::size_t>(i)] * vals[m];
        }
    }
    return act.w_b * silu(x) + act.w_s * s;
}

ActivationGrad activation_grad(const SplineActivation& act, double x) {
    require_finite_x(x);
    ActivationGrad g;
    g.dcoeffs.assign(act.coeffs.size(), 0.0);

    double vals[32];
    double ders[32];
    int first = basis_local_with_derivative(act.grid, x, vals, ders);
    double spline_sum = 0.0;
    double spline_deriv = 0.0;
    if (first != act.grid.basis_count()) {
        int count = act.grid.basis_count();
        for (int m = 0; m <= act.grid.degree; ++m) {
            int i = first + m;
            if (i < 0 || i >= count) continue;
            spline_sum += act.coeffs[static_cast<std::size_t>(i)] * vals[m];
            spline_deriv += act.coeffs[static_cast<std::size_t>(i)] * ders[m];
            g.dcoeffs[static_cast<std::size_t>(i)] = act.w_s * vals[m];
        }
    }
    g.dx = act.w_b * silu_deriv(x) + act.w_s * spline_deriv;
    g.dw_b = silu(x);
    g.dw_s = spline_sum;
    return g;
}

SplineActivation update_grid_from_samples(const SplineActivation& act, std::span<const double> xs) {
    if (xs.empty()) throw std::invalid_argument("update_grid_from_samples: empty sample set");
    double mn = std::numeric_limits<double>::infinity();
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : xs) {
        if (!std::isfinite(x)) throw std::invalid_argument("update_grid_from_samples: non-finite sample");
        mn = std::min(mn, x);
        mx = std::max(mx, x);
    }
    double range = mx - mn;
    double lo, hi;
    if (range <= 0.0) {
        lo = mn - 0.5;
        hi = mn + 0.5;
    } else {
        lo = mn - 0.01 * range;
        hi = mx + 0.01 * range;
    }

    SplineActivation out;
    out.grid = SplineGrid::uniform(act.grid.num_intervals, act.grid.degree, lo, hi);
    out.w_b = act.w_b;
    out.w_s = act.w_s;
    const int count = out.grid.basis_count();
    out.coeffs.assign(static_cast<std::size_t>(count), 0.0);
    if (act.w_s == 0.0) return out;  // spline term invisible; minimum-norm coefficients

    const std::size_t n = xs.size();
    Eigen::MatrixXd design = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), count);
    Eigen::VectorXd target(static_cast<Eigen::Index>(n));
    double vals[32];
    for (std::size_t r = 0; r < n; ++r) {
        double x = xs[r];
        int firstv = basis_local(out.grid, x, vals);
        if (firstv != count) {
            for (int m = 0; m <= out.grid.degree; ++m) {
                int i = firstv + m;
                if (i >= 0 && i < count) design(static_cast<Eigen::Index>(r), i) = vals[m];
            }
        }
        target(static_cast<Eigen::Index>(r)) = (activation_eval(act, x) - act.w_b * silu(x)) / act.w_s;
    }

    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(design);
    Eigen::VectorXd c = cod.solve(target);
    for (int i = 0; i < count; ++i) out.coeffs[static_cast<std::size_t>(i)] = c(i);
    return out;
}

}  // namespace sparsekan
