#include <doctest.h>

#include "sparsekan/rng.hpp"
#include "sparsekan/spline.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

using namespace sparsekan;

namespace {

// ============================================================================
// Oracles, written from the textbook definitions rather than the library code.
// ============================================================================

// Cox-de Boor recursion exactly as defined: N_{i,0} is the half-open interval
// indicator, and 0/0 terms drop out.
double oracle_basis(const std::vector<double>& t, int i, int k, double x) {
    if (k == 0) return (t[i] <= x && x < t[i + 1]) ? 1.0 : 0.0;
    double a = 0.0;
    double da = t[i + k] - t[i];
    if (da != 0.0) a = (x - t[i]) / da * oracle_basis(t, i, k - 1, x);
    double b = 0.0;
    double db = t[i + k + 1] - t[i + 1];
    if (db != 0.0) b = (t[i + k + 1] - x) / db * oracle_basis(t, i + 1, k - 1, x);
    return a + b;
}

std::vector<double> oracle_all(const SplineGrid& g, double x) {
    std::vector<double> out(static_cast<std::size_t>(g.basis_count()), 0.0);
    for (int i = 0; i < g.basis_count(); ++i)
        out[static_cast<std::size_t>(i)] = oracle_basis(g.knots, i, g.degree, x);
    return out;
}

double fd_central(double (*f)(const SplineActivation&, double), const SplineActivation& a,
                  double x, double h) {
    return (f(a, x + h) - f(a, x - h)) / (2.0 * h);
}

// Dense normal-equations least squares with partial pivoting; only used on
// full-rank systems.
std::vector<double> normal_eq_solve(const std::vector<std::vector<double>>& design,
                                    const std::vector<double>& target, double ridge) {
    std::size_t n = design.size();
    std::size_t p = design[0].size();
    std::vector<std::vector<double>> A(p, std::vector<double>(p, 0.0));
    std::vector<double> b(p, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < p; ++i) {
            b[i] += design[r][i] * target[r];
            for (std::size_t j = 0; j < p; ++j) A[i][j] += design[r][i] * design[r][j];
        }
    }
    for (std::size_t i = 0; i < p; ++i) A[i][i] += ridge;

    for (std::size_t col = 0; col < p; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < p; ++r)
            if (std::fabs(A[r][col]) > std::fabs(A[piv][col])) piv = r;
        std::swap(A[col], A[piv]);
        std::swap(b[col], b[piv]);
        if (A[col][col] == 0.0) throw std::runtime_error("oracle solve: singular");
        for (std::size_t r = col + 1; r < p; ++r) {
            double f = A[r][col] / A[col][col];
            for (std::size_t j = col; j < p; ++j) A[r][j] -= f * A[col][j];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(p, 0.0);
    for (std::size_t i = p; i-- > 0;) {
        double s = b[i];
        for (std::size_t j = i + 1; j < p; ++j) s -= A[i][j] * x[j];
        x[i] = s / A[i][i];
    }
    return x;
}

SplineActivation random_activation(Rng& rng, int G, int K, double lo, double hi) {
    SplineActivation a;
    a.grid = SplineGrid::uniform(G, K, lo, hi);
    a.coeffs.resize(static_cast<std::size_t>(a.grid.basis_count()));
    for (auto& c : a.coeffs) c = rng.normal(0.0, 1.0);
    a.w_b = rng.normal(0.0, 1.0);
    a.w_s = rng.normal(0.0, 1.0);
    return a;
}

double eval_fn(const SplineActivation& a, double x) { return activation_eval(a, x); }

}  // namespace

TEST_CASE("uniform grid layout covers the domain with K extension knots per side") {
    SplineGrid g = SplineGrid::uniform(10, 3, -1.0, 1.0);
    CHECK(g.knots.size() == 17);  // G + 2K + 1
    CHECK(g.basis_count() == 13);
    CHECK(g.knots[3] == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(g.knots[13] == doctest::Approx(1.0).epsilon(1e-15));
    double step = 0.2;
    for (std::size_t i = 0; i + 1 < g.knots.size(); ++i)
        CHECK(g.knots[i + 1] - g.knots[i] == doctest::Approx(step).epsilon(1e-12));
    CHECK(g.knots.front() == doctest::Approx(-1.0 - 3 * step));
    CHECK(g.knots.back() == doctest::Approx(1.0 + 3 * step));
    g.validate();
}

TEST_CASE("basis values match the recursive definition") {
    Rng rng(0x5eed0001);
    for (int trial = 0; trial < 200; ++trial) {
        int G = 1 + static_cast<int>(rng.below(12));
        int K = static_cast<int>(rng.below(5));
        double lo = rng.uniform(-3.0, 0.0);
        double hi = lo + rng.uniform(0.5, 4.0);
        SplineGrid g = SplineGrid::uniform(G, K, lo, hi);
        double span = g.knots.back() - g.knots.front();
        for (int q = 0; q < 50; ++q) {
            // Sample inside the extended span, in the margins, and outside.
            double x = rng.uniform(g.knots.front() - 0.3 * span, g.knots.back() + 0.3 * span);
            std::vector<double> got = basis_eval(g, x);
            std::vector<double> want = oracle_all(g, x);
            for (int i = 0; i < g.basis_count(); ++i)
                CHECK(got[static_cast<std::size_t>(i)] ==
                      doctest::Approx(want[static_cast<std::size_t>(i)]).epsilon(1e-12).scale(1.0));
        }
    }
}

TEST_CASE("partition of unity holds on the domain") {
    Rng rng(0x5eed0002);
    int cases = 0;
    while (cases < 10000) {
        int G = 1 + static_cast<int>(rng.below(12));
        int K = static_cast<int>(rng.below(5));
        double lo = rng.uniform(-5.0, 2.0);
        double hi = lo + rng.uniform(0.1, 6.0);
        SplineGrid g = SplineGrid::uniform(G, K, lo, hi);
        for (int q = 0; q < 20 && cases < 10000; ++q, ++cases) {
            double x = rng.uniform(lo, hi);
            std::vector<double> v = basis_eval(g, x);
            double s = 0.0;
            for (double b : v) s += b;
            CHECK(std::fabs(s - 1.0) < 1e-10);
        }
    }
    // Exact endpoints as well.
    SplineGrid g = SplineGrid::uniform(10, 3, -1.0, 1.0);
    for (double x : {-1.0, 1.0}) {
        std::vector<double> v = basis_eval(g, x);
        double s = 0.0;
        for (double b : v) s += b;
        CHECK(std::fabs(s - 1.0) < 1e-10);
    }
}

TEST_CASE("local support: exactly K+1 bases active strictly inside a span") {
    SplineGrid g = SplineGrid::uniform(10, 3, -1.0, 1.0);
    std::vector<double> v = basis_eval(g, 0.37);
    int nonzero = 0;
    for (int i = 0; i < g.basis_count(); ++i) {
        double b = v[static_cast<std::size_t>(i)];
        if (b != 0.0) {
            ++nonzero;
            CHECK(b > 0.0);
            // Support of basis i is [t_i, t_{i+K+1}].
            CHECK(g.knots[static_cast<std::size_t>(i)] <= 0.37);
            CHECK(g.knots[static_cast<std::size_t>(i + g.degree + 1)] >= 0.37);
        }
    }
    CHECK(nonzero == 4);
}

TEST_CASE("degree zero bases are interval indicators") {
    SplineGrid g = SplineGrid::uniform(4, 0, 0.0, 4.0);
    CHECK(g.basis_count() == 4);
    std::vector<double> v = basis_eval(g, 2.5);
    CHECK(v[0] == 0.0);
    CHECK(v[1] == 0.0);
    CHECK(v[2] == 1.0);
    CHECK(v[3] == 0.0);
    // Right domain endpoint closes the final interval.
    v = basis_eval(g, 4.0);
    CHECK(v[3] == 1.0);
}

TEST_CASE("all bases vanish outside the extended knot span") {
    Rng rng(0x5eed0003);
    SplineGrid g = SplineGrid::uniform(10, 3, -1.0, 1.0);
    for (double x : {-1.7, 1.7, -25.0, 39.0}) {
        std::vector<double> v = basis_eval(g, x);
        for (double b : v) CHECK(b == 0.0);
    }
    // Sentinel from the local evaluator.
    double vals[8];
    CHECK(basis_local(g, 5.0, vals) == g.basis_count());
}

TEST_CASE("basis derivatives match central differences") {
    Rng rng(0x5eed0004);
    const double h = 1e-5;
    for (int trial = 0; trial < 100; ++trial) {
        int G = 1 + static_cast<int>(rng.below(10));
        int K = static_cast<int>(rng.below(5));
        double lo = rng.uniform(-2.0, 0.0);
        double hi = lo + rng.uniform(0.5, 3.0);
        SplineGrid g = SplineGrid::uniform(G, K, lo, hi);
        double step = (hi - lo) / G;
        double x = rng.uniform(g.knots.front(), g.knots.back());
        // Keep clear of knots so the FD stencil stays inside one polynomial
        // piece (K=0 and K=1 derivatives jump at knots).
        double offset = std::fmod(x - g.knots.front(), step);
        if (offset < 10 * h || step - offset < 10 * h) continue;

        double vals[8];
        double ders[8];
        int first = basis_local_with_derivative(g, x, vals, ders);
        if (first == g.basis_count()) continue;
        std::vector<double> up = basis_eval(g, x + h);
        std::vector<double> dn = basis_eval(g, x - h);
        for (int m = 0; m <= K; ++m) {
            int i = first + m;
            if (i < 0 || i >= g.basis_count()) continue;
            double fd = (up[static_cast<std::size_t>(i)] - dn[static_cast<std::size_t>(i)]) / (2 * h);
            CHECK(ders[m] == doctest::Approx(fd).epsilon(1e-4).scale(1.0));
        }
    }
}

TEST_CASE("activation gradient matches central differences in every argument") {
    Rng rng(0x5eed0005);
    const double h = 1e-5;
    for (int trial = 0; trial < 50; ++trial) {
        SplineActivation a = random_activation(rng, 10, 3, -1.0, 1.0);
        double x = rng.uniform(-1.5, 1.5);
        double step = 0.2;
        double offset = std::fmod(x - a.grid.knots.front(), step);
        if (offset < 10 * h || step - offset < 10 * h) continue;

        ActivationGrad g = activation_grad(a, x);
        double fd_x = fd_central(eval_fn, a, x, h);
        CHECK(g.dx == doctest::Approx(fd_x).epsilon(1e-4).scale(1e-4));

        SplineActivation ap = a;
        ap.w_b += h;
        SplineActivation am = a;
        am.w_b -= h;
        CHECK(g.dw_b ==
              doctest::Approx((activation_eval(ap, x) - activation_eval(am, x)) / (2 * h))
                  .epsilon(1e-6)
                  .scale(1e-6));

        ap = a;
        ap.w_s += h;
        am = a;
        am.w_s -= h;
        CHECK(g.dw_s ==
              doctest::Approx((activation_eval(ap, x) - activation_eval(am, x)) / (2 * h))
                  .epsilon(1e-6)
                  .scale(1e-6));

        for (std::size_t c = 0; c < a.coeffs.size(); c += 3) {
            ap = a;
            ap.coeffs[c] += h;
            am = a;
            am.coeffs[c] -= h;
            double fd = (activation_eval(ap, x) - activation_eval(am, x)) / (2 * h);
            CHECK(g.dcoeffs[c] == doctest::Approx(fd).epsilon(1e-6).scale(1e-6));
        }
    }
}

TEST_CASE("activation far outside the grid degrades to the scaled SiLU term") {
    Rng rng(0x5eed0006);
    SplineActivation a = random_activation(rng, 10, 3, -1.0, 1.0);
    a.w_b = 1.0;
    CHECK(activation_eval(a, 10.0) == doctest::Approx(silu(10.0)).epsilon(1e-12));
    CHECK(activation_eval(a, 10.0) == doctest::Approx(10.0).epsilon(1e-3));
    ActivationGrad g = activation_grad(a, 10.0);
    CHECK(g.dx == doctest::Approx(silu_deriv(10.0)).epsilon(1e-12));
    for (double dc : g.dcoeffs) CHECK(dc == 0.0);
}

TEST_CASE("constant coefficients reproduce a constant on the domain") {
    SplineActivation a;
    a.grid = SplineGrid::uniform(10, 3, -1.0, 1.0);
    a.coeffs.assign(static_cast<std::size_t>(a.grid.basis_count()), 7.0);
    a.w_b = 0.0;
    a.w_s = 1.0;
    Rng rng(0x5eed0007);
    for (int q = 0; q < 200; ++q) {
        double x = rng.uniform(-1.0, 1.0);
        CHECK(std::fabs(activation_eval(a, x) - 7.0) < 1e-10);
    }
}

TEST_CASE("zero coefficients give the SiLU slope at the origin") {
    SplineActivation a;
    a.grid = SplineGrid::uniform(10, 3, -1.0, 1.0);
    a.coeffs.assign(static_cast<std::size_t>(a.grid.basis_count()), 0.0);
    ActivationGrad g = activation_grad(a, 0.0);
    CHECK(g.dx == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("grid refit reproduces a representable activation on the samples") {
    // Constant spline plus SiLU base is representable on any refitted grid, so
    // the refit should change nothing measurable at the sample points.
    SplineActivation a;
    a.grid = SplineGrid::uniform(10, 3, -1.0, 1.0);
    a.coeffs.assign(static_cast<std::size_t>(a.grid.basis_count()), 1.3);
    a.w_b = 0.7;
    a.w_s = 0.9;
    Rng rng(0x5eed0008);
    std::vector<double> xs(256);
    for (auto& x : xs) x = rng.uniform(-0.9, 0.9);
    SplineActivation b = update_grid_from_samples(a, xs);
    CHECK(b.w_b == a.w_b);
    CHECK(b.w_s == a.w_s);
    double rms = 0.0;
    for (double x : xs) {
        double d = activation_eval(b, x) - activation_eval(a, x);
        rms += d * d;
    }
    rms = std::sqrt(rms / static_cast<double>(xs.size()));
    CHECK(rms < 1e-8);
}

TEST_CASE("grid refit covers the sample range with a one percent margin") {
    SplineActivation a;
    a.grid = SplineGrid::uniform(10, 3, -1.0, 1.0);
    a.coeffs.assign(static_cast<std::size_t>(a.grid.basis_count()), 0.0);
    std::vector<double> xs = {-2.0, 0.5, 6.0};
    SplineActivation b = update_grid_from_samples(a, xs);
    CHECK(b.grid.domain_lo == doctest::Approx(-2.0 - 0.08).epsilon(1e-12));
    CHECK(b.grid.domain_hi == doctest::Approx(6.0 + 0.08).epsilon(1e-12));
    CHECK(b.grid.num_intervals == 10);
    CHECK(b.grid.degree == 3);
}

TEST_CASE("grid refit on identical samples falls back to a unit-width domain") {
    SplineActivation a;
    a.grid = SplineGrid::uniform(10, 3, -1.0, 1.0);
    a.coeffs.assign(static_cast<std::size_t>(a.grid.basis_count()), 0.0);
    std::vector<double> xs(32, 0.25);
    SplineActivation b = update_grid_from_samples(a, xs);
    CHECK(b.grid.domain_lo == doctest::Approx(-0.25).epsilon(1e-12));
    CHECK(b.grid.domain_hi == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("grid refit least squares agrees with a normal-equations oracle") {
    Rng rng(0x5eed0009);
    SplineActivation a = random_activation(rng, 6, 3, -1.0, 1.0);
    a.w_s = 1.0;
    // Plenty of well-spread samples keeps the design full rank.
    std::vector<double> xs(400);
    for (auto& x : xs) x = rng.uniform(-1.2, 1.2);

    SplineActivation b = update_grid_from_samples(a, xs);

    std::vector<std::vector<double>> design;
    std::vector<double> target;
    design.reserve(xs.size());
    for (double x : xs) {
        design.push_back(basis_eval(b.grid, x));
        target.push_back((activation_eval(a, x) - a.w_b * silu(x)) / a.w_s);
    }
    std::vector<double> want = normal_eq_solve(design, target, 0.0);
    REQUIRE(want.size() == b.coeffs.size());
    for (std::size_t i = 0; i < want.size(); ++i)
        CHECK(b.coeffs[i] == doctest::Approx(want[i]).epsilon(1e-6).scale(1e-6));
}

TEST_CASE("rank-deficient refit satisfies the normal equations with minimum norm") {
    Rng rng(0x5eed000a);
    SplineActivation a = random_activation(rng, 10, 3, -1.0, 1.0);
    a.w_s = 1.0;
    // A cluster on the left plus one far point: the bases between them are
    // never sampled, and the far point alone cannot pin down the four bases
    // it touches. Both deficiencies have closed-form minimum-norm answers.
    std::vector<double> xs(200);
    for (auto& x : xs) x = rng.uniform(-1.0, -0.2);
    xs.push_back(5.0);

    SplineActivation b = update_grid_from_samples(a, xs);

    std::vector<std::vector<double>> design;
    std::vector<double> target;
    for (double x : xs) {
        design.push_back(basis_eval(b.grid, x));
        target.push_back((activation_eval(a, x) - a.w_b * silu(x)) / a.w_s);
    }
    std::size_t p = b.coeffs.size();
    std::size_t far = xs.size() - 1;

    // Residual is orthogonal to the column space: B^T (B c - t) = 0.
    for (std::size_t j = 0; j < p; ++j) {
        double dot = 0.0;
        for (std::size_t r = 0; r < xs.size(); ++r) {
            double pred = 0.0;
            for (std::size_t i = 0; i < p; ++i) pred += design[r][i] * b.coeffs[i];
            dot += design[r][j] * (pred - target[r]);
        }
        CHECK(std::fabs(dot) < 1e-7);
    }

    // Bases no sample ever touches must come back with zero coefficient.
    int untouched = 0;
    for (std::size_t i = 0; i < p; ++i) {
        double colnorm = 0.0;
        for (std::size_t r = 0; r < xs.size(); ++r) colnorm += std::fabs(design[r][i]);
        if (colnorm == 0.0) {
            ++untouched;
            CHECK(std::fabs(b.coeffs[i]) < 1e-9);
        }
    }
    CHECK(untouched >= 1);

    // The far point's bases overlap no other sample, so that block solves a
    // single equation; its minimum-norm solution is t * row / |row|^2.
    double rownorm2 = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
        if (design[far][i] == 0.0) continue;
        rownorm2 += design[far][i] * design[far][i];
        for (std::size_t r = 0; r < far; ++r) REQUIRE(design[r][i] == 0.0);
    }
    REQUIRE(rownorm2 > 0.0);
    for (std::size_t i = 0; i < p; ++i) {
        if (design[far][i] == 0.0) continue;
        double want = target[far] * design[far][i] / rownorm2;
        CHECK(b.coeffs[i] == doctest::Approx(want).epsilon(1e-7).scale(1e-7));
    }
}

TEST_CASE("invalid inputs are rejected") {
    SplineGrid g = SplineGrid::uniform(10, 3, -1.0, 1.0);
    double vals[8];
    CHECK_THROWS_AS(basis_local(g, std::nan(""), vals), std::invalid_argument);
    CHECK_THROWS_AS(SplineGrid::uniform(0, 3, -1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(SplineGrid::uniform(10, -1, -1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(SplineGrid::uniform(10, 3, 1.0, -1.0), std::invalid_argument);

    SplineActivation a;
    a.grid = g;
    a.coeffs.assign(5, 0.0);  // wrong length
    CHECK_THROWS_AS(a.validate(), std::invalid_argument);
    a.coeffs.assign(static_cast<std::size_t>(g.basis_count()), 0.0);
    a.validate();
    CHECK_THROWS_AS(activation_eval(a, std::numeric_limits<double>::infinity()),
                    std::invalid_argument);
    CHECK_THROWS_AS(update_grid_from_samples(a, std::span<const double>{}),
                    std::invalid_argument);
}
