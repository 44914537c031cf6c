#include <doctest.h>

#include "sparsekan/data.hpp"
#include "sparsekan/eval.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

using namespace sparsekan;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("/tmp/sparsekan_eval_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
    std::string read() const {
        std::ifstream in(path);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }
};

Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
    return m;
}

// A [2,2] net whose output reproduces its input: diagonal edges carry the
// spline representation of the identity (coefficients at the knot averages),
// off-diagonal edges are zeroed.
GatedKan identity_net() {
    Rng rng(77);
    GatedKan net = GatedKan::init(KanShape::sums({2, 2}, false), rng, 20.0, false, false);
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            SplineActivation& act = net.edges[0][static_cast<std::size_t>(i * 2 + j)];
            act.w_b = 0.0;
            act.w_s = 1.0;
            const int kk = act.grid.degree;
            for (int m = 0; m < act.grid.basis_count(); ++m) {
                double g = 0.0;
                for (int t = 1; t <= kk; ++t) g += act.grid.knots[static_cast<std::size_t>(m + t)];
                act.coeffs[static_cast<std::size_t>(m)] = (i == j) ? g / kk : 0.0;
            }
        }
    }
    ++net.revision;
    net.validate();
    return net;
}

}  // namespace

TEST_CASE("r_squared on pinned cases") {
    Matrix t = from_rows({{0.0}, {1.0}, {2.0}});
    CHECK(r_squared(t, t) == 1.0);

    Matrix p = from_rows({{0.0}, {1.0}, {1.0}});
    CHECK(r_squared(p, t) == 0.5);  // SS_res = 1, SS_tot = 2

    Matrix mean = from_rows({{1.0}, {1.0}, {1.0}});
    CHECK(r_squared(mean, t) == 0.0);
}

TEST_CASE("r_squared pools residuals across columns") {
    // Column 0 predicted perfectly, column 1 anti-predicted. Pooled:
    // SS_res = 32, SS_tot = 10. Averaging per-column scores would give -1.
    Matrix target = from_rows({{0.0, 0.0}, {2.0, 4.0}});
    Matrix pred = from_rows({{0.0, 4.0}, {2.0, 0.0}});
    CHECK(r_squared(pred, target) == doctest::Approx(-2.2).epsilon(1e-15));
}

TEST_CASE("r_squared matches a per-entry oracle on random data") {
    Rng rng(2024);
    Matrix target(50, 3), pred(50, 3);
    for (double& v : target.data()) v = rng.normal();
    for (std::size_t i = 0; i < pred.data().size(); ++i)
        pred.data()[i] = target.data()[i] + 0.3 * rng.normal();

    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < 50; ++r) mean += target(r, c);
        mean /= 50.0;
        for (std::size_t r = 0; r < 50; ++r) {
            ss_res += (pred(r, c) - target(r, c)) * (pred(r, c) - target(r, c));
            ss_tot += (target(r, c) - mean) * (target(r, c) - mean);
        }
    }
    CHECK(r_squared(pred, target) == doctest::Approx(1.0 - ss_res / ss_tot).epsilon(1e-13));
}

TEST_CASE("r_squared is invariant under shifting both inputs by a constant") {
    Rng rng(9);
    Matrix target(40, 2), pred(40, 2);
    for (double& v : target.data()) v = rng.uniform(-2.0, 2.0);
    for (std::size_t i = 0; i < pred.data().size(); ++i)
        pred.data()[i] = 0.8 * target.data()[i] + 0.1 * rng.normal();
    double base = r_squared(pred, target);

    Matrix target_s = target, pred_s = pred;
    for (double& v : target_s.data()) v += 5.0;
    for (double& v : pred_s.data()) v += 5.0;
    CHECK(r_squared(pred_s, target_s) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("r_squared rejects degenerate inputs") {
    Matrix t = from_rows({{1.0}, {2.0}});
    Matrix wide(2, 2);
    CHECK_THROWS_AS(r_squared(wide, t), std::invalid_argument);

    Matrix one = from_rows({{1.0}});
    CHECK_THROWS_AS(r_squared(one, one), std::invalid_argument);

    Matrix flat = from_rows({{3.0}, {3.0}, {3.0}});
    CHECK_THROWS_AS(r_squared(flat, flat), std::domain_error);
}

TEST_CASE("rmse on pinned cases") {
    Matrix t = from_rows({{1.0, -2.0}, {0.5, 3.0}});
    CHECK(rmse(t, t) == 0.0);

    Matrix shifted = t;
    for (double& v : shifted.data()) v += 2.0;
    CHECK(rmse(shifted, t) == 2.0);

    Matrix zeros(1, 2);
    Matrix resid = from_rows({{3.0, 4.0}});
    CHECK(rmse(resid, zeros) == std::sqrt(12.5));  // (9 + 16) / 2
}

TEST_CASE("rmse is symmetric and nonnegative") {
    Rng rng(5);
    Matrix a(17, 3), b(17, 3);
    for (double& v : a.data()) v = rng.normal();
    for (double& v : b.data()) v = rng.normal();
    double ab = rmse(a, b);
    CHECK(ab == rmse(b, a));
    CHECK(ab >= 0.0);

    Matrix narrow(17, 2);
    CHECK_THROWS_AS(rmse(a, narrow), std::invalid_argument);
    Matrix empty;
    CHECK_THROWS_AS(rmse(empty, empty), std::invalid_argument);
}

TEST_CASE("rollout repeats the step function and keeps every state") {
    StepFn twice = [](const double* s, double* n) { n[0] = 2.0 * s[0]; };
    double x0[1] = {1.5};
    RolloutResult r = rollout(twice, std::span<const double>(x0, 1), 4);
    CHECK_FALSE(r.diverged);
    REQUIRE(r.states.rows() == 4);
    CHECK(r.states(0, 0) == 3.0);
    CHECK(r.states(1, 0) == 6.0);
    CHECK(r.states(2, 0) == 12.0);
    CHECK(r.states(3, 0) == 24.0);

    RolloutResult none = rollout(twice, std::span<const double>(x0, 1), 0);
    CHECK(none.states.rows() == 0);
    CHECK_FALSE(none.diverged);

    CHECK_THROWS_AS(rollout(twice, std::span<const double>(x0, 1), -1), std::invalid_argument);
    CHECK_THROWS_AS(rollout(twice, std::span<const double>(x0, 0), 3), std::invalid_argument);
}

TEST_CASE("rollout through the chaotic map matches hand-pinned states") {
    StepFn step = [](const double* s, double* n) { ikeda_step(0.9, s, n); };
    double origin[2] = {0.0, 0.0};
    RolloutResult r = rollout(step, std::span<const double>(origin, 2), 2);
    REQUIRE(r.states.rows() == 2);
    CHECK(r.states(0, 0) == 1.0);
    CHECK(r.states(0, 1) == 0.0);
    CHECK(r.states(1, 0) == doctest::Approx(0.22880012).epsilon(1e-7));
    CHECK(r.states(1, 1) == doctest::Approx(-0.46395124).epsilon(1e-7));
}

TEST_CASE("a long rollout equals two chained shorter ones") {
    StepFn step = [](const double* s, double* n) { ikeda_step(0.9, s, n); };
    double x0[2] = {0.1, 0.1};
    RolloutResult full = rollout(step, std::span<const double>(x0, 2), 7);
    RolloutResult head = rollout(step, std::span<const double>(x0, 2), 3);
    RolloutResult tail =
        rollout(step, std::span<const double>(head.states.row_ptr(2), 2), 4);
    REQUIRE(full.states.rows() == 7);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 2; ++c) CHECK(full.states(r, c) == head.states(r, c));
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 2; ++c) CHECK(full.states(r + 3, c) == tail.states(r, c));
}

TEST_CASE("rollout truncates at the first non-finite state") {
    StepFn blowup = [](const double* s, double* n) {
        n[0] = s[0] < 10.0 ? 3.0 * s[0] : std::numeric_limits<double>::infinity();
    };
    double x0[1] = {1.0};
    RolloutResult r = rollout(blowup, std::span<const double>(x0, 1), 10);
    CHECK(r.diverged);
    REQUIRE(r.states.rows() == 3);  // 3, 9, 27; the next step overflows
    CHECK(r.states(2, 0) == 27.0);
}

TEST_CASE("network rollout holds a fixed point of the identity net") {
    GatedKan net = identity_net();
    double x0[2] = {0.3, -0.7};
    RolloutResult r = rollout(net, std::span<const double>(x0, 2), 5);
    CHECK_FALSE(r.diverged);
    REQUIRE(r.states.rows() == 5);
    for (std::size_t k = 0; k < 5; ++k) {
        CHECK(r.states(k, 0) == doctest::Approx(0.3).epsilon(1e-12));
        CHECK(r.states(k, 1) == doctest::Approx(-0.7).epsilon(1e-12));
    }
}

TEST_CASE("network rollout rejects shape mismatches") {
    GatedKan net = identity_net();
    double wide[3] = {0.0, 0.0, 0.0};
    CHECK_THROWS_AS(rollout(net, std::span<const double>(wide, 3), 2), std::invalid_argument);

    Rng rng(3);
    GatedKan taller = GatedKan::init(KanShape::sums({2, 3}, false), rng, 20.0, false, false);
    double x0[2] = {0.1, 0.2};
    CHECK_THROWS_AS(rollout(taller, std::span<const double>(x0, 2), 2), std::invalid_argument);
}

TEST_CASE("network rollout flags an internal blow-up as divergence") {
    GatedKan net = identity_net();
    // phi(x) = 1000 silu(x) on the diagonal: each pass multiplies the state
    // by roughly a thousand until the forward pass overflows its guard.
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            SplineActivation& act = net.edges[0][static_cast<std::size_t>(i * 2 + j)];
            act.w_b = (i == j) ? 1000.0 : 0.0;
            act.w_s = 0.0;
        }
    }
    ++net.revision;
    double x0[2] = {1.0, 1.0};
    RolloutResult r = rollout(net, std::span<const double>(x0, 2), 50);
    CHECK(r.diverged);
    CHECK(r.states.rows() < 50);
    CHECK(r.states.rows() >= 1);
    for (std::size_t k = 0; k < r.states.rows(); ++k)
        CHECK(std::isfinite(r.states(k, 0)));
}

TEST_CASE("multistep rmse is zero for the true map on its own trajectory") {
    IkedaSpec spec;
    spec.n_train = 50;
    spec.n_test = 200;
    Problem p = gen_ikeda(spec);

    StepFn step = [&](const double* s, double* n) { ikeda_step(spec.mu, s, n); };
    bool diverged = true;
    CHECK(multistep_rmse(step, p.test_x, 100, &diverged) == 0.0);
    CHECK_FALSE(diverged);
}

TEST_CASE("multistep rmse of a frozen-state model matches a direct oracle") {
    Matrix traj = from_rows(
        {{1.0, 2.0}, {1.5, 1.0}, {0.5, 2.5}, {2.0, 2.0}, {1.0, 0.0}, {3.0, 1.0}});
    StepFn freeze = [](const double* s, double* n) {
        n[0] = s[0];
        n[1] = s[1];
    };
    const int horizon = 5;
    double ss = 0.0;
    for (int r = 1; r <= horizon; ++r)
        for (int c = 0; c < 2; ++c) {
            double d = traj(0, static_cast<std::size_t>(c)) -
                       traj(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
            ss += d * d;
        }
    double expect = std::sqrt(ss / (2.0 * horizon));
    CHECK(multistep_rmse(freeze, traj, horizon) == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("multistep rmse scores only the surviving prefix when diverging") {
    // The model triples the state and dies past 50; the reference rows sit
    // exactly one unit above the model's path, so the prefix error is 1.
    Matrix traj = from_rows({{1.0, 1.0},
                             {4.0, 4.0},
                             {10.0, 10.0},
                             {28.0, 28.0},
                             {82.0, 82.0},
                             {1.0, 1.0},
                             {1.0, 1.0}});
    StepFn triple = [](const double* s, double* n) {
        for (int c = 0; c < 2; ++c)
            n[c] = s[0] < 50.0 ? 3.0 * s[c] : std::numeric_limits<double>::quiet_NaN();
    };
    bool diverged = false;
    CHECK(multistep_rmse(triple, traj, 6, &diverged) == 1.0);
    CHECK(diverged);

    StepFn dead = [](const double*, double* n) {
        n[0] = n[1] = std::numeric_limits<double>::quiet_NaN();
    };
    CHECK(multistep_rmse(dead, traj, 6, &diverged) ==
          std::numeric_limits<double>::infinity());
    CHECK(diverged);
}

TEST_CASE("multistep rmse validates the horizon against the trajectory") {
    Matrix traj(6, 2, 0.5);
    StepFn freeze = [](const double* s, double* n) {
        n[0] = s[0];
        n[1] = s[1];
    };
    CHECK_THROWS_AS(multistep_rmse(freeze, traj, 6, nullptr), std::invalid_argument);
    CHECK_THROWS_AS(multistep_rmse(freeze, traj, 0, nullptr), std::invalid_argument);
}

TEST_CASE("network multistep rmse agrees with the step-function path") {
    GatedKan net = identity_net();
    Matrix traj = from_rows({{0.2, -0.1}, {0.4, 0.3}, {-0.5, 0.2}, {0.1, 0.1}});
    StepFn freeze = [](const double* s, double* n) {
        n[0] = s[0];
        n[1] = s[1];
    };
    double via_net = multistep_rmse(net, traj, 3);
    double via_fn = multistep_rmse(freeze, traj, 3);
    CHECK(via_net == doctest::Approx(via_fn).epsilon(1e-12));
}

TEST_CASE("report records round-trip through the line-delimited form") {
    ExperimentReport rep;
    ReportRow a;
    a.problem = "ikeda";
    a.condition = "full";
    a.beta = 0.37;
    a.seed = 11;
    a.epochs_run = 4000;
    a.r2 = 0.99987;
    a.rmse_1step = 0.0042;
    a.rmse_multistep = 1.25;
    a.multistep_diverged = true;
    a.trunk_active = 14;
    a.fc_active = 2;
    a.sparsity_pct = 75.0;
    a.config_hash = "deadbeef";
    ReportRow b;
    b.problem = "F7";
    b.condition = "baseline";
    b.seed = 3;
    b.epochs_run = 10000;
    b.r2 = 0.9999;
    b.rmse_1step = 0.001;
    b.status = "failed";
    rep.rows = {a, b};

    TempFile f("report.jsonl");
    write_report_records(f.path, rep);

    std::ifstream in(f.path);
    std::string line;
    REQUIRE(std::getline(in, line));
    nlohmann::json ja = nlohmann::json::parse(line);
    CHECK(ja["problem"] == "ikeda");
    CHECK(ja["condition"] == "full");
    CHECK(ja["beta"].get<double>() == 0.37);
    CHECK(ja["seed"].get<std::uint64_t>() == 11);
    CHECK(ja["epochs_run"] == 4000);
    CHECK(ja["r2"].get<double>() == 0.99987);
    CHECK(ja["rmse_multistep"].get<double>() == 1.25);
    CHECK(ja["multistep_diverged"] == true);
    CHECK(ja["trunk_active"] == 14);
    CHECK(ja["fc_active"] == 2);
    CHECK(ja["sparsity_pct"].get<double>() == 75.0);
    CHECK(ja["status"] == "ok");
    CHECK(ja["config_hash"] == "deadbeef");

    REQUIRE(std::getline(in, line));
    nlohmann::json jb = nlohmann::json::parse(line);
    CHECK(jb["rmse_multistep"].is_null());  // static problem
    CHECK_FALSE(jb.contains("multistep_diverged"));
    CHECK(jb["status"] == "failed");
    CHECK_FALSE(std::getline(in, line));
}

TEST_CASE("text report lays out one aligned row per cell") {
    ExperimentReport rep;
    ReportRow a;
    a.problem = "ecosystem";
    a.condition = "gates_only";
    a.beta = 0.01;
    a.seed = 7;
    a.epochs_run = 15000;
    a.r2 = 0.9912;
    a.rmse_1step = 0.0333;
    a.rmse_multistep = 0.21;
    a.multistep_diverged = true;
    a.trunk_active = 9;
    a.fc_active = 0;
    a.sparsity_pct = 66.7;
    ReportRow b;
    b.problem = "F1";
    b.condition = "fc_only";
    b.seed = 1;
    b.epochs_run = 100;
    b.r2 = 1.0;
    b.rmse_1step = 0.0;
    rep.rows = {a, b};

    TempFile f("report.txt");
    write_report_text(f.path, rep);
    std::string text = f.read();

    std::istringstream lines(text);
    std::string header, rule, row1, row2, extra;
    REQUIRE(std::getline(lines, header));
    REQUIRE(std::getline(lines, rule));
    REQUIRE(std::getline(lines, row1));
    REQUIRE(std::getline(lines, row2));
    CHECK_FALSE(std::getline(lines, extra));

    CHECK(header.find("problem") == 0);
    CHECK(header.find("rmse_ms") != std::string::npos);
    CHECK(rule.find_first_not_of('-') == std::string::npos);
    CHECK(rule.size() >= header.size());
    CHECK(row1.find("ecosystem") == 0);
    CHECK(row1.find("0.21*") != std::string::npos);  // diverged marker
    CHECK(row2.find("F1") == 0);
    CHECK(row2.find("--") != std::string::npos);  // no multistep column value
    // The condition column starts at the same offset in every body row.
    CHECK(row1.find("gates_only") == row2.find("fc_only"));
}

TEST_CASE("report writers reject unwritable paths") {
    ExperimentReport rep;
    CHECK_THROWS_AS(write_report_text("/nonexistent_dir/r.txt", rep), std::runtime_error);
    CHECK_THROWS_AS(write_report_records("/nonexistent_dir/r.jsonl", rep), std::runtime_error);
}
