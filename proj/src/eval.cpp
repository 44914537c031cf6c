#include "sparsekan/eval.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <stdexcept>

namespace sparsekan {

// ============================================================================
// Scalar metrics
// ============================================================================

double r_squared(const Matrix& pred, const Matrix& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw std::invalid_argument("r_squared: shape mismatch");
    if (target.rows() < 2) throw std::invalid_argument("r_squared: need at least two rows");

    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t c = 0; c < target.cols(); ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < target.rows(); ++r) mean += target(r, c);
        mean /= static_cast<double>(target.rows());
        for (std::size_t r = 0; r < target.rows(); ++r) {
            const double res = pred(r, c) - target(r, c);
            const double dev = target(r, c) - mean;
            ss_res += res * res;
            ss_tot += dev * dev;
        }
    }
    if (ss_tot == 0.0) throw std::domain_error("r_squared: constant target");
    return 1.0 - ss_res / ss_tot;
}

double rmse(const Matrix& pred, const Matrix& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw std::invalid_argument("rmse: shape mismatch");
    if (pred.data().empty()) throw std::invalid_argument("rmse: empty input");
    double ss = 0.0;
    for (std::size_t i = 0; i < pred.data().size(); ++i) {
        const double d = pred.data()[i] - target.data()[i];
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(pred.data().size()));
}

// ============================================================================
// Closed-loop rollouts
// ============================================================================

RolloutResult rollout(const StepFn& step, std::span<const double> x0, int steps) {
    if (steps < 0) throw std::invalid_argument("rollout: negative step count");
    const std::size_t dim = x0.size();
    if (dim == 0) throw std::invalid_argument("rollout: empty state");

    RolloutResult out;
    out.states.resize(static_cast<std::size_t>(steps), dim);
    std::vector<double> cur(x0.begin(), x0.end());
    std::vector<double> nxt(dim);
    int done = 0;
    for (int k = 0; k < steps; ++k) {
        step(cur.data(), nxt.data());
        bool finite = true;
        for (double v : nxt)
            if (!std::isfinite(v)) finite = false;
        if (!finite) {
            out.diverged = true;
            break;
        }
        for (std::size_t c = 0; c < dim; ++c) out.states(static_cast<std::size_t>(k), c) = nxt[c];
        cur = nxt;
        ++done;
    }
    if (done < steps) {
        Matrix trimmed(static_cast<std::size_t>(done), dim);
        for (std::size_t r = 0; r < trimmed.rows(); ++r)
            for (std::size_t c = 0; c < dim; ++c) trimmed(r, c) = out.states(r, c);
        out.states = std::move(trimmed);
    }
    return out;
}

RolloutResult rollout(const GatedKan& net, std::span<const double> x0, int steps) {
    if (net.shape.input_dim() != net.shape.output_dim())
        throw std::invalid_argument("rollout: network is not a state map");
    if (x0.size() != static_cast<std::size_t>(net.shape.input_dim()))
        throw std::invalid_argument("rollout: state width does not match the network");

    const NetGates gates = thresholded_gates(net);
    auto cache = std::make_shared<ForwardCache>();
    Matrix row(1, x0.size());
    StepFn step = [&net, gates, cache, row](const double* state, double* next) mutable {
        for (std::size_t c = 0; c < row.cols(); ++c) row(0, c) = state[c];
        try {
            forward(net, row, gates, *cache);
        } catch (const std::runtime_error&) {
            // Blow-ups inside the net count as divergence, same as a
            // non-finite output.
            for (std::size_t c = 0; c < row.cols(); ++c)
                next[c] = std::numeric_limits<double>::quiet_NaN();
            return;
        }
        for (std::size_t c = 0; c < row.cols(); ++c) next[c] = cache->output()(0, c);
    };
    return rollout(step, x0, steps);
}

namespace {

double multistep_core(const RolloutResult& roll, const Matrix& trajectory, bool* diverged) {
    if (diverged) *diverged = roll.diverged;
    const std::size_t scored = roll.states.rows();
    if (scored == 0) return std::numeric_limits<double>::infinity();
    Matrix truth(scored, trajectory.cols());
    for (std::size_t r = 0; r < scored; ++r)
        for (std::size_t c = 0; c < trajectory.cols(); ++c) truth(r, c) = trajectory(r + 1, c);
    return rmse(roll.states, truth);
}

void require_trajectory(const Matrix& trajectory, int horizon) {
    if (horizon < 1) throw std::invalid_argument("multistep_rmse: horizon must be positive");
    if (trajectory.rows() <= static_cast<std::size_t>(horizon))
        throw std::invalid_argument("multistep_rmse: trajectory no longer than the horizon");
}

}  // namespace

double multistep_rmse(const StepFn& step, const Matrix& trajectory, int horizon,
                      bool* diverged) {
    require_trajectory(trajectory, horizon);
    RolloutResult roll = rollout(step, std::span<const double>(trajectory.row_ptr(0),
                                                               trajectory.cols()),
                                 horizon);
    return multistep_core(roll, trajectory, diverged);
}

double multistep_rmse(const GatedKan& net, const Matrix& trajectory, int horizon,
                      bool* diverged) {
    require_trajectory(trajectory, horizon);
    RolloutResult roll = rollout(net, std::span<const double>(trajectory.row_ptr(0),
                                                              trajectory.cols()),
                                 horizon);
    return multistep_core(roll, trajectory, diverged);
}

// ============================================================================
// Report output
// ============================================================================

namespace {

std::string fmt(const char* spec, double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

std::vector<std::string> row_cells(const ReportRow& r) {
    std::string ms = std::isnan(r.rmse_multistep) ? "--" : fmt("%.4g", r.rmse_multistep);
    if (r.multistep_diverged) ms += "*";
    return {r.problem,
            r.condition,
            fmt("%g", r.beta),
            std::to_string(r.seed),
            std::to_string(r.epochs_run),
            fmt("%.4f", r.r2),
            fmt("%.4g", r.rmse_1step),
            ms,
            std::to_string(r.trunk_active) + "+" + std::to_string(r.fc_active),
            fmt("%.1f", r.sparsity_pct),
            r.status};
}

}  // namespace

void write_report_text(const std::string& path, const ExperimentReport& report) {
    static const std::vector<std::string> head = {"problem", "condition", "beta",   "seed",
                                                  "epochs",  "r2",        "rmse1",  "rmse_ms",
                                                  "active",  "sparsity%", "status"};
    std::vector<std::vector<std::string>> table = {head};
    for (const ReportRow& r : report.rows) table.push_back(row_cells(r));

    std::vector<std::size_t> width(head.size(), 0);
    for (const auto& row : table)
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());

    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_report_text: cannot open " + path);
    for (std::size_t i = 0; i < table.size(); ++i) {
        std::string line;
        for (std::size_t c = 0; c < table[i].size(); ++c) {
            if (c) line += "  ";
            line += table[i][c];
            line.append(width[c] - table[i][c].size(), ' ');
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out << line << "\n";
        if (i == 0) {
            std::size_t total = 0;
            for (std::size_t w : width) total += w;
            out << std::string(total + 2 * (width.size() - 1), '-') << "\n";
        }
    }
    if (!out) throw std::runtime_error("write_report_text: write failed for " + path);
}

std::string report_row_json(const ReportRow& r) {
    nlohmann::json j{{"problem", r.problem},
                     {"condition", r.condition},
                     {"beta", r.beta},
                     {"seed", r.seed},
                     {"epochs_run", r.epochs_run},
                     {"r2", r.r2},
                     {"rmse_1step", r.rmse_1step},
                     {"trunk_active", r.trunk_active},
                     {"fc_active", r.fc_active},
                     {"sparsity_pct", r.sparsity_pct},
                     {"status", r.status},
                     {"config_hash", r.config_hash}};
    if (std::isnan(r.rmse_multistep)) {
        j["rmse_multistep"] = nullptr;
    } else {
        j["rmse_multistep"] = r.rmse_multistep;
        j["multistep_diverged"] = r.multistep_diverged;
    }
    return j.dump();
}

void write_report_records(const std::string& path, const ExperimentReport& report) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_report_records: cannot open " + path);
    for (const ReportRow& r : report.rows) out << report_row_json(r) << "\n";
    if (!out) throw std::runtime_error("write_report_records: write failed for " + path);
}

}  // namespace sparsekan
