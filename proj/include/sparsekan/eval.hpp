#ifndef SPARSEKAN_EVAL_HPP
#define SPARSEKAN_EVAL_HPP

#include "sparsekan/network.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace sparsekan {

// Pooled coefficient of determination: 1 - SS_res/SS_tot with residuals and
// per-column mean deviations summed over every entry. Needs >= 2 rows and a
// non-constant target (else domain_error).
double r_squared(const Matrix& pred, const Matrix& target);

// Root mean squared error over all entries.
double rmse(const Matrix& pred, const Matrix& target);

using StepFn = std::function<void(const double* state, double* next)>;

struct RolloutResult {
    Matrix states;  // one row per completed step; short when diverged
    bool diverged = false;
};

// Closed-loop iteration: feeds each prediction back as the next input and
// returns the predicted states after x0. A non-finite (or overflowing)
// prediction truncates the trajectory and sets the flag.
RolloutResult rollout(const StepFn& step, std::span<const double> x0, int steps);
// The same loop driven by the network under thresholded inference gates.
// Requires output_dim == input_dim.
RolloutResult rollout(const GatedKan& net, std::span<const double> x0, int steps);

// Rolls out from trajectory row 0 and scores the predictions against rows
// 1..horizon, pooled over every entry. Divergence shrinks the scored window
// (reported via *diverged when given); no finite steps at all gives +inf.
// The trajectory must be longer than the horizon.
double multistep_rmse(const StepFn& step, const Matrix& trajectory, int horizon,
                      bool* diverged = nullptr);
double multistep_rmse(const GatedKan& net, const Matrix& trajectory, int horizon,
                      bool* diverged = nullptr);

// ============================================================================
// Experiment reports
// ============================================================================

struct ReportRow {
    std::string problem;
    std::string condition;
    double beta = 0.0;
    std::uint64_t seed = 0;
    int epochs_run = 0;
    double r2 = 0.0;
    double rmse_1step = 0.0;
    // NaN marks "not applicable" (static problems).
    double rmse_multistep = std::numeric_limits<double>::quiet_NaN();
    bool multistep_diverged = false;
    int trunk_active = 0;
    int fc_active = 0;
    double sparsity_pct = 0.0;
    std::string status = "ok";
    std::string config_hash;
};

struct ExperimentReport {
    std::vector<ReportRow> rows;
};

// One row as a single-line JSON object; non-finite metrics become null and
// rmse_multistep is null for static problems.
std::string report_row_json(const ReportRow& row);
// Aligned plain-text table, one row per cell.
void write_report_text(const std::string& path, const ExperimentReport& report);
// Machine-readable: one JSON object per line with the ReportRow fields.
void write_report_records(const std::string& path, const ExperimentReport& report);

}  // namespace sparsekan

#endif
