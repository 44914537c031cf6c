#ifndef SPARSEKAN_EXPERIMENT_HPP
#define SPARSEKAN_EXPERIMENT_HPP

#include "sparsekan/data.hpp"
#include "sparsekan/eval.hpp"
#include "sparsekan/trainer.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace sparsekan {

// Which dataset to build. Generated problems resolve size defaults per id
// (symbolic 1024/256, dynamical 5000/1000, superconductor 1000/1000);
// file-backed problems need the csv paths.
struct ProblemSpec {
    std::string id;         // anecdote, nguyen-f1..f10, ikeda, ecosystem,
                            // concrete, superconductor, csv
    int n_train = -1;       // -1 keeps the per-problem default
    int n_test = -1;
    std::uint64_t seed = 1; // data seed, independent of training seeds
    std::string csv;        // concrete / superconductor source table
    std::string train_csv;  // id == csv: pre-split dataset files
    std::string test_csv;
};

std::string normalize_problem_id(const std::string& raw);
Problem make_problem(const ProblemSpec& spec);

// One experiment: a problem, an architecture, the condition grid, and the
// training recipe shared by every cell.
struct RunConfig {
    ProblemSpec problem;
    std::vector<int> widths;
    std::vector<std::string> conditions;  // subset of baseline/fc/gates/full
    std::vector<double> betas;            // swept by the gated conditions
    double gate_init = -1.0;
    TrainConfig train;       // per-cell seed and beta are filled in later
    bool init_grid_fit = false;  // refit grids to the training inputs once,
                                 // before the first epoch
    int multistep = 500;     // rollout horizon; 0 disables, clamped to data
    std::string out_dir;
    std::vector<std::uint64_t> seeds;

    void validate() const;
};

// Flat key=value text, '#' comments. Unknown or duplicate keys are errors;
// see the usage text for the key list.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// The effective configuration serialized in a fixed key order. Seeds and the
// output directory stay out so reruns elsewhere or with more seeds hash the
// same; everything that shapes a cell's computation is in.
std::string canonical_config(const RunConfig& cfg);
// FNV-1a of canonical_config, 16 hex digits.
std::string config_hash(const RunConfig& cfg);

// One (condition, beta, seed) cell of the grid.
struct CellSpec {
    std::string condition;  // display name: baseline, fc_only, gates_only, full
    ConditionSpec spec;
    std::uint64_t seed = 0;

    std::string file_stem() const;  // e.g. full_b0.01_s2
};

std::vector<CellSpec> expand_cells(const RunConfig& cfg);

// Test-set metrics under thresholded inference gates.
struct EvalSummary {
    double r2 = 0.0;
    double rmse_1step = 0.0;
    double rmse_multistep = std::numeric_limits<double>::quiet_NaN();
    bool multistep_diverged = false;
    int multistep_used = 0;  // horizon after clamping; 0 when skipped
    ActiveCounts active;
};

EvalSummary evaluate_network(const GatedKan& net, const Problem& problem, int multistep);

struct CellResult {
    ReportRow row;
    GatedKan net;
    TrainHistory history;
};

// Builds the condition's network (init stream 2 of the cell seed), trains it
// on the problem, and scores the test set. Throws on any failure.
CellResult run_cell(const RunConfig& cfg, const Problem& problem, const CellSpec& cell,
                    const std::string& hash);

// Single-row JSON persistence for resumable cells.
ReportRow report_row_from_json(const std::string& text);

// Runs every cell, flushing <out_dir>/cells/<stem>.json as each finishes and
// skipping cells whose record already matches this config hash (unless
// force). Failed cells get status=failed rows and the run continues. Writes
// report.txt and report.jsonl at the end. Returns 0, or 1 if any cell failed.
int run_experiment(const RunConfig& cfg, bool force, int jobs, std::ostream& log);

}  // namespace sparsekan

#endif
