#ifndef SPARSEKAN_DATA_HPP
#define SPARSEKAN_DATA_HPP

#include "sparsekan/matrix.hpp"
#include "sparsekan/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sparsekan {

enum class ProblemKind { static_map, dynamical };

// Per-feature affine map x -> (x - mean) / std, recorded so inputs can be
// mapped back. Empty vectors mean the problem is fed raw.
struct Normalization {
    std::vector<double> mean;
    std::vector<double> std;

    bool active() const { return !mean.empty(); }
    void apply(Matrix& x) const;
    void invert(Matrix& x) const;
};

struct Problem {
    std::string name;
    Matrix train_x, train_y, test_x, test_y;
    ProblemKind kind = ProblemKind::static_map;
    Normalization normalization;
    int rejected_rows = 0;  // CSV rows dropped by the loaders

    int input_dim() const { return static_cast<int>(train_x.cols()); }
    int output_dim() const { return static_cast<int>(train_y.cols()); }
    void validate() const;
};

// ============================================================================
// Closed-form targets
// ============================================================================

struct SymbolicSpec {
    std::string id;
    int dim = 1;
    double lo = -1.0;
    double hi = 1.0;
};

// The supported expression ids with their sampling domains (same range on
// every axis).
const std::vector<SymbolicSpec>& symbolic_catalog();

// Exact target value for one input point (x has spec.dim entries).
double symbolic_eval(const std::string& expr_id, const double* x);

// Uniform inputs on the catalog domain, exact targets. Train and test draws
// come from independent seeded streams.
Problem gen_symbolic(const std::string& expr_id, int n_train, int n_test, std::uint64_t seed);

// ============================================================================
// Dynamical systems
// ============================================================================

struct IkedaSpec {
    double mu = 0.9;
    double x0 = 0.1;
    double y0 = 0.1;
    int transient_discard = 1000;
    int n_train = 5000;
    int n_test = 1000;
};

void ikeda_step(double mu, const double state[2], double next[2]);

// Iterates the map, drops the transient, and splits consecutive one-step
// pairs into train then test. Orbit leaving |state| <= 1e6 is an error.
Problem gen_ikeda(const IkedaSpec& spec);

struct EcosystemSpec {
    double K = 0.98;
    double x_p = 0.4;
    double y_p = 2.009;
    double x_q = 0.08;
    double y_q = 2.876;
    double N0 = 0.16129;
    double P0 = 0.5;
    double initial[3] = {0.8, 0.2, 8.0};
    double h = 0.01;              // RK4 step
    double dt = 0.1;              // sampling interval (must be a multiple of h)
    double transient_time = 100.0;
    int n_train = 5000;
    int n_test = 1000;
};

void ecosystem_deriv(const EcosystemSpec& spec, const double state[3], double deriv[3]);
void ecosystem_rk4_step(const EcosystemSpec& spec, double h, const double state[3],
                        double next[3]);
// One sampling interval: dt/h RK4 steps. This is the map the dataset pairs
// satisfy exactly.
void ecosystem_sample_step(const EcosystemSpec& spec, const double state[3], double next[3]);

// RK4 trajectory sampled every dt after the transient, split into
// consecutive pairs. Populations dipping below -1e-9 are a step-size error.
Problem gen_ecosystem(const EcosystemSpec& spec);

// ============================================================================
// CSV
// ============================================================================

// Minimal dialect: comma separator, '.' decimal, header row required, no
// quoting. Cells come back as trimmed strings.
struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> cells;
};

Csv read_csv(const std::string& path);

// Dataset files pair inputs and targets in one table with headers
// x1..xd, y1..yk. Full round-trip precision.
void write_dataset_csv(const std::string& path, const Matrix& x, const Matrix& y);
std::pair<Matrix, Matrix> read_dataset_csv(const std::string& path);

// ============================================================================
// Tabular loaders
// ============================================================================

// Concrete compressive strength: 8 raw columns located by header keywords,
// plus water/cement, water/binder, binder, total aggregate, and log(age+1).
// Rows with non-numeric cells or a nonpositive cement/binder are dropped and
// counted. Inputs standardized on train stats; targets left in MPa. 80/20
// split by seeded permutation.
Problem load_concrete(const std::string& csv_path, std::uint64_t seed);

// Superconductor critical temperature from five named feature columns.
// Disjoint seeded train/test samples; inputs standardized; targets in K.
Problem load_superconductor(const std::string& csv_path, int n_train, int n_test,
                            std::uint64_t seed);

}  // namespace sparsekan

#endif
