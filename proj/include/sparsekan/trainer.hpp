#ifndef SPARSEKAN_TRAINER_HPP
#define SPARSEKAN_TRAINER_HPP

#include "sparsekan/network.hpp"
#include "sparsekan/objective.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sparsekan {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First and second moment estimates, mirroring the trainable parameter set.
struct AdamState {
    KanGradients m;
    KanGradients v;
    long step = 0;

    static AdamState zeros_like(const GatedKan& net);
};

// One bias-corrected update over every trainable parameter (spline coeffs,
// w_b, w_s, and the logits of trainable gate banks). Bumps net.revision.
void adam_step(GatedKan& net, const KanGradients& grads, AdamState& state, double lr,
               const AdamConfig& cfg);

struct GridUpdateSchedule {
    int count = 10;
    int within_epochs = 50;
};

// 1-indexed epochs at which grids refresh: `count` epochs evenly spaced over
// [1, within_epochs], starting at 1, truncated to the run length.
std::vector<int> grid_update_epochs(const GridUpdateSchedule& s, int epochs);

struct EarlyStopConfig {
    bool enabled = true;
    double decisiveness_threshold = 0.99;
    int patience = -1;  // -1 derives min(500, ceil(0.05 * epochs))
};

struct TrainConfig {
    int epochs = 0;
    int batch_size = 128;
    double lr = 1e-3;
    double beta = 0.0;
    int warmup_epochs = 200;     // beta held at 0 through this epoch
    int fc_warmup_epochs = 100;  // forward-connection gates stay put this much longer
    GridUpdateSchedule grid_updates;
    EarlyStopConfig early_stop;
    std::uint64_t seed = 0;
    AdamConfig adam;

    void validate() const;
    int effective_patience() const;
};

// One cell of the 2x2 experiment grid.
struct ConditionSpec {
    bool use_fc = false;
    bool use_gates = false;
    double beta = 0.0;
    double gate_init_logit = -1.0;

    static ConditionSpec baseline();
    static ConditionSpec fc_only();
    static ConditionSpec gates_only(double beta, double gate_init_logit = -1.0);
    static ConditionSpec full(double beta, double gate_init_logit = -1.0);
};

// Fresh all-sum network for a condition. Without gates every logit sits
// frozen at 20 (saturated open) and node gates are disabled.
GatedKan condition_net(const std::vector<int>& widths, const ConditionSpec& cond, Rng& rng,
                       int grid_intervals = 10, int spline_degree = 3);

struct EpochRecord {
    int epoch = 0;  // 1-indexed
    double data = 0.0;
    double complexity = 0.0;  // unweighted expected-L0 value
    double total = 0.0;       // with the beta in force that epoch
    double decisiveness = 0.0;
    int trunk_active = 0;
    int fc_active = 0;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    bool early_stopped = false;
};

// Refits every edge grid to the values the current parameters produce on x,
// one edge layer at a time so earlier refits feed later layers. Deterministic:
// gate expectations stand in for samples.
void refresh_grids(GatedKan& net, const Matrix& x);

// Mean of max(p, 1-p) over every gate in the network (node bank included
// when enabled). Frozen banks count too; saturated logits contribute 1.
double run_decisiveness(const GatedKan& net);

// Mini-batch Adam with the warm-up, grid-update, and early-stop schedule.
// The applied beta is cond.beta once warm-up ends (always 0 when gates are
// frozen). Mutates net in place; per-epoch records come back in the history.
TrainHistory train(GatedKan& net, const Matrix& train_x, const Matrix& train_y,
                   const TrainConfig& cfg, const ConditionSpec& cond);

// CSV, one row per epoch, full round-trip precision.
void write_history(const std::string& path, const TrainHistory& history);

}  // namespace sparsekan

#endif
