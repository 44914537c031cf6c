#ifndef SPARSEKAN_OBJECTIVE_HPP
#define SPARSEKAN_OBJECTIVE_HPP

#include "sparsekan/network.hpp"

namespace sparsekan {

// Weighting and optional per-element costs for the description-length term.
// Cost vectors may be left empty for unit costs. edge_costs follows the global
// edge order; node_costs covers every node in layers 1..L (outputs included,
// since their cost term survives even though output nodes carry no gate),
// layer-major.
struct MdlConfig {
    double beta = 0.0;
    std::size_t n_train = 0;
    std::vector<double> edge_costs;
    std::vector<double> node_costs;

    void validate_for(const GatedKan& net) const;
};

// Mean over rows of the squared Euclidean residual norm.
double data_loss(const Matrix& pred, const Matrix& target);

// Expected-L0 surrogate: sum over layers and target nodes of
// E[z_node]*(node_cost + sum_i E[z_edge]*edge_cost), with expectation 1 for
// output nodes and wherever ngates are disabled. Uses closed-form expected
// openness, never samples.
double complexity_loss(const GatedKan& net, const MdlConfig& cfg);

// data + beta*(ln n / n)*complexity. Requires n_train >= 2.
double total_loss(const Matrix& pred, const Matrix& target, const GatedKan& net,
                  const MdlConfig& cfg);

// Adds beta*(ln n / n)*d(complexity)/d(logit) for every trainable gate onto
// an existing gradient set (typically one produced by backward()).
void add_complexity_gradients(const GatedKan& net, const MdlConfig& cfg, KanGradients& grads);

}  // namespace sparsekan

#endif
