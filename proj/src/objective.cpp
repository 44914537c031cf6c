#include "sparsekan/objective.hpp"

#include <cmath>
#include <stdexcept>

namespace sparsekan {

namespace {

// Node-cost index for (layer m in 1..L, node j): outputs are included, unlike
// the hidden-only ngate bank.
int node_cost_offset(const KanShape& shape, int m) {
    int off = 0;
    for (int k = 1; k < m; ++k) off += shape.widths[static_cast<std::size_t>(k)];
    return off;
}

int node_cost_count(const KanShape& shape) {
    int n = 0;
    for (std::size_t m = 1; m < shape.widths.size(); ++m) n += shape.widths[m];
    return n;
}

double bic_weight(const MdlConfig& cfg) {
    if (cfg.n_train < 2)
        throw std::invalid_argument("objective: n_train must be >= 2 for the log(n)/n weight");
    double n = static_cast<double>(cfg.n_train);
    return cfg.beta * std::log(n) / n;
}

}  // namespace

void MdlConfig::validate_for(const GatedKan& net) const {
    if (beta < 0.0 || !std::isfinite(beta))
        throw std::invalid_argument("MdlConfig: beta must be finite and >= 0");
    if (!edge_costs.empty() && edge_costs.size() != static_cast<std::size_t>(net.edge_count()))
        throw std::invalid_argument("MdlConfig: edge_costs must cover every edge exactly once");
    if (!node_costs.empty() &&
        node_costs.size() != static_cast<std::size_t>(node_cost_count(net.shape)))
        throw std::invalid_argument("MdlConfig: node_costs must cover every node in layers 1..L");
    for (double c : edge_costs)
        if (c < 0.0 || !std::isfinite(c)) throw std::invalid_argument("MdlConfig: negative edge cost");
    for (double c : node_costs)
        if (c < 0.0 || !std::isfinite(c)) throw std::invalid_argument("MdlConfig: negative node cost");
}

double data_loss(const Matrix& pred, const Matrix& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw std::invalid_argument("data_loss: prediction and target shapes differ");
    if (pred.rows() == 0) throw std::invalid_argument("data_loss: empty batch");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.data().size(); ++i) {
        double d = pred.data()[i] - target.data()[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.rows());
}

double complexity_loss(const GatedKan& net, const MdlConfig& cfg) {
    cfg.validate_for(net);
    const KanShape& shape = net.shape;
    const int L = shape.depth();
    auto edge_cost = [&](int gid) {
        return cfg.edge_costs.empty() ? 1.0 : cfg.edge_costs[static_cast<std::size_t>(gid)];
    };
    auto node_cost = [&](int m, int j) {
        return cfg.node_costs.empty()
                   ? 1.0
                   : cfg.node_costs[static_cast<std::size_t>(node_cost_offset(shape, m) + j)];
    };

    double total = 0.0;
    for (int l = 0; l < L; ++l) {
        const int in_w = shape.layer_input_width(l);
        const int out_w = shape.widths[static_cast<std::size_t>(l + 1)];
        const int off = net.edge_offset(l);
        for (int j = 0; j < out_w; ++j) {
            double inner = node_cost(l + 1, j);
            for (int i = 0; i < in_w; ++i) {
                int gid = off + i * out_w + j;
                inner += expected_open_one(net.egates.params,
                                           net.egates.logits[static_cast<std::size_t>(gid)]) *
                         edge_cost(gid);
            }
            double ez_node = 1.0;
            if (l + 1 < L && net.ngates_enabled)
                ez_node = expected_open_one(
                    net.ngates.params,
                    net.ngates.logits[static_cast<std::size_t>(net.hidden_node_offset(l + 1) + j)]);
            total += ez_node * inner;
        }
    }
    return total;
}

double total_loss(const Matrix& pred, const Matrix& target, const GatedKan& net,
                  const MdlConfig& cfg) {
    return data_loss(pred, target) + bic_weight(cfg) * complexity_loss(net, cfg);
}

void add_complexity_gradients(const GatedKan& net, const MdlConfig& cfg, KanGradients& grads) {
    cfg.validate_for(net);
    const double lambda = bic_weight(cfg);
    if (lambda == 0.0) return;
    const KanShape& shape = net.shape;
    const int L = shape.depth();
    auto edge_cost = [&](int gid) {
        return cfg.edge_costs.empty() ? 1.0 : cfg.edge_costs[static_cast<std::size_t>(gid)];
    };
    auto node_cost = [&](int m, int j) {
        return cfg.node_costs.empty()
                   ? 1.0
                   : cfg.node_costs[static_cast<std::size_t>(node_cost_offset(shape, m) + j)];
    };

    for (int l = 0; l < L; ++l) {
        const int in_w = shape.layer_input_width(l);
        const int out_w = shape.widths[static_cast<std::size_t>(l + 1)];
        const int off = net.edge_offset(l);
        for (int j = 0; j < out_w; ++j) {
            double ez_node = 1.0;
            int hid = -1;
            if (l + 1 < L && net.ngates_enabled) {
                hid = net.hidden_node_offset(l + 1) + j;
                ez_node = expected_open_one(net.ngates.params,
                                            net.ngates.logits[static_cast<std::size_t>(hid)]);
            }
            double inner = node_cost(l + 1, j);
            for (int i = 0; i < in_w; ++i) {
                int gid = off + i * out_w + j;
                double alpha = net.egates.logits[static_cast<std::size_t>(gid)];
                inner += expected_open_one(net.egates.params, alpha) * edge_cost(gid);
                if (net.egates.trainable)
                    grads.egate[static_cast<std::size_t>(gid)] +=
                        lambda * ez_node * edge_cost(gid) *
                        expected_open_grad_one(net.egates.params, alpha);
            }
            if (hid >= 0 && net.ngates.trainable)
                grads.ngate[static_cast<std::size_t>(hid)] +=
                    lambda * inner *
                    expected_open_grad_one(net.ngates.params,
                                           net.ngates.logits[static_cast<std::size_t>(hid)]);
        }
    }
}

}  // namespace sparsekan
