#ifndef SPARSEKAN_NETWORK_HPP
#define SPARSEKAN_NETWORK_HPP

#include "sparsekan/gate.hpp"
#include "sparsekan/matrix.hpp"
#include "sparsekan/rng.hpp"
#include "sparsekan/spline.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sparsekan {

enum class NodeKind { sum, product };
enum class EdgeKind { trunk, fc };

// Shape vector [n_0..n_L] plus per-node aggregation kinds and the
// forward-connection flag. node_kinds[m] describes layer m+1, so
// node_kinds.size() == L and node_kinds[m].size() == widths[m+1].
struct KanShape {
    std::vector<int> widths;
    std::vector<std::vector<NodeKind>> node_kinds;
    bool forward_connections = false;

    void validate() const;
    int depth() const { return static_cast<int>(widths.size()) - 1; }
    int input_dim() const { return widths.front(); }
    int output_dim() const { return widths.back(); }
    // Width of the (possibly concatenated) input feeding edge layer l.
    int layer_input_width(int l) const;
    int hidden_node_count() const;

    static KanShape sums(std::vector<int> widths, bool forward_connections);
};

struct EdgeCounts {
    int trunk = 0;
    int fc = 0;
    int total() const { return trunk + fc; }
};

EdgeCounts edge_counts(const KanShape& shape);

// The full gated network. Edge layer l connects the concatenated input
// [x^(0)..x^(l)] (just x^(l) without forward connections) to layer l+1;
// within a layer, edge (source i, target j) sits at index i*n_{l+1}+j, and
// global edge ids run layer-major in that order. Structural invariant: all
// edges share one spline degree, and edges leaving the same source in the
// same layer share an identical grid (so one basis evaluation serves them
// all). validate() enforces both.
struct GatedKan {
    KanShape shape;
    std::vector<std::vector<SplineActivation>> edges;  // [layer][i*out_w + j]
    GateBank egates;                                   // one logit per edge, global order
    GateBank ngates;                                   // one logit per hidden node; empty if disabled
    bool ngates_enabled = false;
    std::uint64_t revision = 0;  // bump after any parameter change; caches carry the stamp

    void validate() const;
    int edge_count() const;
    int edge_offset(int layer) const;  // global id of (layer, 0, 0)
    EdgeKind kind(int layer, int source) const;
    int hidden_node_offset(int layer) const;  // global hidden id of (layer, 0), layer in 1..L-1

    // Fresh network: grids on [-1,1], coeffs ~ Normal(0, 0.1^2), w_b = w_s = 1,
    // every gate logit set to gate_init_logit.
    static GatedKan init(const KanShape& shape, Rng& rng, double gate_init_logit,
                         bool gates_trainable, bool enable_ngates, int grid_intervals = 10,
                         int spline_degree = 3, GateParams params = GateParams{});
};

// Gate values for one forward pass, always at full length: one entry per edge
// and one per hidden node (ones when a bank is frozen or absent).
struct NetGates {
    std::vector<GateSample> edge;
    std::vector<GateSample> node;
};

NetGates all_ones_gates(const GatedKan& net);
// Builds gate samples from explicit noise vectors (full length, one entry per
// edge/hidden node). Frozen banks ignore their noise and stay at exact ones.
NetGates gates_from_u(const GatedKan& net, std::span<const double> u_edge,
                      std::span<const double> u_node);
// Draws one u per trainable gate (edges first in global order, then nodes);
// frozen banks get exact ones and consume no randomness.
NetGates sampled_gates(const GatedKan& net, Rng& rng);
NetGates thresholded_gates(const GatedKan& net);
NetGates expected_gates(const GatedKan& net);

// Everything backward needs, plus the network output. Buffers are reused
// across calls when the same cache object is passed again.
struct ForwardCache {
    std::uint64_t revision = static_cast<std::uint64_t>(-1);
    std::size_t batch = 0;
    NetGates gates;
    std::vector<Matrix> node_out;  // L+1 matrices; node_out[0] is the input
    std::vector<Matrix> node_pre;  // L matrices; pre-ngate aggregate of layer l+1
    // Per edge layer, per (row, source-slot): basis window, its derivative,
    // window start index, SiLU value and derivative of the source value.
    std::vector<Matrix> basis;
    std::vector<Matrix> dbasis;
    std::vector<std::vector<int>> first;
    std::vector<Matrix> silu_v;
    std::vector<Matrix> silu_d;
    // Per edge layer, per (row, in-layer edge index): spline sum, its input
    // derivative, and the full activation value.
    std::vector<Matrix> ssum;
    std::vector<Matrix> dssum;
    std::vector<Matrix> phi;

    const Matrix& output() const { return node_out.back(); }
};

// Evaluates the network on a batch. Throws on non-finite input, gate vectors
// of the wrong length, or intermediates blowing past 1e12 (the error names
// the layer and node).
void forward(const GatedKan& net, const Matrix& x, const NetGates& gates, ForwardCache& cache);

struct KanGradients {
    std::vector<std::vector<double>> coeffs;  // per edge, global order
    std::vector<double> w_b;
    std::vector<double> w_s;
    std::vector<double> egate;  // per edge logit
    std::vector<double> ngate;  // per hidden node logit

    static KanGradients zeros_like(const GatedKan& net);
};

// Reverse-mode pass. upstream is dLoss/dOutput, batch x n_L. The cache must
// come from a forward call on the same network revision, else invalid-state.
void backward(const GatedKan& net, const ForwardCache& cache, const Matrix& upstream,
              KanGradients& out);

struct ActiveCounts {
    int trunk = 0;
    int fc = 0;
    double sparsity_pct = 0.0;
};

// Raw thresholded gate states: an edge counts as active iff its egate is
// open and both hidden endpoints' ngates (when present) are open. No
// reachability analysis.
ActiveCounts active_counts(const GatedKan& net);

// The same activity rule per edge, 0/1 in global edge order.
std::vector<int> active_edge_mask(const GatedKan& net);

}  // namespace sparsekan

#endif
