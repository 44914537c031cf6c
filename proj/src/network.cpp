#include "sparsekan/network.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace sparsekan {

namespace {

constexpr double kOverflowLimit = 1e12;

// Maps a concatenated source slot to (layer block, node index within block).
struct SlotMap {
    std::vector<int> block;
    std::vector<int> node;
};

SlotMap slot_map(const KanShape& shape, int layer) {
    SlotMap m;
    int in_w = shape.layer_input_width(layer);
    m.block.resize(static_cast<std::size_t>(in_w));
    m.node.resize(static_cast<std::size_t>(in_w));
    if (!shape.forward_connections) {
        for (int i = 0; i < in_w; ++i) {
            m.block[static_cast<std::size_t>(i)] = layer;
            m.node[static_cast<std::size_t>(i)] = i;
        }
        return m;
    }
    int slot = 0;
    for (int k = 0; k <= layer; ++k)
        for (int j = 0; j < shape.widths[static_cast<std::size_t>(k)]; ++j, ++slot) {
            m.block[static_cast<std::size_t>(slot)] = k;
            m.node[static_cast<std::size_t>(slot)] = j;
        }
    return m;
}

bool same_grid(const SplineGrid& a, const SplineGrid& b) {
    return a.num_intervals == b.num_intervals && a.degree == b.degree &&
           a.domain_lo == b.domain_lo && a.domain_hi == b.domain_hi;
}

}  // namespace

// ============================================================================
// Shapes and counting
// ============================================================================

void KanShape::validate() const {
    if (widths.size() < 2) throw std::invalid_argument("KanShape: need at least input and output layers");
    for (int w : widths)
        if (w < 1) throw std::invalid_argument("KanShape: widths must be positive");
    if (node_kinds.size() != widths.size() - 1)
        throw std::invalid_argument("KanShape: node_kinds must cover layers 1..L");
    for (std::size_t m = 0; m < node_kinds.size(); ++m)
        if (node_kinds[m].size() != static_cast<std::size_t>(widths[m + 1]))
            throw std::invalid_argument("KanShape: node_kinds row does not match layer width");
}

int KanShape::layer_input_width(int l) const {
    if (!forward_connections) return widths[static_cast<std::size_t>(l)];
    int w = 0;
    for (int k = 0; k <= l; ++k) w += widths[static_cast<std::size_t>(k)];
    return w;
}

int KanShape::hidden_node_count() const {
    int n = 0;
    for (std::size_t m = 1; m + 1 < widths.size(); ++m) n += widths[m];
    return n;
}

KanShape KanShape::sums(std::vector<int> widths, bool forward_connections) {
    KanShape s;
    s.widths = std::move(widths);
    s.forward_connections = forward_connections;
    for (std::size_t m = 1; m < s.widths.size(); ++m)
        s.node_kinds.emplace_back(static_cast<std::size_t>(s.widths[m]), NodeKind::sum);
    return s;
}

EdgeCounts edge_counts(const KanShape& shape) {
    shape.validate();
    EdgeCounts c;
    for (int l = 0; l < shape.depth(); ++l) {
        int out_w = shape.widths[static_cast<std::size_t>(l + 1)];
        c.trunk += shape.widths[static_cast<std::size_t>(l)] * out_w;
        c.fc += (shape.layer_input_width(l) - shape.widths[static_cast<std::size_t>(l)]) * out_w;
    }
    return c;
}

// ============================================================================
// GatedKan structure
// ============================================================================

int GatedKan::edge_count() const {
    int n = 0;
    for (const auto& layer : edges) n += static_cast<int>(layer.size());
    return n;
}

int GatedKan::edge_offset(int layer) const {
    int off = 0;
    for (int l = 0; l < layer; ++l) off += static_cast<int>(edges[static_cast<std::size_t>(l)].size());
    return off;
}

EdgeKind GatedKan::kind(int layer, int source) const {
    int trunk_start = shape.layer_input_width(layer) - shape.widths[static_cast<std::size_t>(layer)];
    return source >= trunk_start ? EdgeKind::trunk : EdgeKind::fc;
}

int GatedKan::hidden_node_offset(int layer) const {
    int off = 0;
    for (int m = 1; m < layer; ++m) off += shape.widths[static_cast<std::size_t>(m)];
    return off;
}

void GatedKan::validate() const {
    shape.validate();
    const int L = shape.depth();
    if (static_cast<int>(edges.size()) != L)
        throw std::invalid_argument("GatedKan: edge table must have one entry per layer");
    int degree = -1;
    for (int l = 0; l < L; ++l) {
        int in_w = shape.layer_input_width(l);
        int out_w = shape.widths[static_cast<std::size_t>(l + 1)];
        const auto& layer = edges[static_cast<std::size_t>(l)];
        if (static_cast<int>(layer.size()) != in_w * out_w)
            throw std::invalid_argument("GatedKan: wrong edge count in layer " + std::to_string(l));
        for (int i = 0; i < in_w; ++i) {
            const SplineGrid& g0 = layer[static_cast<std::size_t>(i * out_w)].grid;
            for (int j = 0; j < out_w; ++j) {
                const SplineActivation& act = layer[static_cast<std::size_t>(i * out_w + j)];
                act.validate();
                if (degree < 0) degree = act.grid.degree;
                if (act.grid.degree != degree)
                    throw std::invalid_argument("GatedKan: spline degree must be uniform");
                if (!same_grid(act.grid, g0))
                    throw std::invalid_argument(
                        "GatedKan: edges sharing a source must share a grid (layer " +
                        std::to_string(l) + ", source " + std::to_string(i) + ")");
            }
        }
    }
    egates.validate();
    if (static_cast<int>(egates.logits.size()) != edge_count())
        throw std::invalid_argument("GatedKan: egate bank size must equal edge count");
    ngates.validate();
    std::size_t want_ngates =
        ngates_enabled ? static_cast<std::size_t>(shape.hidden_node_count()) : 0;
    if (ngates.logits.size() != want_ngates)
        throw std::invalid_argument("GatedKan: ngate bank size mismatch");
}

GatedKan GatedKan::init(const KanShape& shape, Rng& rng, double gate_init_logit,
                        bool gates_trainable, bool enable_ngates, int grid_intervals,
                        int spline_degree, GateParams params) {
    shape.validate();
    params.validate();
    GatedKan net;
    net.shape = shape;
    const int L = shape.depth();
    SplineGrid grid = SplineGrid::uniform(grid_intervals, spline_degree, -1.0, 1.0);
    for (int l = 0; l < L; ++l) {
        int count = shape.layer_input_width(l) * shape.widths[static_cast<std::size_t>(l + 1)];
        std::vector<SplineActivation> layer(static_cast<std::size_t>(count));
        for (auto& act : layer) {
            act.grid = grid;
            act.coeffs.resize(static_cast<std::size_t>(grid.basis_count()));
            for (auto& c : act.coeffs) c = rng.normal(0.0, 0.1);
            act.w_b = 1.0;
            act.w_s = 1.0;
        }
        net.edges.push_back(std::move(layer));
    }
    net.egates.params = params;
    net.egates.trainable = gates_trainable;
    net.egates.logits.assign(static_cast<std::size_t>(net.edge_count()), gate_init_logit);
    net.ngates.params = params;
    net.ngates.trainable = gates_trainable;
    net.ngates_enabled = enable_ngates;
    if (enable_ngates)
        net.ngates.logits.assign(static_cast<std::size_t>(shape.hidden_node_count()),
                                 gate_init_logit);
    net.validate();
    return net;
}

// ============================================================================
// Gate vector helpers
// ============================================================================

NetGates all_ones_gates(const GatedKan& net) {
    NetGates g;
    g.edge.assign(static_cast<std::size_t>(net.edge_count()), GateSample{});
    g.node.assign(static_cast<std::size_t>(net.shape.hidden_node_count()), GateSample{});
    return g;
}

NetGates gates_from_u(const GatedKan& net, std::span<const double> u_edge,
                      std::span<const double> u_node) {
    NetGates g = all_ones_gates(net);
    if (net.egates.trainable) {
        if (u_edge.size() != net.egates.logits.size())
            throw std::invalid_argument("gates_from_u: edge noise length mismatch");
        for (std::size_t e = 0; e < net.egates.logits.size(); ++e)
            g.edge[e] = sample_gate(net.egates.params, net.egates.logits[e], u_edge[e]);
    }
    if (net.ngates_enabled && net.ngates.trainable) {
        if (u_node.size() != net.ngates.logits.size())
            throw std::invalid_argument("gates_from_u: node noise length mismatch");
        for (std::size_t h = 0; h < net.ngates.logits.size(); ++h)
            g.node[h] = sample_gate(net.ngates.params, net.ngates.logits[h], u_node[h]);
    }
    return g;
}

NetGates sampled_gates(const GatedKan& net, Rng& rng) {
    std::vector<double> u_edge;
    std::vector<double> u_node;
    if (net.egates.trainable) {
        u_edge.resize(net.egates.logits.size());
        for (auto& u : u_edge) u = rng.uniform01();
    }
    if (net.ngates_enabled && net.ngates.trainable) {
        u_node.resize(net.ngates.logits.size());
        for (auto& u : u_node) u = rng.uniform01();
    }
    return gates_from_u(net, u_edge, u_node);
}

NetGates thresholded_gates(const GatedKan& net) {
    NetGates g = all_ones_gates(net);
    if (net.egates.trainable) {
        std::vector<int> z = inference_gates_threshold(net.egates);
        for (std::size_t e = 0; e < z.size(); ++e) g.edge[e].value = z[e];
    }
    if (net.ngates_enabled && net.ngates.trainable) {
        std::vector<int> z = inference_gates_threshold(net.ngates);
        for (std::size_t h = 0; h < z.size(); ++h) g.node[h].value = z[h];
    }
    return g;
}

NetGates expected_gates(const GatedKan& net) {
    NetGates g = all_ones_gates(net);
    if (net.egates.trainable)
        for (std::size_t e = 0; e < net.egates.logits.size(); ++e)
            g.edge[e].value = expected_open_one(net.egates.params, net.egates.logits[e]);
    if (net.ngates_enabled && net.ngates.trainable)
        for (std::size_t h = 0; h < net.ngates.logits.size(); ++h)
            g.node[h].value = expected_open_one(net.ngates.params, net.ngates.logits[h]);
    return g;
}

// ============================================================================
// Forward
// ============================================================================

void forward(const GatedKan& net, const Matrix& x, const NetGates& gates, ForwardCache& cache) {
    const KanShape& shape = net.shape;
    const int L = shape.depth();
    const std::size_t B = x.rows();
    if (static_cast<int>(x.cols()) != shape.input_dim())
        throw std::invalid_argument("forward: input width does not match network input dim");
    if (B == 0) throw std::invalid_argument("forward: empty batch");
    for (double v : x.data())
        if (!std::isfinite(v)) throw std::invalid_argument("forward: non-finite input");
    if (gates.edge.size() != static_cast<std::size_t>(net.edge_count()) ||
        gates.node.size() != static_cast<std::size_t>(shape.hidden_node_count()))
        throw std::invalid_argument("forward: gate vector lengths do not match network");

    cache.revision = net.revision;
    cache.batch = B;
    cache.gates = gates;
    cache.node_out.resize(static_cast<std::size_t>(L + 1));
    cache.node_pre.resize(static_cast<std::size_t>(L));
    cache.basis.resize(static_cast<std::size_t>(L));
    cache.dbasis.resize(static_cast<std::size_t>(L));
    cache.first.resize(static_cast<std::size_t>(L));
    cache.silu_v.resize(static_cast<std::size_t>(L));
    cache.silu_d.resize(static_cast<std::size_t>(L));
    cache.ssum.resize(static_cast<std::size_t>(L));
    cache.dssum.resize(static_cast<std::size_t>(L));
    cache.phi.resize(static_cast<std::size_t>(L));

    cache.node_out[0] = x;

    for (int l = 0; l < L; ++l) {
        const std::size_t lu = static_cast<std::size_t>(l);
        const int in_w = shape.layer_input_width(l);
        const int out_w = shape.widths[lu + 1];
        const auto& layer = net.edges[lu];
        const int K = layer[0].grid.degree;
        const int W = K + 1;
        const int count = layer[0].grid.basis_count();
        const SlotMap smap = slot_map(shape, l);

        Matrix& basis = cache.basis[lu];
        Matrix& dbasis = cache.dbasis[lu];
        Matrix& silu_v = cache.silu_v[lu];
        Matrix& silu_d = cache.silu_d[lu];
        Matrix& ssum = cache.ssum[lu];
        Matrix& dssum = cache.dssum[lu];
        Matrix& phi = cache.phi[lu];
        std::vector<int>& first = cache.first[lu];
        basis.resize(B, static_cast<std::size_t>(in_w * W));
        dbasis.resize(B, static_cast<std::size_t>(in_w * W));
        silu_v.resize(B, static_cast<std::size_t>(in_w));
        silu_d.resize(B, static_cast<std::size_t>(in_w));
        ssum.resize(B, static_cast<std::size_t>(in_w * out_w));
        dssum.resize(B, static_cast<std::size_t>(in_w * out_w));
        phi.resize(B, static_cast<std::size_t>(in_w * out_w));
        first.assign(B * static_cast<std::size_t>(in_w), count);

        // One basis window per (row, source); every out-edge of the source
        // shares the same grid.
        for (int i = 0; i < in_w; ++i) {
            const SplineGrid& grid = layer[static_cast<std::size_t>(i * out_w)].grid;
            const Matrix& src = cache.node_out[static_cast<std::size_t>(smap.block[static_cast<std::size_t>(i)])];
            const int node = smap.node[static_cast<std::size_t>(i)];
            for (std::size_t b = 0; b < B; ++b) {
                double v = src(b, static_cast<std::size_t>(node));
                first[b * static_cast<std::size_t>(in_w) + static_cast<std::size_t>(i)] =
                    basis_local_with_derivative(grid, v,
                                                basis.row_ptr(b) + i * W,
                                                dbasis.row_ptr(b) + i * W);
                silu_v(b, static_cast<std::size_t>(i)) = silu(v);
                silu_d(b, static_cast<std::size_t>(i)) = silu_deriv(v);
            }
        }

        for (int i = 0; i < in_w; ++i) {
            for (int j = 0; j < out_w; ++j) {
                const int e = i * out_w + j;
                const SplineActivation& act = layer[static_cast<std::size_t>(e)];
                for (std::size_t b = 0; b < B; ++b) {
                    int f = first[b * static_cast<std::size_t>(in_w) + static_cast<std::size_t>(i)];
                    double s = 0.0;
                    double ds = 0.0;
                    if (f != count) {
                        const double* bw = basis.row_ptr(b) + i * W;
                        const double* dw = dbasis.row_ptr(b) + i * W;
                        for (int m = 0; m <= K; ++m) {
                            int idx = f + m;
                            if (idx < 0 || idx >= count) continue;
                            double c = act.coeffs[static_cast<std::size_t>(idx)];
                            s += c * bw[m];
                            ds += c * dw[m];
                        }
                    }
                    ssum(b, static_cast<std::size_t>(e)) = s;
                    dssum(b, static_cast<std::size_t>(e)) = ds;
                    phi(b, static_cast<std::size_t>(e)) =
                        act.w_b * silu_v(b, static_cast<std::size_t>(i)) + act.w_s * s;
                }
            }
        }

        const int edge_off = net.edge_offset(l);
        const int hid_off = l + 1 < L ? net.hidden_node_offset(l + 1) : 0;
        Matrix& pre = cache.node_pre[lu];
        Matrix& out = cache.node_out[lu + 1];
        pre.resize(B, static_cast<std::size_t>(out_w));
        out.resize(B, static_cast<std::size_t>(out_w));
        for (std::size_t b = 0; b < B; ++b) {
            for (int j = 0; j < out_w; ++j) {
                double acc;
                if (shape.node_kinds[lu][static_cast<std::size_t>(j)] == NodeKind::sum) {
                    acc = 0.0;
                    for (int i = 0; i < in_w; ++i) {
                        double z = gates.edge[static_cast<std::size_t>(edge_off + i * out_w + j)].value;
                        acc += z * phi(b, static_cast<std::size_t>(i * out_w + j));
                    }
                } else {
                    acc = 1.0;
                    for (int i = 0; i < in_w; ++i) {
                        double z = gates.edge[static_cast<std::size_t>(edge_off + i * out_w + j)].value;
                        acc *= 1.0 + z * (phi(b, static_cast<std::size_t>(i * out_w + j)) - 1.0);
                    }
                }
                pre(b, static_cast<std::size_t>(j)) = acc;
                double v = acc;
                if (l + 1 < L) v *= gates.node[static_cast<std::size_t>(hid_off + j)].value;
                if (!std::isfinite(v) || std::fabs(v) > kOverflowLimit)
                    throw std::runtime_error("forward: value overflow at layer " +
                                             std::to_string(l + 1) + " node " + std::to_string(j));
                out(b, static_cast<std::size_t>(j)) = v;
            }
        }
    }
}

// ============================================================================
// Backward
// ============================================================================

KanGradients KanGradients::zeros_like(const GatedKan& net) {
    KanGradients g;
    int E = net.edge_count();
    g.coeffs.resize(static_cast<std::size_t>(E));
    int e = 0;
    for (const auto& layer : net.edges)
        for (const auto& act : layer)
            g.coeffs[static_cast<std::size_t>(e++)].assign(act.coeffs.size(), 0.0);
    g.w_b.assign(static_cast<std::size_t>(E), 0.0);
    g.w_s.assign(static_cast<std::size_t>(E), 0.0);
    g.egate.assign(static_cast<std::size_t>(E), 0.0);
    g.ngate.assign(static_cast<std::size_t>(net.shape.hidden_node_count()), 0.0);
    return g;
}

void backward(const GatedKan& net, const ForwardCache& cache, const Matrix& upstream,
              KanGradients& out) {
    if (cache.revision != net.revision)
        throw std::logic_error("backward: cache does not match network revision");
    const KanShape& shape = net.shape;
    const int L = shape.depth();
    const std::size_t B = cache.batch;
    if (upstream.rows() != B || static_cast<int>(upstream.cols()) != shape.output_dim())
        throw std::invalid_argument("backward: upstream gradient has wrong dimensions");

    // Reset the output struct in place, reusing allocations where possible.
    const std::size_t E = static_cast<std::size_t>(net.edge_count());
    out.coeffs.resize(E);
    {
        std::size_t e = 0;
        for (const auto& layer : net.edges)
            for (const auto& act : layer) out.coeffs[e++].assign(act.coeffs.size(), 0.0);
    }
    out.w_b.assign(E, 0.0);
    out.w_s.assign(E, 0.0);
    out.egate.assign(E, 0.0);
    out.ngate.assign(static_cast<std::size_t>(shape.hidden_node_count()), 0.0);

    std::vector<Matrix> g_out(static_cast<std::size_t>(L + 1));
    for (int k = 0; k <= L; ++k)
        g_out[static_cast<std::size_t>(k)].resize(B, static_cast<std::size_t>(shape.widths[static_cast<std::size_t>(k)]));
    g_out[static_cast<std::size_t>(L)] = upstream;

    std::vector<double> factors;
    std::vector<double> prefix;
    std::vector<double> suffix;

    for (int l = L - 1; l >= 0; --l) {
        const std::size_t lu = static_cast<std::size_t>(l);
        const int in_w = shape.layer_input_width(l);
        const int out_w = shape.widths[lu + 1];
        const auto& layer = net.edges[lu];
        const int K = layer[0].grid.degree;
        const int W = K + 1;
        const int count = layer[0].grid.basis_count();
        const SlotMap smap = slot_map(shape, l);
        const int edge_off = net.edge_offset(l);
        const int hid_off = l + 1 < L ? net.hidden_node_offset(l + 1) : 0;

        const Matrix& basis = cache.basis[lu];
        const Matrix& silu_v = cache.silu_v[lu];
        const Matrix& silu_d = cache.silu_d[lu];
        const Matrix& ssum = cache.ssum[lu];
        const Matrix& dssum = cache.dssum[lu];
        const Matrix& phi = cache.phi[lu];
        const Matrix& pre = cache.node_pre[lu];
        const std::vector<int>& first = cache.first[lu];

        // Unchain the node gate of the target layer (output layer has none).
        Matrix gpre(B, static_cast<std::size_t>(out_w));
        for (std::size_t b = 0; b < B; ++b)
            for (int j = 0; j < out_w; ++j) {
                double g = g_out[lu + 1](b, static_cast<std::size_t>(j));
                if (l + 1 < L) {
                    const GateSample& zn = cache.gates.node[static_cast<std::size_t>(hid_off + j)];
                    out.ngate[static_cast<std::size_t>(hid_off + j)] +=
                        g * pre(b, static_cast<std::size_t>(j)) * zn.dvalue_dlogit;
                    g *= zn.value;
                }
                gpre(b, static_cast<std::size_t>(j)) = g;
            }

        Matrix gx(B, static_cast<std::size_t>(in_w));
        factors.assign(static_cast<std::size_t>(in_w), 1.0);
        prefix.assign(static_cast<std::size_t>(in_w) + 1, 1.0);
        suffix.assign(static_cast<std::size_t>(in_w) + 1, 1.0);

        for (int j = 0; j < out_w; ++j) {
            const bool is_sum = shape.node_kinds[lu][static_cast<std::size_t>(j)] == NodeKind::sum;
            for (std::size_t b = 0; b < B; ++b) {
                const double gp = gpre(b, static_cast<std::size_t>(j));
                if (!is_sum) {
                    // Products of all factors except one, via prefix/suffix
                    // scans so closed gates (factor exactly 1 or 0) stay exact.
                    for (int i = 0; i < in_w; ++i) {
                        double z = cache.gates.edge[static_cast<std::size_t>(edge_off + i * out_w + j)].value;
                        factors[static_cast<std::size_t>(i)] =
                            1.0 + z * (phi(b, static_cast<std::size_t>(i * out_w + j)) - 1.0);
                    }
                    for (int i = 0; i < in_w; ++i)
                        prefix[static_cast<std::size_t>(i + 1)] =
                            prefix[static_cast<std::size_t>(i)] * factors[static_cast<std::size_t>(i)];
                    suffix[static_cast<std::size_t>(in_w)] = 1.0;
                    for (int i = in_w - 1; i >= 0; --i)
                        suffix[static_cast<std::size_t>(i)] =
                            suffix[static_cast<std::size_t>(i + 1)] * factors[static_cast<std::size_t>(i)];
                }
                for (int i = 0; i < in_w; ++i) {
                    const int e = i * out_w + j;
                    const std::size_t gid = static_cast<std::size_t>(edge_off + e);
                    const GateSample& zg = cache.gates.edge[gid];
                    double dphi;   // dLoss / dphi_e at this row
                    double dgate;  // dLoss / dz_e contribution from this row
                    if (is_sum) {
                        dphi = gp * zg.value;
                        dgate = gp * phi(b, static_cast<std::size_t>(e));
                    } else {
                        double excl = prefix[static_cast<std::size_t>(i)] * suffix[static_cast<std::size_t>(i + 1)];
                        dphi = gp * zg.value * excl;
                        dgate = gp * (phi(b, static_cast<std::size_t>(e)) - 1.0) * excl;
                    }
                    out.egate[gid] += dgate * zg.dvalue_dlogit;
                    if (dphi == 0.0) continue;

                    const SplineActivation& act = layer[static_cast<std::size_t>(e)];
                    out.w_b[gid] += dphi * silu_v(b, static_cast<std::size_t>(i));
                    out.w_s[gid] += dphi * ssum(b, static_cast<std::size_t>(e));
                    int f = first[b * static_cast<std::size_t>(in_w) + static_cast<std::size_t>(i)];
                    if (f != count) {
                        const double* bw = basis.row_ptr(b) + i * W;
                        double scale = dphi * act.w_s;
                        for (int m = 0; m <= K; ++m) {
                            int idx = f + m;
                            if (idx < 0 || idx >= count) continue;
                            out.coeffs[gid][static_cast<std::size_t>(idx)] += scale * bw[m];
                        }
                    }
                    gx(b, static_cast<std::size_t>(i)) +=
                        dphi * (act.w_b * silu_d(b, static_cast<std::size_t>(i)) +
                                act.w_s * dssum(b, static_cast<std::size_t>(e)));
                }
            }
        }

        // Scatter source gradients back onto the producing layers.
        for (int i = 0; i < in_w; ++i) {
            Matrix& dst = g_out[static_cast<std::size_t>(smap.block[static_cast<std::size_t>(i)])];
            int node = smap.node[static_cast<std::size_t>(i)];
            for (std::size_t b = 0; b < B; ++b)
                dst(b, static_cast<std::size_t>(node)) += gx(b, static_cast<std::size_t>(i));
        }
    }
}

// ============================================================================
// Inference-time active-edge accounting
// ============================================================================

std::vector<int> active_edge_mask(const GatedKan& net) {
    const KanShape& shape = net.shape;
    const int L = shape.depth();
    std::vector<int> edge_open = inference_gates_threshold(net.egates);
    std::vector<int> node_open;
    if (net.ngates_enabled) node_open = inference_gates_threshold(net.ngates);

    auto hidden_open = [&](int layer, int node) {
        if (!net.ngates_enabled) return true;
        return node_open[static_cast<std::size_t>(net.hidden_node_offset(layer) + node)] == 1;
    };

    std::vector<int> mask(static_cast<std::size_t>(net.edge_count()), 0);
    for (int l = 0; l < L; ++l) {
        const int in_w = shape.layer_input_width(l);
        const int out_w = shape.widths[static_cast<std::size_t>(l + 1)];
        const SlotMap smap = slot_map(shape, l);
        const int off = net.edge_offset(l);
        for (int i = 0; i < in_w; ++i) {
            int src_block = smap.block[static_cast<std::size_t>(i)];
            bool src_ok = src_block == 0 || hidden_open(src_block, smap.node[static_cast<std::size_t>(i)]);
            for (int j = 0; j < out_w; ++j) {
                bool tgt_ok = l + 1 == L || hidden_open(l + 1, j);
                bool open = edge_open[static_cast<std::size_t>(off + i * out_w + j)] == 1;
                if (open && src_ok && tgt_ok)
                    mask[static_cast<std::size_t>(off + i * out_w + j)] = 1;
            }
        }
    }
    return mask;
}

ActiveCounts active_counts(const GatedKan& net) {
    const KanShape& shape = net.shape;
    const std::vector<int> mask = active_edge_mask(net);

    ActiveCounts c;
    for (int l = 0; l < shape.depth(); ++l) {
        const int in_w = shape.layer_input_width(l);
        const int out_w = shape.widths[static_cast<std::size_t>(l + 1)];
        const int off = net.edge_offset(l);
        for (int i = 0; i < in_w; ++i) {
            EdgeKind k = net.kind(l, i);
            for (int j = 0; j < out_w; ++j) {
                if (mask[static_cast<std::size_t>(off + i * out_w + j)] == 1) {
                    if (k == EdgeKind::trunk)
                        ++c.trunk;
                    else
                        ++c.fc;
                }
            }
        }
    }
    EdgeCounts total = edge_counts(shape);
    int denom = shape.forward_connections ? total.total() : total.trunk;
    c.sparsity_pct = denom > 0 ? 100.0 * static_cast<double>(c.trunk + c.fc) / denom : 0.0;
    return c;
}

}  // namespace sparsekan
