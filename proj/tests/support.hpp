#ifndef SPARSEKAN_TESTS_SUPPORT_HPP
#define SPARSEKAN_TESTS_SUPPORT_HPP

#include "sparsekan/network.hpp"
#include "sparsekan/rng.hpp"

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

namespace sparsekan::testing {

// Squared-error loss used by the finite-difference oracle.
inline double sq_loss(const Matrix& y, const Matrix& t) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.data().size(); ++i) {
        double d = y.data()[i] - t.data()[i];
        s += d * d;
    }
    return s;
}

struct GradCheck {
    bool ok = true;
    int checked = 0;
    int skipped_boundary = 0;
    double max_rel = 0.0;
    std::string worst;
};

// Central finite differences of sum((net(x)-t)^2) at fixed gate noise u,
// compared against the analytic reverse pass. Gate logits whose stretched
// sample sits within `margin` of a clamp boundary are skipped: the pathwise
// derivative is defined piecewise and the stencil would straddle a kink.
inline GradCheck check_gradients(GatedKan& net, const Matrix& x, const Matrix& t,
                                 const std::vector<double>& u_edge,
                                 const std::vector<double>& u_node, double h = 1e-5,
                                 double rel_tol = 1e-4, double abs_tol = 1e-8,
                                 double margin = 1e-3) {
    GradCheck res;

    auto loss_now = [&]() {
        NetGates g = gates_from_u(net, u_edge, u_node);
        ForwardCache c;
        forward(net, x, g, c);
        return sq_loss(c.output(), t);
    };

    NetGates gates = gates_from_u(net, u_edge, u_node);
    ForwardCache cache;
    forward(net, x, gates, cache);
    Matrix upstream(x.rows(), static_cast<std::size_t>(net.shape.output_dim()));
    for (std::size_t i = 0; i < upstream.data().size(); ++i)
        upstream.data()[i] = 2.0 * (cache.output().data()[i] - t.data()[i]);
    KanGradients grads;
    backward(net, cache, upstream, grads);

    auto compare = [&](double analytic, double* param, const std::string& label) {
        double keep = *param;
        *param = keep + h;
        double up = loss_now();
        *param = keep - h;
        double dn = loss_now();
        *param = keep;
        double fd = (up - dn) / (2.0 * h);
        double err = std::fabs(analytic - fd);
        double rel = err / std::max({std::fabs(analytic), std::fabs(fd), 1e-30});
        if (err > abs_tol) {
            if (rel > res.max_rel) {
                res.max_rel = rel;
                std::ostringstream os;
                os << label << ": analytic " << analytic << " vs fd " << fd;
                res.worst = os.str();
            }
            if (rel > rel_tol) res.ok = false;
        }
        ++res.checked;
    };

    auto near_clamp = [&](const GateParams& p, double logit, double u) {
        double s = sigmoid((std::log(u) - std::log1p(-u) + logit) / p.tau);
        double stretched = s * (p.zeta - p.gamma) + p.gamma;
        return std::fabs(stretched) < margin || std::fabs(stretched - 1.0) < margin;
    };

    int gid = 0;
    for (std::size_t l = 0; l < net.edges.size(); ++l) {
        for (std::size_t e = 0; e < net.edges[l].size(); ++e, ++gid) {
            SplineActivation& act = net.edges[l][e];
            std::string base = "edge(" + std::to_string(l) + "," + std::to_string(e) + ")";
            for (std::size_t c = 0; c < act.coeffs.size(); ++c)
                compare(grads.coeffs[static_cast<std::size_t>(gid)][c], &act.coeffs[c],
                        base + ".c" + std::to_string(c));
            compare(grads.w_b[static_cast<std::size_t>(gid)], &act.w_b, base + ".w_b");
            compare(grads.w_s[static_cast<std::size_t>(gid)], &act.w_s, base + ".w_s");
            if (net.egates.trainable) {
                if (near_clamp(net.egates.params, net.egates.logits[static_cast<std::size_t>(gid)],
                               u_edge[static_cast<std::size_t>(gid)]))
                    ++res.skipped_boundary;
                else
                    compare(grads.egate[static_cast<std::size_t>(gid)],
                            &net.egates.logits[static_cast<std::size_t>(gid)], base + ".alpha");
            }
        }
    }
    if (net.ngates_enabled && net.ngates.trainable)
        for (std::size_t n = 0; n < net.ngates.logits.size(); ++n) {
            if (near_clamp(net.ngates.params, net.ngates.logits[n], u_node[n]))
                ++res.skipped_boundary;
            else
                compare(grads.ngate[n], &net.ngates.logits[n], "ngate" + std::to_string(n));
        }
    return res;
}

// Random small network with mixed aggregation kinds for property tests.
inline GatedKan random_net(Rng& rng, std::vector<int> widths, bool fc, bool ngates,
                           double gate_logit, bool trainable, double product_fraction = 0.3) {
    KanShape shape = KanShape::sums(widths, fc);
    for (auto& layer : shape.node_kinds)
        for (auto& k : layer)
            if (rng.uniform01() < product_fraction) k = NodeKind::product;
    GatedKan net = GatedKan::init(shape, rng, gate_logit, trainable, ngates, 5, 3);
    // Spread the logits so sampled gates land in varied regimes.
    if (trainable) {
        for (auto& a : net.egates.logits) a += rng.uniform(-1.5, 1.5);
        for (auto& a : net.ngates.logits) a += rng.uniform(-1.5, 1.5);
    }
    return net;
}

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo, double hi) {
    Matrix m(rows, cols);
    for (auto& v : m.data()) v = rng.uniform(lo, hi);
    return m;
}

inline std::vector<double> random_u(Rng& rng, std::size_t n) {
    std::vector<double> u(n);
    for (auto& v : u) v = rng.uniform01();
    return u;
}

}  // namespace sparsekan::testing

#endif
