#include "sparsekan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace sparsekan {

// ============================================================================
// Adam
// ============================================================================

AdamState AdamState::zeros_like(const GatedKan& net) {
    AdamState st;
    st.m = KanGradients::zeros_like(net);
    st.v = KanGradients::zeros_like(net);
    return st;
}

void adam_step(GatedKan& net, const KanGradients& grads, AdamState& state, double lr,
               const AdamConfig& cfg) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    auto update = [&](double& param, double& m, double& v, double g) {
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        param -= lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps);
    };

    int e = 0;
    for (auto& layer : net.edges) {
        for (auto& act : layer) {
            std::vector<double>& mc = state.m.coeffs[static_cast<std::size_t>(e)];
            std::vector<double>& vc = state.v.coeffs[static_cast<std::size_t>(e)];
            const std::vector<double>& gc = grads.coeffs[static_cast<std::size_t>(e)];
            for (std::size_t c = 0; c < act.coeffs.size(); ++c)
                update(act.coeffs[c], mc[c], vc[c], gc[c]);
            update(act.w_b, state.m.w_b[static_cast<std::size_t>(e)],
                   state.v.w_b[static_cast<std::size_t>(e)], grads.w_b[static_cast<std::size_t>(e)]);
            update(act.w_s, state.m.w_s[static_cast<std::size_t>(e)],
                   state.v.w_s[static_cast<std::size_t>(e)], grads.w_s[static_cast<std::size_t>(e)]);
            ++e;
        }
    }
    if (net.egates.trainable) {
        for (std::size_t i = 0; i < net.egates.logits.size(); ++i)
            update(net.egates.logits[i], state.m.egate[i], state.v.egate[i], grads.egate[i]);
    }
    if (net.ngates_enabled && net.ngates.trainable) {
        for (std::size_t i = 0; i < net.ngates.logits.size(); ++i)
            update(net.ngates.logits[i], state.m.ngate[i], state.v.ngate[i], grads.ngate[i]);
    }
    ++net.revision;
}

// ============================================================================
// Configuration
// ============================================================================

std::vector<int> grid_update_epochs(const GridUpdateSchedule& s, int epochs) {
    std::vector<int> out;
    if (s.count <= 0) return out;
    for (int k = 0; k < s.count; ++k) {
        int e = 1 + (k * s.within_epochs) / s.count;
        if (e > epochs) break;
        if (out.empty() || out.back() != e) out.push_back(e);
    }
    return out;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be positive");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be positive");
    if (!(std::isfinite(lr) && lr > 0.0))
        throw std::invalid_argument("TrainConfig: lr must be finite and positive");
    if (!(std::isfinite(beta) && beta >= 0.0))
        throw std::invalid_argument("TrainConfig: beta must be finite and nonnegative");
    if (warmup_epochs < 0 || fc_warmup_epochs < 0)
        throw std::invalid_argument("TrainConfig: warm-up epoch counts must be nonnegative");
    if (warmup_epochs + fc_warmup_epochs > epochs)
        throw std::invalid_argument("TrainConfig: warm-up phases exceed the epoch budget");
    if (grid_updates.count < 0 || grid_updates.within_epochs < 0)
        throw std::invalid_argument("TrainConfig: grid update schedule must be nonnegative");
    if (grid_updates.count > 0 && grid_updates.within_epochs < grid_updates.count)
        throw std::invalid_argument(
            "TrainConfig: grid update window shorter than the update count");
    if (!(early_stop.decisiveness_threshold > 0.5 && early_stop.decisiveness_threshold <= 1.0))
        throw std::invalid_argument("TrainConfig: decisiveness threshold must lie in (0.5, 1]");
    if (early_stop.patience < -1)
        throw std::invalid_argument("TrainConfig: patience must be -1 (auto) or nonnegative");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 &&
          adam.eps > 0.0))
        throw std::invalid_argument("TrainConfig: bad Adam constants");
}

int TrainConfig::effective_patience() const {
    if (early_stop.patience >= 0) return early_stop.patience;
    return std::min(500, static_cast<int>(std::ceil(0.05 * epochs)));
}

ConditionSpec ConditionSpec::baseline() { return {false, false, 0.0, 20.0}; }
ConditionSpec ConditionSpec::fc_only() { return {true, false, 0.0, 20.0}; }
ConditionSpec ConditionSpec::gates_only(double beta, double gate_init_logit) {
    return {false, true, beta, gate_init_logit};
}
ConditionSpec ConditionSpec::full(double beta, double gate_init_logit) {
    return {true, true, beta, gate_init_logit};
}

GatedKan condition_net(const std::vector<int>& widths, const ConditionSpec& cond, Rng& rng,
                       int grid_intervals, int spline_degree) {
    KanShape shape = KanShape::sums(widths, cond.use_fc);
    if (cond.use_gates)
        return GatedKan::init(shape, rng, cond.gate_init_logit, true, true, grid_intervals,
                              spline_degree);
    return GatedKan::init(shape, rng, 20.0, false, false, grid_intervals, spline_degree);
}

// ============================================================================
// Grid refresh
// ============================================================================

void refresh_grids(GatedKan& net, const Matrix& x) {
    if (x.rows() == 0) throw std::invalid_argument("refresh_grids: empty sample batch");
    ForwardCache cache;
    const int depth = net.shape.depth();
    const std::size_t rows = x.rows();
    std::vector<double> xs(rows);
    for (int l = 0; l < depth; ++l) {
        forward(net, x, expected_gates(net), cache);
        const int in_w = net.shape.layer_input_width(l);
        const int out_w = net.shape.widths[static_cast<std::size_t>(l) + 1];
        for (int i = 0; i < in_w; ++i) {
            // Locate slot i inside the (possibly concatenated) layer input.
            int block = net.shape.forward_connections ? 0 : l;
            int offset = i;
            while (offset >= net.shape.widths[static_cast<std::size_t>(block)]) {
                offset -= net.shape.widths[static_cast<std::size_t>(block)];
                ++block;
            }
            const Matrix& src = cache.node_out[static_cast<std::size_t>(block)];
            for (std::size_t r = 0; r < rows; ++r)
                xs[r] = src(r, static_cast<std::size_t>(offset));
            for (int j = 0; j < out_w; ++j) {
                SplineActivation& act = net.edges[static_cast<std::size_t>(l)]
                                                 [static_cast<std::size_t>(i * out_w + j)];
                act = update_grid_from_samples(act, xs);
            }
        }
    }
    ++net.revision;
}

// ============================================================================
// Training loop
// ============================================================================

double run_decisiveness(const GatedKan& net) {
    double sum = decisiveness(net.egates) * static_cast<double>(net.egates.size());
    double count = static_cast<double>(net.egates.size());
    if (net.ngates_enabled && net.ngates.size() > 0) {
        sum += decisiveness(net.ngates) * static_cast<double>(net.ngates.size());
        count += static_cast<double>(net.ngates.size());
    }
    return sum / count;
}

namespace {

void mask_fc_gate_grads(const GatedKan& net, KanGradients& grads) {
    for (int l = 0; l < net.shape.depth(); ++l) {
        const int out_w = net.shape.widths[static_cast<std::size_t>(l) + 1];
        const int in_w = net.shape.layer_input_width(l);
        const int off = net.edge_offset(l);
        for (int i = 0; i < in_w; ++i) {
            if (net.kind(l, i) != EdgeKind::fc) continue;
            for (int j = 0; j < out_w; ++j)
                grads.egate[static_cast<std::size_t>(off + i * out_w + j)] = 0.0;
        }
    }
}

}  // namespace

TrainHistory train(GatedKan& net, const Matrix& train_x, const Matrix& train_y,
                   const TrainConfig& cfg, const ConditionSpec& cond) {
    cfg.validate();
    net.validate();
    const std::size_t n = train_x.rows();
    if (n == 0) throw std::invalid_argument("train: empty training set");
    if (train_y.rows() != n) throw std::invalid_argument("train: x/y row counts differ");
    if (train_x.cols() != static_cast<std::size_t>(net.shape.input_dim()))
        throw std::invalid_argument("train: input width does not match the network");
    if (train_y.cols() != static_cast<std::size_t>(net.shape.output_dim()))
        throw std::invalid_argument("train: target width does not match the network");
    for (double v : train_y.data())
        if (!std::isfinite(v)) throw std::invalid_argument("train: non-finite target value");

    MdlConfig mdl;
    mdl.n_train = n;

    Rng rng_shuffle(derive_seed(cfg.seed, 0));
    Rng rng_gates(derive_seed(cfg.seed, 1));

    AdamState adam = AdamState::zeros_like(net);
    KanGradients grads = KanGradients::zeros_like(net);
    ForwardCache cache;

    // Forward-connection gates hold their initial logits (gradients masked)
    // through both warm-up phases, then train like the rest.
    const bool fc_gated = net.shape.forward_connections && net.egates.trainable;
    const int fc_hold_until = cfg.warmup_epochs + cfg.fc_warmup_epochs;
    const int stop_floor = cfg.warmup_epochs + (fc_gated ? cfg.fc_warmup_epochs : 0);
    const int patience = cfg.effective_patience();

    const std::vector<int> grid_epochs = grid_update_epochs(cfg.grid_updates, cfg.epochs);
    std::size_t next_grid = 0;

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});

    TrainHistory hist;
    hist.epochs.reserve(static_cast<std::size_t>(cfg.epochs));
    double best_total = std::numeric_limits<double>::infinity();
    int since_improve = 0;

    const std::size_t bsz = static_cast<std::size_t>(cfg.batch_size);
    std::vector<std::size_t> idx;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double applied_beta =
            (cond.use_gates && epoch > cfg.warmup_epochs) ? cond.beta : 0.0;
        mdl.beta = applied_beta;
        const double bic = applied_beta > 0.0
                               ? applied_beta * std::log(static_cast<double>(n)) /
                                     static_cast<double>(n)
                               : 0.0;

        rng_shuffle.shuffle(perm);

        if (next_grid < grid_epochs.size() && grid_epochs[next_grid] == epoch) {
            ++next_grid;
            idx.assign(perm.begin(),
                       perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, bsz)));
            refresh_grids(net, train_x.take_rows(idx));
        }

        double sum_data = 0.0, sum_cplx = 0.0, sum_total = 0.0;
        int batches = 0;
        for (std::size_t start = 0; start < n; start += bsz) {
            const std::size_t stop = std::min(n, start + bsz);
            idx.assign(perm.begin() + static_cast<std::ptrdiff_t>(start),
                       perm.begin() + static_cast<std::ptrdiff_t>(stop));
            Matrix bx = train_x.take_rows(idx);
            Matrix by = train_y.take_rows(idx);

            NetGates gates = sampled_gates(net, rng_gates);
            forward(net, bx, gates, cache);
            const double d = data_loss(cache.output(), by);
            const double c = complexity_loss(net, mdl);
            const double t = d + bic * c;
            if (!std::isfinite(t))
                throw std::runtime_error("train: loss became non-finite at epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(batches));

            const std::size_t brows = bx.rows();
            Matrix upstream(brows, train_y.cols());
            for (std::size_t k = 0; k < upstream.data().size(); ++k)
                upstream.data()[k] = 2.0 * (cache.output().data()[k] - by.data()[k]) /
                                     static_cast<double>(brows);
            backward(net, cache, upstream, grads);
            if (applied_beta > 0.0) add_complexity_gradients(net, mdl, grads);
            if (fc_gated && epoch <= fc_hold_until) mask_fc_gate_grads(net, grads);
            adam_step(net, grads, adam, cfg.lr, cfg.adam);

            sum_data += d;
            sum_cplx += c;
            sum_total += t;
            ++batches;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.data = sum_data / batches;
        rec.complexity = sum_cplx / batches;
        rec.total = sum_total / batches;
        rec.decisiveness = run_decisiveness(net);
        const ActiveCounts active = active_counts(net);
        rec.trunk_active = active.trunk;
        rec.fc_active = active.fc;
        hist.epochs.push_back(rec);

        // Plateau tracking starts once the objective stops changing shape
        // (beta switches on at the end of warm-up; without trainable gates it
        // never does).
        const int track_from = cond.use_gates ? cfg.warmup_epochs + 1 : 1;
        if (epoch >= track_from) {
            if (rec.total < best_total * (1.0 - 1e-6)) {
                best_total = rec.total;
                since_improve = 0;
            } else {
                ++since_improve;
            }
        }
        if (cfg.early_stop.enabled && epoch > stop_floor &&
            rec.decisiveness > cfg.early_stop.decisiveness_threshold &&
            since_improve >= patience) {
            hist.early_stopped = true;
            break;
        }
    }
    return hist;
}

// ============================================================================
// History output
// ============================================================================

void write_history(const std::string& path, const TrainHistory& history) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_history: cannot open " + path);
    out << "epoch,data_loss,complexity_loss,total,decisiveness,trunk_active,fc_active\n";
    char line[256];
    for (const EpochRecord& r : history.epochs) {
        std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.17g,%d,%d\n", r.epoch, r.data,
                      r.complexity, r.total, r.decisiveness, r.trunk_active, r.fc_active);
        out << line;
    }
    if (!out) throw std::runtime_error("write_history: write failed for " + path);
}

}  // namespace sparsekan
