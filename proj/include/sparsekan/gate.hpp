#ifndef SPARSEKAN_GATE_HPP
#define SPARSEKAN_GATE_HPP

#include "sparsekan/spline.hpp"  // sigmoid

#include <span>
#include <vector>

namespace sparsekan {

// Shared hard-concrete distribution constants: temperature tau, stretch
// interval [gamma, zeta] with gamma < 0 < 1 < zeta so the stretched sigmoid
// has point masses at both 0 and 1 after clamping.
struct GateParams {
    double tau = 2.0 / 3.0;
    double gamma = -0.1;
    double zeta = 1.1;

    void validate() const;

    // Logit value at which the open probability crosses 1/2.
    double threshold_logit() const;
};

// One logit per gated element. Frozen banks (trainable=false) keep their
// logits fixed and are treated as fully open by the network forward pass.
struct GateBank {
    std::vector<double> logits;
    GateParams params;
    bool trainable = true;

    void validate() const;
    std::size_t size() const { return logits.size(); }
};

struct GateSample {
    double value = 1.0;          // z-tilde, clamped to [0,1]
    double dvalue_dlogit = 0.0;  // pathwise derivative at fixed u; 0 where clamped
};

// Stretched-sigmoid sample for one gate. u must lie strictly inside (0,1).
GateSample sample_gate(const GateParams& p, double logit, double u);

// Open probability sigma(alpha - tau*log(-gamma/zeta)) and its derivative
// in alpha.
double expected_open_one(const GateParams& p, double logit);
double expected_open_grad_one(const GateParams& p, double logit);

std::vector<GateSample> sample_gates(const GateBank& bank, std::span<const double> u);
std::vector<double> expected_open(const GateBank& bank);

// Deterministic inference estimators: the hard threshold the trainer uses,
// and the clamped mean-style estimator kept for comparison.
std::vector<int> inference_gates_threshold(const GateBank& bank);
std::vector<double> inference_gates_louizos(const GateBank& bank);

// Mean over the bank of max(p, 1-p): 0.5 when every gate sits on the fence,
// 1 when every gate has committed.
double decisiveness(const GateBank& bank);

}  // namespace sparsekan

#endif
