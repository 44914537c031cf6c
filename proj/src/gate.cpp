#include "sparsekan/gate.hpp"

#include <cmath>
#include <stdexcept>

namespace sparsekan {

void GateParams::validate() const {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("GateParams: tau must be > 0");
    if (!(gamma < 0.0) || !std::isfinite(gamma))
        throw std::invalid_argument("GateParams: gamma must be < 0");
    if (!(zeta > 1.0) || !std::isfinite(zeta)) throw std::invalid_argument("GateParams: zeta must be > 1");
}

double GateParams::threshold_logit() const { return tau * std::log(-gamma / zeta); }

void GateBank::validate() const {
    params.validate();
    for (double a : logits)
        if (!std::isfinite(a)) throw std::invalid_argument("GateBank: non-finite logit");
}

GateSample sample_gate(const GateParams& p, double logit, double u) {
    if (!(u > 0.0 && u < 1.0)) throw std::invalid_argument("sample_gate: u must lie strictly in (0,1)");
    double s = sigmoid((std::log(u) - std::log1p(-u) + logit) / p.tau);
    double stretched = s * (p.zeta - p.gamma) + p.gamma;
    GateSample out;
    if (stretched <= 0.0) {
        out.value = 0.0;
        out.dvalue_dlogit = 0.0;
    } else if (stretched >= 1.0) {
        out.value = 1.0;
        out.dvalue_dlogit = 0.0;
    } else {
        out.value = stretched;
        out.dvalue_dlogit = (p.zeta - p.gamma) * s * (1.0 - s) / p.tau;
    }
    return out;
}

double expected_open_one(const GateParams& p, double logit) {
    return sigmoid(logit - p.threshold_logit());
}

double expected_open_grad_one(const GateParams& p, double logit) {
    double s = sigmoid(logit - p.threshold_logit());
    return s * (1.0 - s);
}

std::vector<GateSample> sample_gates(const GateBank& bank, std::span<const double> u) {
    if (u.size() != bank.logits.size())
        throw std::invalid_argument("sample_gates: u length must match logit count");
    std::vector<GateSample> out(bank.logits.size());
    for (std::size_t i = 0; i < bank.logits.size(); ++i)
        out[i] = sample_gate(bank.params, bank.logits[i], u[i]);
    return out;
}

std::vector<double> expected_open(const GateBank& bank) {
    std::vector<double> out(bank.logits.size());
    for (std::size_t i = 0; i < bank.logits.size(); ++i)
        out[i] = expected_open_one(bank.params, bank.logits[i]);
    return out;
}

std::vector<int> inference_gates_threshold(const GateBank& bank) {
    std::vector<int> out(bank.logits.size());
    double boundary = bank.params.threshold_logit();
    for (std::size_t i = 0; i < bank.logits.size(); ++i) out[i] = bank.logits[i] > boundary ? 1 : 0;
    return out;
}

std::vector<double> inference_gates_louizos(const GateBank& bank) {
    std::vector<double> out(bank.logits.size());
    for (std::size_t i = 0; i < bank.logits.size(); ++i) {
        double v = sigmoid(bank.logits[i]) * (bank.params.zeta - bank.params.gamma) + bank.params.gamma;
        out[i] = std::min(1.0, std::max(0.0, v));
    }
    return out;
}

double decisiveness(const GateBank& bank) {
    if (bank.logits.empty()) throw std::invalid_argument("decisiveness: empty gate bank");
    double acc = 0.0;
    for (double a : bank.logits) {
        double p = expected_open_one(bank.params, a);
        acc += std::max(p, 1.0 - p);
    }
    return acc / static_cast<double>(bank.logits.size());
}

}  // namespace sparsekan
