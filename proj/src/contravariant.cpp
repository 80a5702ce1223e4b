#include "moelab/contravariant.hpp"

#include <cmath>
#include <stdexcept>

namespace moe {

namespace {
constexpr double kSlack = 1e-12;
}

void ContravariantParams::validate() const {
    if (!std::isfinite(tau) || !std::isfinite(y))
        throw std::invalid_argument("ContravariantParams: non-finite field");
    if (!(tau < 0.0)) throw std::invalid_argument("ContravariantParams: tau must be < 0");
    if (y < 1.0 + std::abs(tau) - kSlack)
        throw std::invalid_argument("ContravariantParams: y >= 1 + |tau| violated (not a channel)");
}

ChannelParams covariant_partner(double kappa) {
    if (!(kappa > 1.0)) throw std::invalid_argument("covariant_partner: kappa must be > 1");
    return {kappa - 1.0, kappa};
}

ConjugatorDecomposition decompose(const ContravariantParams& params) {
    params.validate();
    double at = std::abs(params.tau);
    double y = std::max(params.y, 1.0 + at); // clip the validity slack
    ConjugatorDecomposition dec;
    dec.kappa = (y + at + 1.0) / 2.0;
    // y >= 1 + |tau| makes the quotient <= 1 analytically; rounding in the
    // denominator can push quantum-limited cases one ulp past it
    dec.eta = std::min(2.0 * at / (y + at - 1.0), 1.0);
    return dec;
}

ContravariantParams recompose(const ConjugatorDecomposition& dec) {
    if (!(dec.kappa > 1.0)) throw std::invalid_argument("recompose: kappa must be > 1");
    if (!(dec.eta > 0.0) || dec.eta > 1.0)
        throw std::invalid_argument("recompose: eta must be in (0, 1]");
    ContravariantParams params;
    params.tau = -dec.eta * (dec.kappa - 1.0);
    // loss noise (1 - eta) amplified by (kappa - 1), plus the conjugator's own
    // kappa: y = (kappa - 1)(1 - eta) + kappa
    params.y = (dec.kappa - 1.0) * (2.0 - dec.eta) + 1.0;
    return params;
}

OutputEntropy contravariant_output_entropy(const ContravariantParams& params,
                                           const FockDistribution& p, const EvolveOptions& opt) {
    ConjugatorDecomposition dec = decompose(params);
    FockDistribution stage = p;
    if (dec.eta < 1.0) {
        LindbladSpec loss = lindblad_from_kind(Loss{dec.eta, 0.0});
        stage = evolve(loss, p, opt);
    }
    // tail bounds accumulate through evolve, so the final budget reported by
    // output_entropy already covers the loss leg
    LindbladSpec amp = lindblad_from_params(covariant_partner(dec.kappa));
    return output_entropy(amp, stage, opt);
}

double min_output_entropy_contravariant(const ContravariantParams& params, double S0) {
    if (!(S0 >= 0.0))
        throw std::invalid_argument("min_output_entropy_contravariant: S0 must be >= 0");
    ConjugatorDecomposition dec = decompose(params);
    double S1 = g(dec.eta * g_inverse(S0));
    return g((dec.kappa - 1.0) * (g_inverse(S1) + 1.0));
}

} // namespace moe
