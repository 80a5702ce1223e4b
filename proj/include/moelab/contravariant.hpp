#pragma once

#include "moelab/channel.hpp"
#include "moelab/fock.hpp"

namespace moe {

// Phase-contravariant Gaussian channel: sigma -> |tau| sigma^T + y with
// tau < 0. TPCP requires y >= 1 + |tau|.
struct ContravariantParams {
    double tau = -1.0;
    double y = 2.0;

    void validate() const;
};

// Every contravariant channel factors as a pure loss of transmissivity eta
// followed by conjugation composed into a measure-and-prepare amplification
// stage of gain kappa:
//   |tau| = eta (kappa - 1),  y = (kappa - 1)(1 - eta) + kappa.
struct ConjugatorDecomposition {
    double eta = 1.0;
    double kappa = 2.0;
};

// The phase-covariant channel with the same output statistics on
// photon-number diagonals as the conjugating stage: tau = kappa - 1,
// y = kappa. Requires kappa > 1.
ChannelParams covariant_partner(double kappa);

// Closed-form split: kappa = (y + |tau| + 1)/2, eta = 2|tau|/(y + |tau| - 1).
// Quantum-limited inputs (y = 1 + |tau|) give eta = 1.
ConjugatorDecomposition decompose(const ContravariantParams& params);
ContravariantParams recompose(const ConjugatorDecomposition& dec);

// Output entropy of the channel on a photon-number diagonal input: loss stage
// at eta, then the covariant partner of the conjugating stage (the transpose
// does not move photon-number diagonals).
OutputEntropy contravariant_output_entropy(const ContravariantParams& params,
                                           const FockDistribution& p,
                                           const EvolveOptions& opt = {});

// Minimum output entropy over inputs of entropy S0, reached on the thermal
// input: S1 = g(eta g^-1(S0)), result = g((kappa - 1)(g^-1(S1) + 1)).
double min_output_entropy_contravariant(const ContravariantParams& params, double S0);

} // namespace moe
