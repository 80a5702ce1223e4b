#pragma once

#include <span>
#include <variant>
#include <vector>

#include "moelab/fock.hpp"

namespace moe {

// Birth-death generator acting on photon-number diagonals:
//   dp_n/dt = gamma_plus [n p_{n-1} - (n+1) p_n] + gamma_minus [(n+1) p_{n+1} - n p_n]
// run for duration t >= 0. Both rates zero with t > 0 is the identity channel
// (permitted; evolution is then a no-op).
struct LindbladSpec {
    double gamma_plus = 0.0;
    double gamma_minus = 0.0;
    double t = 0.0;

    void validate() const;
    bool is_identity() const { return t == 0.0 || (gamma_plus == 0.0 && gamma_minus == 0.0); }
};

// Gaussian channel action on symmetrized covariance: sigma -> tau sigma + y.
// TPCP requires y >= |tau - 1|.
struct ChannelParams {
    double tau = 1.0;
    double y = 0.0;

    void validate() const;
};

struct Loss {
    double eta; // transmissivity in (0, 1]
    double N;   // environment mean photon number, >= 0
};
struct Amplifier {
    double kappa; // gain > 1
    double N;     // environment mean photon number, >= 0
};
struct Additive {
    double N; // added noise variance per quadrature pair, >= 0
};
using ChannelKind = std::variant<Loss, Amplifier, Additive>;

LindbladSpec lindblad_from_kind(const ChannelKind& kind);
ChannelParams params_from_kind(const ChannelKind& kind);

// (tau, y) reached by running the generator for its duration; inverse below.
ChannelParams params_from_lindblad(const LindbladSpec& spec);
LindbladSpec lindblad_from_params(const ChannelParams& params);

// Mean photon number of the output when the input is thermal with mean nbar.
double thermal_output_nbar(const ChannelParams& params, double nbar);

// One application of the generator (no truncation repair; the caller sees the
// raw rates, whose total is the instantaneous trace leak -gamma_plus*dim*p_{dim-1}).
std::vector<double> generator_apply(const LindbladSpec& spec, const FockDistribution& p);

enum class EvolveEngine {
    Adaptive,         // embedded Runge-Kutta with per-step error control
    DenseExponential, // explicit matrix exponential of the window generator
};

struct EvolveOptions {
    EvolveEngine engine = EvolveEngine::Adaptive;
    double abs_tol = 1e-13;
    double rel_tol = 1e-12;
};

// Evolve p through the channel. Mass that crosses the window boundary is
// accumulated and added to tail_bound; if the result exceeds the tail budget a
// TruncationError asks the caller to retry with a larger window. Entries that
// round slightly negative (>= -1e-12) are clamped to zero; anything below
// that aborts as a NumericalError. The window sum is rescaled to the conserved
// total (input mass minus leak); drift beyond 1e-10 also aborts.
FockDistribution evolve(const LindbladSpec& spec, const FockDistribution& p,
                        const EvolveOptions& opt = {});

struct OutputEntropy {
    double value;        // nats
    double error_budget; // from tail mass plus integration allowance
};

OutputEntropy output_entropy(const LindbladSpec& spec, const FockDistribution& p,
                             const EvolveOptions& opt = {});

// output_entropy on an automatically trimmed copy of p: the window starts at
// the smallest size whose dropped mass stays below window_budget (plus
// amplification headroom) and grows on truncation failures, never beyond
// p.dim(). Lets wide, sharply decaying inputs evolve at a realistic cost.
OutputEntropy output_entropy_windowed(const LindbladSpec& spec, const FockDistribution& p,
                                      double window_budget = 1e-12,
                                      const EvolveOptions& opt = {});

// d/dt S(p(t)) at t = 0 for a passive input. When gamma_plus > 0 and the input
// has finite support strictly inside the window the rate is +infinity
// (upward flow into an empty level); `divergent` reports that case and `value`
// is then meaningless.
struct EntropyRate {
    bool divergent = false;
    double value = 0.0;
};

EntropyRate entropy_derivative_at_zero(const LindbladSpec& spec, const PassiveDistribution& p);

// Integrate v' = L^T v for the channel's duration (adjoint of the window map,
// leak row dropped). Gradient helper; no probability semantics.
std::vector<double> evolve_transpose(const LindbladSpec& spec, std::span<const double> v,
                                     double abs_tol = 1e-13, double rel_tol = 1e-12);

} // namespace moe
