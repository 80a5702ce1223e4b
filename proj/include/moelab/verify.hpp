#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "moelab/channel.hpp"
#include "moelab/fock.hpp"
#include "moelab/rng.hpp"

namespace moe {

// Summary of a randomized evidence run. `min_gap` is the smallest observed
// difference trial_entropy - thermal_baseline, with ties broken by trial
// index; violations counts trials whose gap fell below minus the error
// budget. Reports with identical (channel, S0, trials, seed, dim) are
// byte-identical regardless of worker count.
struct VerificationReport {
    std::string mode;
    LindbladSpec channel;
    double S0 = 0.0;
    int dim = 0;
    int trials = 0;
    std::uint64_t seed = 0;

    double baseline_closed = 0.0;  // transport-formula thermal output entropy
    double baseline_evolved = 0.0; // evolved thermal output entropy (primary)
    double min_gap = 0.0;
    int argmin_trial = -1;
    std::uint64_t argmin_seed = 0;
    int violations = 0;
    int excluded = 0;         // trials aborted on truncation budget
    int divergent_trials = 0; // infinitesimal mode: +infinity rates (never violations)
    double entropy_error_budget = 0.0; // largest per-trial budget used
    std::string status;                // "PASS" or "FINDING"
};

// Worker pool size: MOELAB_WORKERS when set (>= 1), else 1. Results never
// depend on it.
int worker_count();

// Sampled passive inputs at entropy S0 evolved through the channel; gaps are
// measured against the evolved thermal baseline.
VerificationReport verify_conjecture_finite(const LindbladSpec& spec, double S0, int trials,
                                            std::uint64_t seed, int dim);

// Entropy production rates at t = 0 of full-support passive inputs, measured
// against the thermal rate.
VerificationReport verify_conjecture_infinitesimal(const LindbladSpec& spec, double S0,
                                                   int trials, std::uint64_t seed, int dim);

// Projected-gradient descent of the output entropy over passive inputs with
// fixed entropy S0. The gradient comes from the adjoint evolution and is
// finite-difference cross-checked in the tests.
struct LocalSearchResult {
    PassiveDistribution state;
    double output_entropy = 0.0;
    double baseline = 0.0; // evolved thermal output entropy at the same S0
    int iterations_used = 0;
};

LocalSearchResult local_search_min_entropy(const LindbladSpec& spec, double S0, int dim,
                                           int iterations, std::uint64_t seed);

// Full density matrix on the truncated window, for the dense oracle.
struct DenseState {
    Eigen::MatrixXcd rho;

    int dim() const { return static_cast<int>(rho.rows()); }
    void validate() const; // Hermitian, unit trace, eigenvalues >= -1e-10
};

// Random spectrum (flat Dirichlet) conjugated by a Haar-random unitary.
DenseState random_dense_state(int dim, Rng& rng);

// Integrate the full Lindblad generator (not just diagonals). Window limited
// to dim <= 32; restricted to diagonal states it reproduces `evolve`.
DenseState dense_evolve(const LindbladSpec& spec, const DenseState& state,
                        double abs_tol = 1e-13, double rel_tol = 1e-12);

double von_neumann_entropy(const DenseState& state);

// Random dense states of window `dim` evolved inside the full 32-level oracle
// window; gap = S(evolved rho) - S(evolved passive rearrangement of rho's
// spectrum).
VerificationReport check_passive_reduction(const LindbladSpec& spec, int dim, int trials,
                                           std::uint64_t seed);

// Entropy gain over shrinking horizons for a finite-support input;
// quotient = [S(p(dt)) - S(p(0))] / (dt ln(1/dt)) tracks the leading
// divergence when gamma_plus > 0 and saturates when gamma_plus = 0.
struct DivergenceRow {
    double dt = 0.0;
    double entropy_out = 0.0;
    double quotient = 0.0;
};

std::vector<DivergenceRow> check_finite_support_divergence(const LindbladSpec& spec,
                                                           int support_level, int dim,
                                                           std::span<const double> dt_grid);

// Thermal transport chain under k equal time slices of the channel; the evolved
// entropy must track the closed-form chain and the composed map must agree
// with the single-shot map.
struct DiscretizationRow {
    int k = 0;
    double nbar_chain = 0.0;
    double entropy_chain = 0.0;
    double entropy_evolved = 0.0;
};

struct DiscretizationTable {
    std::vector<DiscretizationRow> rows;
    double tv_composed_vs_single = 0.0;
};

DiscretizationTable check_discretization(const LindbladSpec& spec, double S0, int steps, int dim);

} // namespace moe
