#pragma once

#include <optional>
#include <string>
#include <vector>

#include "moelab/fock.hpp"

namespace moe {

// Scalar building blocks of the stationarity recursion for rates
// (gamma_plus, gamma_minus), all on x in (0, 1]:
//   f(x) = gamma_minus x + gamma_plus ln x          (strictly increasing)
//   g(x) = gamma_minus ln x - gamma_plus / x        (strictly increasing)
//   h(x) = (gamma_minus x + gamma_plus/x - gamma_plus - gamma_minus) / ln x,
//          continued through x = 1 with h(1) = gamma_minus - gamma_plus
//   delta(x) = gamma_plus + gamma_minus - gamma_plus/x - gamma_minus x
//              + (gamma_minus - gamma_plus - mu) ln x
double f_func(double x, double gp, double gm);
double g_func(double x, double gp, double gm);
double h_func(double x, double gp, double gm);
double delta_func(double x, double gp, double gm, double mu);

// Solve f(x) = target on (0, 1]. Empty when the target is outside f's range
// there ((0, gamma_minus] for gamma_plus = 0, (-inf, gamma_minus] otherwise).
std::optional<double> invert_f(double target, double gp, double gm);

// The multiplier that makes the constant sequence z stationary:
// mu = gamma_minus - gamma_plus - h(z).
double mu_for_constant_ratio(double z, double gp, double gm);

enum class Monotonicity { Constant, StrictlyIncreasing, StrictlyDecreasing, Invalid };

// Consecutive-ratio sequence z_n = p_{n+1}/p_n generated by the two-term
// recursion; classification is Invalid when an f-inversion target leaves the
// admissible range at a finite step.
struct RatioSequence {
    std::vector<double> z;
    Monotonicity classification = Monotonicity::Invalid;
    double mu = 0.0;
    double gamma_plus = 0.0;
    double gamma_minus = 0.0;

    int invalid_step = -1;      // first step that failed, when Invalid
    std::string invalid_reason;

    // set when the ratios underflow the representable range (doubly
    // exponential collapse); entries beyond carry exactly zero weight
    std::optional<int> collapsed_at;

    // empirical ordering of the generated prefix, also for Invalid sequences
    Monotonicity prefix_order = Monotonicity::Invalid;
};

RatioSequence iterate_recursion(double z0, double mu, double gp, double gm, int n_max);

// Predicts the trichotomy from the seed alone: sign of
// h(z0) - (gamma_minus - gamma_plus - mu), with a 1e-12 dead band -> Constant.
Monotonicity classify_seed(double z0, double mu, double gp, double gm);

// Cumulative products of the ratios, window-normalized. Increasing sequences
// are rejected (no usable tail bound); a sequence of all ones is
// unnormalizable.
PassiveDistribution distribution_from_ratios(const RatioSequence& seq, int dim);

// max_n |master equation residual| / max(1, term scale) over the stored prefix
double master_residual(const RatioSequence& seq);

// max_n |raw Lagrangian stationarity residual| / max(1, term scale), with the
// multiplier lambda eliminated through the n = 0 equation
double raw_stationarity_residual(const RatioSequence& seq, const PassiveDistribution& p);

enum class Branch { Geometric, SuperExponential };

struct CriticalPoint {
    Branch branch = Branch::Geometric;
    double mu = 0.0;
    double z0 = 0.0;
    double z_end = 0.0; // last stored ratio (0 after collapse)
    PassiveDistribution distribution;
    double entropy = 0.0;
    std::vector<double> ratios; // stored prefix (at most the scan's n_max)
    double residual_master = 0.0;
    double residual_raw = 0.0;
    double objective = 0.0;        // entropy production rate of the candidate
    bool objective_is_prefix = false; // true when levels below underflow were dropped
};

enum class SecondBranchStatus { Found, NoneExists, BudgetExhausted };

struct ScanSettings {
    int mu_points = 400;
    int z0_points = 400;
    int n_max = 2000;
    double z0_min = 1e-6;
    double z0_max = 1.0 - 1e-6;
    double entropy_tol = 1e-8;  // refinement target |S - S0|
    int max_bisect = 200;
    double collapse_cut = 1e-3; // last ratio must fall below this to count as collapsed
};

struct CriticalScan {
    std::vector<CriticalPoint> points;
    SecondBranchStatus second_branch = SecondBranchStatus::NoneExists;
    int decreasing_cells = 0; // coarse cells classified decreasing
    int surviving_cells = 0;  // of those, sequences that never left (0, 1]
};

// Entropy-constrained stationary candidates: the geometric point plus every
// refined decreasing-branch crossing of the target entropy found on the
// (mu, z0) grid. For gamma_plus = 0 a decreasing sequence that collapses to
// zero ratios is a numerical contradiction and raises logic_error; slow
// drifters that merely outlast n_max inside (0, 1] are counted in
// surviving_cells and otherwise ignored.
CriticalScan find_critical_points(double gp, double gm, double S0, int dim,
                                  const ScanSettings& settings = {});

} // namespace moe
