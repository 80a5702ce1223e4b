#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace moe {

// Probability mass allowed to live outside a truncation window before
// entropy/evolution results stop being trusted.
inline constexpr double kTailBudget = 1e-9;

// Slack allowed on window normalization sums.
inline constexpr double kNormSlack = 1e-12;

// Photon-number distribution on the truncated Fock window {0, ..., dim-1}.
// `tail_bound` is an upper bound on the probability mass that the truncation
// cannot represent; the window sum must lie in [1 - tail_bound - 1e-12, 1 + 1e-12].
struct FockDistribution {
    std::vector<double> p;
    double tail_bound = 0.0;

    int dim() const { return static_cast<int>(p.size()); }
    double sum() const;

    // Throws std::invalid_argument if entries are negative, the window sum is
    // off-budget, or tail_bound is not in [0, 1).
    void validate() const;

    // Throws TruncationError if tail_bound >= kTailBudget. Evolution and
    // entropy routines call this on their inputs.
    void require_within_budget() const;
};

// A FockDistribution whose entries are non-increasing in n (diagonal of a
// passive state). `support` is the largest occupied level, or nullopt when the
// distribution is positive through the whole window ("infinite within
// truncation").
struct PassiveDistribution : FockDistribution {
    std::optional<int> support;

    void validate() const;
};

// Shannon entropy in nats, with 0 ln 0 = 0. Validates the input.
double shannon_entropy(const FockDistribution& p);

// -sum v ln v over raw entries without any validation; used for finite
// differences on unnormalized vectors.
double raw_entropy(std::span<const double> v);

// Entropy of a thermal (geometric) distribution with mean photon number nbar:
// g(nbar) = (nbar+1) ln(nbar+1) - nbar ln nbar.
double g(double nbar);

// Inverse of g on nbar >= 0, bracketed bisection polished by Newton;
// |g(result) - S| <= 1e-12.
double g_inverse(double S);

// Entropy uncertainty attributable to unrepresented tail mass eps in a window
// of size dim: eps ln dim - eps ln eps (0 when eps <= 0). This assumes the
// missing mass is not spread over a range vastly wider than the window itself.
double entropy_error_budget(double tail_bound, int dim);

// Geometric photon-number distribution of a thermal state with mean nbar,
// truncated to dim levels; tail_bound = (nbar/(1+nbar))^dim.
PassiveDistribution thermal_distribution(double nbar, int dim);

// Smallest window size for which the thermal tail bound drops below
// tail_target.
int thermal_dim_for_tail(double nbar, double tail_target);

// Sort the entries non-increasing (diagonal of the passive rearrangement).
// The entry multiset, and hence the entropy, is unchanged.
PassiveDistribution passive_rearrange(const FockDistribution& p);

// Deterministic sampler: a Dirichlet(1,...,1) draw sorted non-increasing is
// power-tempered (p -> p^beta, renormalized) until its entropy matches S0
// within 1e-10. S0 = 0 returns the vacuum. Requires 0 <= S0 <= ln(dim) - 1e-6.
PassiveDistribution sample_passive_with_entropy(double S0, int dim, std::uint64_t seed);

// Variant guaranteeing strictly positive entries through the whole window
// (the Dirichlet draw is blended with a slowly decaying geometric floor
// before tempering). Used where exact zeros must not occur.
PassiveDistribution sample_full_support_passive(double S0, int dim, std::uint64_t seed);

// The shared tempering mechanism: given a normalized, strictly positive base,
// returns the power-tempered vector base^beta (renormalized) whose entropy is
// S0 within 1e-10. Entropy is monotone decreasing in beta, with beta = 0 the
// uniform vector, so any S0 in [0, ln dim) is reachable and the bisection is
// bracket-safe.
std::vector<double> temper_to_entropy(std::span<const double> base, double S0);

// Half L1 distance between the windows of a and b (dims must match).
double total_variation(const FockDistribution& a, const FockDistribution& b);

} // namespace moe
