#include "moelab/fock.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "moelab/errors.hpp"
#include "moelab/rng.hpp"

namespace moe {

namespace {

// compensated summation; the entropy identities in the tests rely on sums
// being accurate to a few ulps even at dim ~ 2000
double kahan_sum(std::span<const double> v) {
    double s = 0.0, c = 0.0;
    for (double x : v) {
        double y = x - c;
        double t = s + y;
        c = (t - s) - y;
        s = t;
    }
    return s;
}

} // namespace

double FockDistribution::sum() const { return kahan_sum(p); }

void FockDistribution::validate() const {
    if (p.empty()) throw std::invalid_argument("FockDistribution: empty window");
    if (!(tail_bound >= 0.0) || tail_bound >= 1.0)
        throw std::invalid_argument("FockDistribution: tail_bound outside [0, 1)");
    for (std::size_t n = 0; n < p.size(); ++n) {
        if (!(p[n] >= 0.0) || !std::isfinite(p[n]))
            throw std::invalid_argument("FockDistribution: negative or non-finite entry at level " +
                                        std::to_string(n));
    }
    double s = sum();
    if (s > 1.0 + kNormSlack || s < 1.0 - tail_bound - kNormSlack)
        throw std::invalid_argument("FockDistribution: window sum " + std::to_string(s) +
                                    " inconsistent with tail bound " + std::to_string(tail_bound));
}

void FockDistribution::require_within_budget() const {
    if (tail_bound >= kTailBudget)
        throw TruncationError("tail bound " + std::to_string(tail_bound) +
                              " exceeds the accuracy budget; enlarge the truncation window");
}

void PassiveDistribution::validate() const {
    FockDistribution::validate();
    for (std::size_t n = 1; n < p.size(); ++n)
        if (p[n] > p[n - 1])
            throw std::invalid_argument("PassiveDistribution: entries increase at level " +
                                        std::to_string(n));
    if (support) {
        if (*support < 0 || *support >= dim())
            throw std::invalid_argument("PassiveDistribution: support index out of range");
        if (p[static_cast<std::size_t>(*support)] <= 0.0)
            throw std::invalid_argument("PassiveDistribution: support level has zero weight");
        for (std::size_t n = static_cast<std::size_t>(*support) + 1; n < p.size(); ++n)
            if (p[n] != 0.0)
                throw std::invalid_argument("PassiveDistribution: weight beyond declared support");
    } else if (p.back() <= 0.0) {
        throw std::invalid_argument("PassiveDistribution: full-window support declared but the "
                                    "last level is empty");
    }
}

double raw_entropy(std::span<const double> v) {
    double s = 0.0, c = 0.0;
    for (double x : v) {
        if (x <= 0.0) continue;
        double term = -x * std::log(x);
        double y = term - c;
        double t = s + y;
        c = (t - s) - y;
        s = t;
    }
    return s;
}

double shannon_entropy(const FockDistribution& p) {
    p.validate();
    return raw_entropy(p.p);
}

double g(double nbar) {
    if (!(nbar >= 0.0)) throw std::invalid_argument("g: nbar must be >= 0");
    if (nbar == 0.0) return 0.0;
    // (nbar+1)ln(nbar+1) - nbar ln nbar, grouped to avoid cancellation of two
    // n ln n sized terms at large nbar
    return nbar * std::log1p(1.0 / nbar) + std::log1p(nbar);
}

double g_inverse(double S) {
    if (!(S >= 0.0)) throw std::invalid_argument("g_inverse: entropy must be >= 0");
    if (S == 0.0) return 0.0;
    if (S > 700.0) throw std::invalid_argument("g_inverse: entropy too large to invert in double");
    // g(x) >= ln(x+1), so exp(S) brackets from above; g increases strictly.
    double lo = 0.0, hi = std::max(1.0, std::exp(S));
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        (g(mid) < S ? lo : hi) = mid;
    }
    // two Newton polish steps; g'(x) = ln((x+1)/x)
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 3; ++it) {
        double deriv = std::log1p(1.0 / x);
        if (!(deriv > 0.0)) break;
        double step = (g(x) - S) / deriv;
        double next = x - step;
        if (next <= lo || next >= hi) break;
        x = next;
    }
    return x;
}

double entropy_error_budget(double tail_bound, int dim) {
    if (tail_bound <= 0.0) return 0.0;
    double d = std::max(dim, 2);
    return tail_bound * std::log(d) - tail_bound * std::log(tail_bound);
}

PassiveDistribution thermal_distribution(double nbar, int dim) {
    if (!(nbar >= 0.0)) throw std::invalid_argument("thermal_distribution: nbar must be >= 0");
    if (dim < 1) throw std::invalid_argument("thermal_distribution: dim must be >= 1");
    PassiveDistribution out;
    out.p.assign(static_cast<std::size_t>(dim), 0.0);
    if (nbar == 0.0) {
        out.p[0] = 1.0;
        out.tail_bound = 0.0;
        out.support = 0;
        return out;
    }
    double r = nbar / (1.0 + nbar);
    out.p[0] = 1.0 / (1.0 + nbar);
    for (int n = 1; n < dim; ++n) out.p[n] = out.p[n - 1] * r;
    out.tail_bound = std::exp(dim * std::log(r));
    int last = dim - 1;
    while (last > 0 && out.p[static_cast<std::size_t>(last)] == 0.0) --last;
    out.support = (last == dim - 1 && out.p.back() > 0.0) ? std::nullopt
                                                          : std::make_optional(last);
    return out;
}

int thermal_dim_for_tail(double nbar, double tail_target) {
    if (!(nbar >= 0.0)) throw std::invalid_argument("thermal_dim_for_tail: nbar must be >= 0");
    if (!(tail_target > 0.0) || tail_target >= 1.0)
        throw std::invalid_argument("thermal_dim_for_tail: target must be in (0, 1)");
    if (nbar == 0.0) return 1;
    double lr = std::log(nbar / (1.0 + nbar));
    return static_cast<int>(std::ceil(std::log(tail_target) / lr));
}

PassiveDistribution passive_rearrange(const FockDistribution& p) {
    p.validate();
    PassiveDistribution out;
    out.p = p.p;
    out.tail_bound = p.tail_bound;
    std::sort(out.p.begin(), out.p.end(), std::greater<double>());
    int last = out.dim() - 1;
    while (last > 0 && out.p[static_cast<std::size_t>(last)] == 0.0) --last;
    out.support = (out.p.back() > 0.0) ? std::nullopt : std::make_optional(last);
    return out;
}

std::vector<double> temper_to_entropy(std::span<const double> base, double S0) {
    const std::size_t d = base.size();
    if (d == 0) throw std::invalid_argument("temper_to_entropy: empty base");
    std::vector<double> logs(d);
    for (std::size_t i = 0; i < d; ++i) {
        if (!(base[i] > 0.0)) throw std::invalid_argument("temper_to_entropy: base must be strictly positive");
        logs[i] = std::log(base[i]);
    }

    const double lmax = *std::max_element(logs.begin(), logs.end());

    std::vector<double> q(d);
    // entropy of base^beta (renormalized); logs are shifted against the
    // largest entry before exponentiation so large beta cannot overflow
    auto tempered_entropy = [&](double beta) {
        double z = 0.0, zc = 0.0, wl = 0.0, wlc = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            double arg = beta * (logs[i] - lmax);
            double e = std::exp(arg);
            q[i] = e;
            double y = e - zc;
            double t = z + y;
            zc = (t - z) - y;
            z = t;
            double term = e * arg;
            double y2 = term - wlc;
            double t2 = wl + y2;
            wlc = (t2 - wl) - y2;
            wl = t2;
        }
        for (std::size_t i = 0; i < d; ++i) q[i] /= z;
        return std::log(z) - wl / z;
    };

    if (S0 > std::log(static_cast<double>(d)) - 1e-7)
        throw std::invalid_argument("temper_to_entropy: target entropy unreachable within dim");

    double s_base = tempered_entropy(1.0);
    if (std::abs(s_base - S0) <= 5e-11) return q;

    // entropy decreases in the exponent: beta = 0 is uniform (ln dim),
    // beta -> inf concentrates on the largest entry
    double lo, hi;
    if (S0 > s_base) {
        lo = 0.0;
        hi = 1.0;
    } else {
        lo = 1.0;
        hi = 2.0;
        int guard = 0;
        while (tempered_entropy(hi) > S0) {
            hi *= 2.0;
            if (++guard > 64)
                throw std::invalid_argument("temper_to_entropy: target entropy unreachable");
        }
    }

    for (int it = 0; it < 400; ++it) {
        double mid = 0.5 * (lo + hi);
        double s = tempered_entropy(mid);
        if (std::abs(s - S0) <= 5e-11) return q;
        (s > S0 ? lo : hi) = mid;
        if (hi - lo <= 1e-18 * (1.0 + hi)) break;
    }
    double s_final = tempered_entropy(0.5 * (lo + hi));
    if (std::abs(s_final - S0) > 1e-10)
        throw NumericalError("temper_to_entropy: bisection stalled at entropy gap " +
                             std::to_string(s_final - S0));
    return q;
}

namespace {

PassiveDistribution finish_sample(std::vector<double>&& q, int dim) {
    PassiveDistribution out;
    out.p = std::move(q);
    out.tail_bound = 0.0;
    int last = dim - 1;
    while (last > 0 && out.p[static_cast<std::size_t>(last)] == 0.0) --last;
    out.support = (out.p.back() > 0.0) ? std::nullopt : std::make_optional(last);
    out.validate();
    return out;
}

std::vector<double> sorted_dirichlet(int dim, Rng& rng) {
    std::vector<double> w(static_cast<std::size_t>(dim));
    for (double& x : w) x = rng.exponential();
    std::sort(w.begin(), w.end(), std::greater<double>());
    double s = kahan_sum(w);
    for (double& x : w) x /= s;
    return w;
}

void check_sample_pre(double S0, int dim) {
    if (dim < 1) throw std::invalid_argument("sampler: dim must be >= 1");
    if (!(S0 >= 0.0)) throw std::invalid_argument("sampler: S0 must be >= 0");
    if (S0 > std::log(static_cast<double>(dim)) - 1e-6)
        throw std::invalid_argument("sampler: S0 unreachable within dim (raise dim)");
}

} // namespace

PassiveDistribution sample_passive_with_entropy(double S0, int dim, std::uint64_t seed) {
    check_sample_pre(S0, dim);
    if (S0 <= 1e-14) {
        PassiveDistribution out;
        out.p.assign(static_cast<std::size_t>(dim), 0.0);
        out.p[0] = 1.0;
        out.support = 0;
        return out;
    }
    Rng rng(seed);
    std::vector<double> base = sorted_dirichlet(dim, rng);
    return finish_sample(temper_to_entropy(base, S0), dim);
}

PassiveDistribution sample_full_support_passive(double S0, int dim, std::uint64_t seed) {
    check_sample_pre(S0, dim);
    if (S0 <= 1e-14)
        throw std::invalid_argument("sample_full_support_passive: S0 = 0 has no full-support "
                                    "representative");
    Rng rng(seed);
    std::vector<double> base = sorted_dirichlet(dim, rng);
    // blend with a slowly decaying geometric floor so every level keeps enough
    // weight to survive tempering without underflow
    double r = std::exp(-5.0 / dim);
    double head = (1.0 - r) / (1.0 - std::exp(dim * std::log(r)));
    double level = head;
    for (int n = 0; n < dim; ++n) {
        base[static_cast<std::size_t>(n)] =
            0.99 * base[static_cast<std::size_t>(n)] + 0.01 * level;
        level *= r;
    }
    double s = kahan_sum(base);
    for (double& x : base) x /= s;
    PassiveDistribution out = finish_sample(temper_to_entropy(base, S0), dim);
    if (out.support)
        throw NumericalError("sample_full_support_passive: tempering underflowed a level");
    return out;
}

double total_variation(const FockDistribution& a, const FockDistribution& b) {
    if (a.dim() != b.dim())
        throw std::invalid_argument("total_variation: window sizes differ");
    double s = 0.0, c = 0.0;
    for (int n = 0; n < a.dim(); ++n) {
        double term = std::abs(a.p[static_cast<std::size_t>(n)] - b.p[static_cast<std::size_t>(n)]);
        double y = term - c;
        double t = s + y;
        c = (t - s) - y;
        s = t;
    }
    return 0.5 * s;
}

} // namespace moe
