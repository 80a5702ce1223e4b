#include "moelab/critical.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "moelab/channel.hpp"
#include "moelab/errors.hpp"

namespace moe {

namespace {

// Below this the ratio sequence has left the representable range: every later
// level would multiply in another factor < 1e-250, so the remaining weights
// are exact zeros in double precision.
constexpr double kZFloor = 1e-250;

void check_rates(double gp, double gm) {
    if (!(gp >= 0.0) || !(gm >= 0.0))
        throw std::invalid_argument("rates must be >= 0");
    if (gp == 0.0 && gm == 0.0)
        throw std::invalid_argument("rates must not both vanish");
}

void check_ratio_domain(double x) {
    if (!(x > 0.0) || x > 1.0)
        throw std::invalid_argument("ratio argument must lie in (0, 1]");
}

} // namespace

double f_func(double x, double gp, double gm) {
    check_rates(gp, gm);
    check_ratio_domain(x);
    return gm * x + gp * std::log(x);
}

double g_func(double x, double gp, double gm) {
    check_rates(gp, gm);
    check_ratio_domain(x);
    return gm * std::log(x) - gp / x;
}

double h_func(double x, double gp, double gm) {
    check_rates(gp, gm);
    check_ratio_domain(x);
    double lx = std::log(x);
    if (std::abs(lx) < 1e-8) {
        // removable singularity at x = 1; series in u = x - 1
        double u = x - 1.0;
        return (gm - gp) + 0.5 * (gm + gp) * u - ((gm - gp) / 12.0 + 0.5 * gp) * u * u;
    }
    return (gm * x + gp / x - gp - gm) / lx;
}

double delta_func(double x, double gp, double gm, double mu) {
    // identity form delta = ln(x) [(gm - gp - mu) - h(x)]; keeps the sign of
    // the first recursion step exactly consistent with classify_seed
    check_rates(gp, gm);
    check_ratio_domain(x);
    if (x == 1.0) return 0.0;
    return std::log(x) * ((gm - gp - mu) - h_func(x, gp, gm));
}

double mu_for_constant_ratio(double z, double gp, double gm) {
    return gm - gp - h_func(z, gp, gm);
}

std::optional<double> invert_f(double target, double gp, double gm) {
    check_rates(gp, gm);
    if (target > gm) return std::nullopt; // above f(1)
    if (gp == 0.0) {
        if (!(target > 0.0)) return std::nullopt; // below the pure-loss range
        return target / gm;
    }
    // Newton on phi(w) = gm e^w + gp w - target in w = ln x; phi is convex and
    // increasing, and phi(0) >= 0, so iterates decrease monotonically to the root
    double w = 0.0;
    double phi = gm - target;
    for (int it = 0; it < 200; ++it) {
        double slope = gm * std::exp(w) + gp;
        double step = phi / slope;
        w -= step;
        phi = gm * std::exp(w) + gp * w - target;
        if (std::abs(phi) <= 1e-15 * (1.0 + std::abs(target)) &&
            std::abs(step) <= 1e-13 * (1.0 + std::abs(w)))
            break;
    }
    return std::exp(w);
}

Monotonicity classify_seed(double z0, double mu, double gp, double gm) {
    check_rates(gp, gm);
    if (!(z0 > 0.0) || z0 >= 1.0)
        throw std::invalid_argument("classify_seed: z0 must lie in (0, 1)");
    double d = h_func(z0, gp, gm) - (gm - gp - mu);
    if (std::abs(d) <= 1e-12) return Monotonicity::Constant;
    return d > 0.0 ? Monotonicity::StrictlyIncreasing : Monotonicity::StrictlyDecreasing;
}

RatioSequence iterate_recursion(double z0, double mu, double gp, double gm, int n_max) {
    check_rates(gp, gm);
    if (!(z0 > 0.0) || z0 > 1.0)
        throw std::invalid_argument("iterate_recursion: z0 must lie in (0, 1]");
    if (n_max < 1) throw std::invalid_argument("iterate_recursion: n_max must be >= 1");

    RatioSequence seq;
    seq.mu = mu;
    seq.gamma_plus = gp;
    seq.gamma_minus = gm;
    seq.z.reserve(static_cast<std::size_t>(n_max) + 1);
    seq.z.push_back(z0);

    auto fail = [&](int step, std::string reason) {
        seq.invalid_step = step;
        seq.invalid_reason = std::move(reason);
    };

    // z1 from the half-weighted first step, then the two-term recursion
    for (int n = 0; n < n_max; ++n) {
        double zn = seq.z.back();
        double target;
        if (n == 0) {
            target = f_func(zn, gp, gm) + 0.5 * delta_func(zn, gp, gm, mu);
        } else {
            double zprev = seq.z[static_cast<std::size_t>(n) - 1];
            target = f_func(zn, gp, gm) +
                     (n * (g_func(zn, gp, gm) - g_func(zprev, gp, gm)) +
                      delta_func(zn, gp, gm, mu)) /
                         (n + 2);
        }
        std::optional<double> next = invert_f(target, gp, gm);
        if (!next) {
            fail(n + 1, target > gm ? "ratio would exceed one" : "f target left the admissible range");
            break;
        }
        seq.z.push_back(*next);
        if (*next < kZFloor) {
            seq.collapsed_at = n + 1;
            break;
        }
    }

    // empirical ordering of the generated prefix
    double drift = 0.0;
    int ups = 0, downs = 0;
    for (std::size_t k = 1; k < seq.z.size(); ++k) {
        drift = std::max(drift, std::abs(seq.z[k] - z0));
        if (seq.z[k] > seq.z[k - 1]) ++ups;
        if (seq.z[k] < seq.z[k - 1]) ++downs;
    }
    if (drift <= 1e-12)
        seq.prefix_order = Monotonicity::Constant;
    else if (ups > 0 && downs == 0)
        seq.prefix_order = Monotonicity::StrictlyIncreasing;
    else if (downs > 0 && ups == 0)
        seq.prefix_order = Monotonicity::StrictlyDecreasing;
    else
        seq.prefix_order = Monotonicity::Invalid;

    seq.classification = (seq.invalid_step >= 0) ? Monotonicity::Invalid : seq.prefix_order;
    return seq;
}

namespace {

struct RatioEntropy {
    double entropy = std::numeric_limits<double>::quiet_NaN();
    double tail_bound = 0.0;
    double z_end = 0.0;
    bool usable = false;
};

// window entropy of the normalized cumulative products, without materializing
// a validated distribution (scan inner loop)
RatioEntropy entropy_from_ratios(const std::vector<double>& z, int dim,
                                 std::vector<double>& scratch) {
    RatioEntropy out;
    if (z.empty()) return out;
    scratch.clear();
    scratch.push_back(1.0);
    int avail = static_cast<int>(z.size());
    for (int k = 0; k < dim - 1; ++k) {
        double zk = (k < avail) ? z[static_cast<std::size_t>(k)] : 0.0;
        double c = scratch.back() * zk;
        scratch.push_back(c);
        if (c == 0.0) break;
    }
    while (static_cast<int>(scratch.size()) < dim) scratch.push_back(0.0);

    double zsum = 0.0, zc = 0.0, wl = 0.0, wlc = 0.0;
    for (double c : scratch) {
        double y = c - zc;
        double t = zsum + y;
        zc = (t - zsum) - y;
        zsum = t;
        if (c > 0.0) {
            double term = c * std::log(c);
            double y2 = term - wlc;
            double t2 = wl + y2;
            wlc = (t2 - wl) - y2;
            wl = t2;
        }
    }
    double zb = (avail >= dim) ? z[static_cast<std::size_t>(dim) - 1] : z.back();
    if (zb >= 1.0) return out; // no usable geometric tail bound
    double plast = scratch[static_cast<std::size_t>(dim) - 1] / zsum;
    out.tail_bound = plast * zb / (1.0 - zb);
    out.entropy = std::log(zsum) - wl / zsum;
    out.z_end = z.back();
    out.usable = true;
    return out;
}

} // namespace

PassiveDistribution distribution_from_ratios(const RatioSequence& seq, int dim) {
    if (seq.classification == Monotonicity::Invalid)
        throw std::invalid_argument("distribution_from_ratios: sequence is Invalid");
    if (seq.classification == Monotonicity::StrictlyIncreasing)
        throw std::invalid_argument("distribution_from_ratios: increasing sequences have no "
                                    "usable tail bound");
    if (dim < 2) throw std::invalid_argument("distribution_from_ratios: dim must be >= 2");
    if (dim > static_cast<int>(seq.z.size()) + 1 && !seq.collapsed_at)
        throw std::invalid_argument("distribution_from_ratios: window larger than the stored "
                                    "ratio prefix");
    if (seq.classification == Monotonicity::Constant && seq.z.front() >= 1.0 - 1e-12)
        throw std::invalid_argument("distribution_from_ratios: constant ratio at one is "
                                    "unnormalizable");

    std::vector<double> scratch;
    RatioEntropy re = entropy_from_ratios(seq.z, dim, scratch);
    if (!re.usable)
        throw std::invalid_argument("distribution_from_ratios: tail ratio at the cut is >= 1");

    double zsum = 0.0, zc = 0.0;
    for (double c : scratch) {
        double y = c - zc;
        double t = zsum + y;
        zc = (t - zsum) - y;
        zsum = t;
    }
    PassiveDistribution out;
    out.p.resize(static_cast<std::size_t>(dim));
    for (int k = 0; k < dim; ++k) out.p[static_cast<std::size_t>(k)] = scratch[static_cast<std::size_t>(k)] / zsum;
    out.tail_bound = std::min(re.tail_bound, 1.0 - 1e-12);
    int last = dim - 1;
    while (last > 0 && out.p[static_cast<std::size_t>(last)] == 0.0) --last;
    out.support = (out.p.back() > 0.0) ? std::nullopt : std::make_optional(last);
    out.validate();
    return out;
}

double master_residual(const RatioSequence& seq) {
    const double gp = seq.gamma_plus, gm = seq.gamma_minus, mu = seq.mu;
    double worst = 0.0;
    for (std::size_t n = 0; n + 1 < seq.z.size(); ++n) {
        double zn = seq.z[n], znext = seq.z[n + 1];
        if (zn < kZFloor || znext < kZFloor) break;
        double lhs = (static_cast<double>(n) + 2.0) * (f_func(znext, gp, gm) - f_func(zn, gp, gm));
        double rhs = delta_func(zn, gp, gm, mu);
        double scale = (static_cast<double>(n) + 2.0) *
                           (std::abs(f_func(znext, gp, gm)) + std::abs(f_func(zn, gp, gm))) +
                       std::abs(rhs);
        if (n >= 1) {
            double zprev = seq.z[n - 1];
            double gdiff = g_func(zn, gp, gm) - g_func(zprev, gp, gm);
            rhs += static_cast<double>(n) * gdiff;
            scale += static_cast<double>(n) *
                     (std::abs(g_func(zn, gp, gm)) + std::abs(g_func(zprev, gp, gm)));
        }
        worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, scale));
    }
    return worst;
}

double raw_stationarity_residual(const RatioSequence& seq, const PassiveDistribution& p) {
    const double gp = seq.gamma_plus, gm = seq.gamma_minus, mu = seq.mu;
    if (p.dim() < 2) throw std::invalid_argument("raw_stationarity_residual: window too small");
    double z0 = seq.z.front();
    double lp0 = std::log(p.p[0]);
    // multiplier of the normalization constraint, eliminated through level 0
    double lambda = -gp + gm * z0 + gp * std::log(z0) + mu * (1.0 + lp0);

    double worst = 0.0;
    int kmax = std::min(p.dim() - 1, static_cast<int>(seq.z.size()) - 1);
    for (int k = 1; k <= kmax; ++k) {
        double zk = seq.z[static_cast<std::size_t>(k)];
        double zprev = seq.z[static_cast<std::size_t>(k) - 1];
        double pk = p.p[static_cast<std::size_t>(k)];
        if (zk < kZFloor || zprev < kZFloor || pk <= 0.0) break;
        double kk = k;
        double terms[8] = {
            -gp * kk / zprev,
            gp * (kk + 1.0),
            gm * kk,
            -gm * (kk + 1.0) * zk,
            -gp * (kk + 1.0) * std::log(zk),
            gm * kk * std::log(zprev),
            -mu * (1.0 + std::log(pk)),
            lambda,
        };
        double r = 0.0, scale = 0.0;
        for (double t : terms) {
            r += t;
            scale += std::abs(t);
        }
        worst = std::max(worst, std::abs(r) / std::max(1.0, scale));
    }
    return worst;
}

namespace {

// h is strictly increasing on (0, 1); solve h(x) = thr, assuming a solution
// exists in (lo, 1)
double h_inverse(double thr, double gp, double gm) {
    double wlo = std::log(1e-300), whi = -1e-14;
    for (int it = 0; it < 300; ++it) {
        double w = 0.5 * (wlo + whi);
        (h_func(std::exp(w), gp, gm) < thr ? wlo : whi) = w;
        if (whi - wlo < 1e-14) break;
    }
    return std::exp(0.5 * (wlo + whi));
}

struct ScanCell {
    double z0;
    double entropy; // NaN when the cell did not survive
};

CriticalPoint make_point(Branch branch, const RatioSequence& seq, int dim) {
    CriticalPoint pt;
    pt.branch = branch;
    pt.mu = seq.mu;
    pt.z0 = seq.z.front();
    pt.z_end = seq.z.back();
    pt.distribution = distribution_from_ratios(seq, dim);
    pt.entropy = raw_entropy(pt.distribution.p);
    pt.ratios = seq.z;
    pt.residual_master = master_residual(seq);
    pt.residual_raw = raw_stationarity_residual(seq, pt.distribution);

    // entropy production rate over the representable support
    const PassiveDistribution& d = pt.distribution;
    int last = d.dim() - 1;
    while (last > 0 && d.p[static_cast<std::size_t>(last)] == 0.0) --last;
    std::vector<double> rate =
        generator_apply({seq.gamma_plus, seq.gamma_minus, 0.0}, d);
    double s = 0.0, c = 0.0;
    for (int n = 0; n <= last; ++n) {
        double pn = d.p[static_cast<std::size_t>(n)];
        if (pn <= 0.0) continue;
        double term = -(1.0 + std::log(pn)) * rate[static_cast<std::size_t>(n)];
        double y = term - c;
        double t = s + y;
        c = (t - s) - y;
        s = t;
    }
    pt.objective = s;
    pt.objective_is_prefix = (last < d.dim() - 1) && seq.gamma_plus > 0.0;
    return pt;
}

} // namespace

CriticalScan find_critical_points(double gp, double gm, double S0, int dim,
                                  const ScanSettings& st) {
    check_rates(gp, gm);
    if (!(S0 > 0.0)) throw std::invalid_argument("find_critical_points: S0 must be > 0");
    if (dim < 2 || dim > st.n_max + 1)
        throw std::invalid_argument("find_critical_points: need 2 <= dim <= n_max + 1");

    CriticalScan scan;
    double nbar = g_inverse(S0);
    double z_geo = nbar / (1.0 + nbar);
    double mu_geo = mu_for_constant_ratio(z_geo, gp, gm);

    RatioSequence geo;
    geo.z.assign(static_cast<std::size_t>(st.n_max) + 1, z_geo);
    geo.classification = Monotonicity::Constant;
    geo.prefix_order = Monotonicity::Constant;
    geo.mu = mu_geo;
    geo.gamma_plus = gp;
    geo.gamma_minus = gm;
    scan.points.push_back(make_point(Branch::Geometric, geo, dim));

    // mu grid mixing a linear span with log-spaced offsets around mu_geo
    std::vector<double> mu_grid;
    mu_grid.reserve(static_cast<std::size_t>(st.mu_points));
    int n_lin = st.mu_points / 2;
    for (int i = 0; i < n_lin; ++i)
        mu_grid.push_back(mu_geo - 5.0 + 10.0 * i / std::max(1, n_lin - 1));
    int n_log = st.mu_points - n_lin;
    int per_side = std::max(1, n_log / 2);
    for (int j = 0; j < per_side; ++j) {
        double off = std::pow(10.0, -4.0 + 6.0 * j / std::max(1, per_side - 1));
        mu_grid.push_back(mu_geo - off);
        mu_grid.push_back(mu_geo + off);
    }
    std::sort(mu_grid.begin(), mu_grid.end());

    std::vector<double> scratch;
    std::vector<ScanCell> cells;

    // seeds close to the constant manifold can drift slowly enough to finish
    // n_max steps inside (0, 1] without collapsing; only a collapsed survivor
    // contradicts the pure-loss range of f
    int collapsed_survivors = 0;
    auto cell_entropy = [&](double z0, double mu) -> RatioEntropy {
        RatioSequence seq = iterate_recursion(z0, mu, gp, gm, st.n_max);
        if (seq.invalid_step >= 0) return {};
        ++scan.surviving_cells;
        if (seq.collapsed_at || seq.z.back() < st.collapse_cut) ++collapsed_survivors;
        return entropy_from_ratios(seq.z, dim, scratch);
    };

    for (double mu : mu_grid) {
        double thr = gm - gp - mu;
        double z_star = (thr >= h_func(1.0, gp, gm)) ? st.z0_max
                                                     : h_inverse(thr, gp, gm) * (1.0 - 1e-12);
        double z_hi = std::min(z_star, st.z0_max);
        if (z_hi <= st.z0_min) continue;

        // log-spaced seeds across the decreasing range
        cells.clear();
        double llo = std::log(st.z0_min), lhi = std::log(z_hi);
        for (int i = 0; i < st.z0_points; ++i) {
            double z0 = std::exp(llo + (lhi - llo) * i / std::max(1, st.z0_points - 1));
            if (classify_seed(z0, mu, gp, gm) != Monotonicity::StrictlyDecreasing) continue;
            ++scan.decreasing_cells;
            RatioEntropy re = cell_entropy(z0, mu);
            cells.push_back({z0, re.usable ? re.entropy : std::numeric_limits<double>::quiet_NaN()});
        }
        if (gp == 0.0) continue; // survival is checked after the loop

        for (std::size_t i = 0; i + 1 < cells.size(); ++i) {
            double sa = cells[i].entropy, sb = cells[i + 1].entropy;
            if (std::isnan(sa) || std::isnan(sb)) continue;
            if ((sa - S0) * (sb - S0) > 0.0) continue;

            double lo = cells[i].z0, hi = cells[i + 1].z0;
            bool lo_below = sa <= S0;
            RatioSequence refined;
            bool hit = false;
            for (int it = 0; it < st.max_bisect; ++it) {
                double mid = 0.5 * (lo + hi);
                RatioSequence seq = iterate_recursion(mid, mu, gp, gm, st.n_max);
                RatioEntropy re = entropy_from_ratios(seq.z, dim, scratch);
                if (!re.usable) break;
                if (std::abs(re.entropy - S0) <= st.entropy_tol) {
                    refined = std::move(seq);
                    hit = true;
                    break;
                }
                if ((re.entropy <= S0) == lo_below)
                    lo = mid;
                else
                    hi = mid;
                if (hi - lo <= 1e-17 * (1.0 + hi)) break;
            }
            if (!hit) continue;
            if (refined.z.back() >= st.collapse_cut) continue; // thermal seen at finite window
            RatioEntropy re = entropy_from_ratios(refined.z, dim, scratch);
            if (entropy_error_budget(re.tail_bound, dim) > 1e-12) continue;
            scan.points.push_back(make_point(Branch::SuperExponential, refined, dim));
        }
    }

    if (gp == 0.0) {
        if (collapsed_survivors > 0)
            throw std::logic_error("find_critical_points: a decreasing sequence collapsed under "
                                   "gamma_plus = 0, which contradicts the pure-loss range of f");
        scan.second_branch = SecondBranchStatus::NoneExists;
        return scan;
    }
    scan.second_branch = scan.points.size() > 1 ? SecondBranchStatus::Found
                                                : SecondBranchStatus::BudgetExhausted;
    return scan;
}

} // namespace moe
