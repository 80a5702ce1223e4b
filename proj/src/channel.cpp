#include "moelab/channel.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "moelab/errors.hpp"
#include "ode_integrate.hpp"

namespace moe {

namespace {

constexpr double kParamSlack = 1e-12;

// largest window the explicit matrix exponential is allowed to chew on
constexpr int kDenseMaxDim = 512;

void birth_death_rates(double gp, double gm, int dim, const double* x, double* dx) {
    for (int n = 0; n < dim; ++n) {
        double v = -(gp * (n + 1) + gm * n) * x[n];
        if (n > 0) v += gp * n * x[n - 1];
        if (n + 1 < dim) v += gm * (n + 1) * x[n + 1];
        dx[n] = v;
    }
}

} // namespace

void LindbladSpec::validate() const {
    if (!(gamma_plus >= 0.0) || !(gamma_minus >= 0.0))
        throw std::invalid_argument("LindbladSpec: rates must be >= 0");
    if (!(t >= 0.0)) throw std::invalid_argument("LindbladSpec: duration must be >= 0");
    if (!std::isfinite(gamma_plus) || !std::isfinite(gamma_minus) || !std::isfinite(t))
        throw std::invalid_argument("LindbladSpec: non-finite field");
}

void ChannelParams::validate() const {
    if (!std::isfinite(tau) || !std::isfinite(y))
        throw std::invalid_argument("ChannelParams: non-finite field");
    if (!(tau > 0.0)) throw std::invalid_argument("ChannelParams: tau must be > 0");
    if (y < std::abs(tau - 1.0) - kParamSlack)
        throw std::invalid_argument("ChannelParams: y >= |tau - 1| violated (not a channel)");
}

LindbladSpec lindblad_from_kind(const ChannelKind& kind) {
    return std::visit(
        [](const auto& k) -> LindbladSpec {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, Loss>) {
                if (!(k.eta > 0.0) || k.eta > 1.0)
                    throw std::invalid_argument("Loss: eta must be in (0, 1]");
                if (!(k.N >= 0.0)) throw std::invalid_argument("Loss: N must be >= 0");
                return {k.N, k.N + 1.0, -std::log(k.eta)};
            } else if constexpr (std::is_same_v<T, Amplifier>) {
                if (!(k.kappa > 1.0)) throw std::invalid_argument("Amplifier: kappa must be > 1");
                if (!(k.N >= 0.0)) throw std::invalid_argument("Amplifier: N must be >= 0");
                return {k.N + 1.0, k.N, std::log(k.kappa)};
            } else {
                if (!(k.N >= 0.0)) throw std::invalid_argument("Additive: N must be >= 0");
                return {1.0, 1.0, k.N};
            }
        },
        kind);
}

ChannelParams params_from_kind(const ChannelKind& kind) {
    return std::visit(
        [](const auto& k) -> ChannelParams {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, Loss>) {
                return {k.eta, (1.0 - k.eta) * (2.0 * k.N + 1.0)};
            } else if constexpr (std::is_same_v<T, Amplifier>) {
                return {k.kappa, (k.kappa - 1.0) * (2.0 * k.N + 1.0)};
            } else {
                return {1.0, 2.0 * k.N};
            }
        },
        kind);
}

ChannelParams params_from_lindblad(const LindbladSpec& spec) {
    spec.validate();
    double gp = spec.gamma_plus, gm = spec.gamma_minus;
    if (spec.is_identity()) return {1.0, 0.0};
    double x = (gp - gm) * spec.t;
    double tau = std::exp(x);
    // y = 2 gp t * (e^x - 1)/x - (e^x - 1); expm1 keeps the equal-rate limit exact
    double ratio = (x == 0.0) ? 1.0 : std::expm1(x) / x;
    double y = 2.0 * gp * spec.t * ratio - std::expm1(x);
    return {tau, y};
}

LindbladSpec lindblad_from_params(const ChannelParams& params) {
    params.validate();
    double tau = params.tau, y = std::max(params.y, std::abs(tau - 1.0));
    if (std::abs(tau - 1.0) <= 1e-14) {
        // additive noise: y = 2 N with unit rates run for N
        return {1.0, 1.0, y / 2.0};
    }
    if (tau < 1.0) {
        double N = (y / (1.0 - tau) - 1.0) / 2.0;
        return {N, N + 1.0, -std::log(tau)};
    }
    double N = (y / (tau - 1.0) - 1.0) / 2.0;
    return {N + 1.0, N, std::log(tau)};
}

double thermal_output_nbar(const ChannelParams& params, double nbar) {
    params.validate();
    if (!(nbar >= 0.0)) throw std::invalid_argument("thermal_output_nbar: nbar must be >= 0");
    return (params.tau * (2.0 * nbar + 1.0) + params.y - 1.0) / 2.0;
}

std::vector<double> generator_apply(const LindbladSpec& spec, const FockDistribution& p) {
    spec.validate();
    p.validate();
    std::vector<double> out(p.p.size());
    birth_death_rates(spec.gamma_plus, spec.gamma_minus, p.dim(), p.p.data(), out.data());
    return out;
}

namespace {

FockDistribution finish_evolved(std::vector<double>&& q, double sum_in, double tail_in,
                                double leak) {
    FockDistribution out;
    out.p = std::move(q);
    double sum_out = 0.0, comp = 0.0;
    for (double& x : out.p) {
        if (x < 0.0) {
            if (x < -1e-12)
                throw NumericalError("evolve: entry dropped below -1e-12 (" + std::to_string(x) +
                                     "); integration accuracy lost");
            x = 0.0;
        }
        double y = x - comp, t = sum_out + y;
        comp = (t - sum_out) - y;
        sum_out = t;
    }
    // exact dynamics conserve (window mass + boundary leak); per-component
    // integration error lets the sum drift by O(dim * abs_tol / step), so pin
    // it back to the conserved total and treat anything larger as a failure
    double target = sum_in - std::max(leak, 0.0);
    if (sum_out > 0.0 && target > 0.0) {
        double c = target / sum_out;
        if (std::abs(c - 1.0) > 1e-10)
            throw NumericalError("evolve: window mass drifted by " + std::to_string(c - 1.0) +
                                 "; integration accuracy lost");
        for (double& x : out.p) x *= c;
    }
    out.tail_bound = tail_in + std::max(leak, 0.0);
    if (out.tail_bound >= kTailBudget)
        throw TruncationError("evolve: tail bound reached " + std::to_string(out.tail_bound) +
                              "; retry with a larger window");
    out.validate();
    return out;
}

FockDistribution evolve_adaptive(const LindbladSpec& spec, const FockDistribution& p,
                                 const EvolveOptions& opt) {
    const int dim = p.dim();
    const double gp = spec.gamma_plus, gm = spec.gamma_minus;
    // last slot accumulates the mass flowing past the window boundary
    std::vector<double> x(p.p.begin(), p.p.end());
    x.push_back(0.0);
    auto rhs = [gp, gm, dim](const std::vector<double>& v, std::vector<double>& dv, double) {
        birth_death_rates(gp, gm, dim, v.data(), dv.data());
        dv[static_cast<std::size_t>(dim)] = gp * dim * v[static_cast<std::size_t>(dim - 1)];
    };
    double rate_scale = (gp + gm) * dim;
    detail::integrate_adaptive_checked(rhs, x, 0.0, spec.t, opt.abs_tol, opt.rel_tol, rate_scale);
    double leak = x.back();
    x.pop_back();
    return finish_evolved(std::move(x), p.sum(), p.tail_bound, leak);
}

FockDistribution evolve_dense(const LindbladSpec& spec, const FockDistribution& p) {
    const int dim = p.dim();
    if (dim > kDenseMaxDim)
        throw std::invalid_argument("evolve: dense-exponential engine limited to dim <= 512");
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(dim, dim);
    for (int n = 0; n < dim; ++n) {
        L(n, n) = -(spec.gamma_plus * (n + 1) + spec.gamma_minus * n);
        if (n > 0) L(n, n - 1) = spec.gamma_plus * n;
        if (n + 1 < dim) L(n, n + 1) = spec.gamma_minus * (n + 1);
    }
    Eigen::MatrixXd M = (spec.t * L).exp();
    Eigen::Map<const Eigen::VectorXd> pin(p.p.data(), dim);
    Eigen::VectorXd q = M * pin;
    double leak = pin.sum() - q.sum();
    return finish_evolved(std::vector<double>(q.data(), q.data() + dim), pin.sum(), p.tail_bound,
                          leak);
}

} // namespace

FockDistribution evolve(const LindbladSpec& spec, const FockDistribution& p,
                        const EvolveOptions& opt) {
    spec.validate();
    p.validate();
    p.require_within_budget();
    if (spec.is_identity()) return p;
    if (opt.engine == EvolveEngine::DenseExponential) return evolve_dense(spec, p);
    return evolve_adaptive(spec, p, opt);
}

OutputEntropy output_entropy(const LindbladSpec& spec, const FockDistribution& p,
                             const EvolveOptions& opt) {
    FockDistribution q = evolve(spec, p, opt);
    double s = raw_entropy(q.p);
    // entries are window-normalized up to the tail; fold the deficit into the budget
    double budget = entropy_error_budget(q.tail_bound, q.dim()) + 1e-9;
    return {s, budget};
}

OutputEntropy output_entropy_windowed(const LindbladSpec& spec, const FockDistribution& p,
                                      double window_budget, const EvolveOptions& opt) {
    spec.validate();
    p.validate();
    const int dim = p.dim();
    // smallest prefix whose dropped mass fits the budget
    double dropped = 0.0;
    int w0 = dim;
    for (int n = dim - 1; n >= 1; --n) {
        double next = dropped + p.p[static_cast<std::size_t>(n)];
        if (p.tail_bound + next > window_budget) break;
        dropped = next;
        w0 = n;
    }
    double scale = std::exp(std::max(spec.gamma_plus - spec.gamma_minus, 0.0) * spec.t);
    int w = std::min(dim, static_cast<int>(std::ceil(w0 * scale * 2.0)) + 64);
    for (;;) {
        FockDistribution trimmed;
        trimmed.p.assign(p.p.begin(), p.p.begin() + w);
        double cut = 0.0;
        for (int n = w; n < dim; ++n) cut += p.p[static_cast<std::size_t>(n)];
        trimmed.tail_bound = p.tail_bound + cut;
        try {
            return output_entropy(spec, trimmed, opt);
        } catch (const TruncationError&) {
            if (w >= dim) throw;
            w = std::min(2 * w, dim);
        }
    }
}

EntropyRate entropy_derivative_at_zero(const LindbladSpec& spec, const PassiveDistribution& p) {
    spec.validate();
    p.validate();
    const int dim = p.dim();
    int last = dim - 1;
    while (last > 0 && p.p[static_cast<std::size_t>(last)] == 0.0) --last;
    bool finite_inside = (p.p[static_cast<std::size_t>(last)] > 0.0) && (last < dim - 1);
    if (spec.gamma_plus > 0.0 && finite_inside) return {true, 0.0};

    std::vector<double> rate(p.p.size());
    birth_death_rates(spec.gamma_plus, spec.gamma_minus, dim, p.p.data(), rate.data());
    double s = 0.0, c = 0.0;
    for (int n = 0; n < dim; ++n) {
        double pn = p.p[static_cast<std::size_t>(n)];
        if (pn <= 0.0) continue; // empty levels have zero rate here and contribute nothing
        double term = -(1.0 + std::log(pn)) * rate[static_cast<std::size_t>(n)];
        double y = term - c;
        double t = s + y;
        c = (t - s) - y;
        s = t;
    }
    return {false, s};
}

std::vector<double> evolve_transpose(const LindbladSpec& spec, std::span<const double> v,
                                     double abs_tol, double rel_tol) {
    spec.validate();
    const int dim = static_cast<int>(v.size());
    if (dim == 0) throw std::invalid_argument("evolve_transpose: empty vector");
    std::vector<double> x(v.begin(), v.end());
    if (spec.is_identity()) return x;
    const double gp = spec.gamma_plus, gm = spec.gamma_minus;
    auto rhs = [gp, gm, dim](const std::vector<double>& w, std::vector<double>& dw, double) {
        for (int n = 0; n < dim; ++n) {
            double val = -(gp * (n + 1) + gm * n) * w[static_cast<std::size_t>(n)];
            if (n > 0) val += gm * n * w[static_cast<std::size_t>(n - 1)];
            if (n + 1 < dim) val += gp * (n + 1) * w[static_cast<std::size_t>(n + 1)];
            dw[static_cast<std::size_t>(n)] = val;
        }
    };
    detail::integrate_adaptive_checked(rhs, x, 0.0, spec.t, abs_tol, rel_tol, (gp + gm) * dim);
    return x;
}

} // namespace moe
