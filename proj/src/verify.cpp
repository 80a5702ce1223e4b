#include "moelab/verify.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>

#include <Eigen/Eigenvalues>

#include "moelab/errors.hpp"
#include "ode_integrate.hpp"

namespace moe {

namespace {

constexpr double kIntegrationAllowance = 2e-9;

// fan trial indices across the worker pool; each fn(i) runs exactly once and
// must write only to slot i of its output array
template <class Fn>
void run_indexed(int count, Fn&& fn) {
    int workers = std::min(worker_count(), count);
    if (workers <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto drain = [&] {
        for (;;) {
            int i = next.fetch_add(1);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(drain);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

enum class TrialKind { Ok, Excluded, Divergent };

struct TrialOut {
    TrialKind kind = TrialKind::Ok;
    double gap = 0.0;
    double budget = 0.0;
};

// deterministic reduction: lexicographic (gap, index) minimum, integer counts
void reduce_trials(const std::vector<TrialOut>& trials, std::uint64_t seed,
                   VerificationReport& rep) {
    rep.min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < trials.size(); ++i) {
        const TrialOut& tr = trials[i];
        if (tr.kind == TrialKind::Excluded) {
            ++rep.excluded;
            continue;
        }
        if (tr.kind == TrialKind::Divergent) {
            ++rep.divergent_trials;
            continue;
        }
        rep.entropy_error_budget = std::max(rep.entropy_error_budget, tr.budget);
        if (tr.gap < rep.min_gap) {
            rep.min_gap = tr.gap;
            rep.argmin_trial = static_cast<int>(i);
            rep.argmin_seed = derive_seed(seed, i);
        }
        if (tr.gap < -tr.budget) ++rep.violations;
    }
    rep.status = rep.violations == 0 ? "PASS" : "FINDING";
}

} // namespace

int worker_count() {
    const char* env = std::getenv("MOELAB_WORKERS");
    if (!env) return 1;
    int n = std::atoi(env);
    return n >= 1 ? n : 1;
}

VerificationReport verify_conjecture_finite(const LindbladSpec& spec, double S0, int trials,
                                            std::uint64_t seed, int dim) {
    spec.validate();
    if (trials < 1) throw std::invalid_argument("verify_conjecture_finite: trials must be >= 1");

    VerificationReport rep;
    rep.mode = "finite";
    rep.channel = spec;
    rep.S0 = S0;
    rep.dim = dim;
    rep.trials = trials;
    rep.seed = seed;

    // samples live on dim levels; evolution gets headroom above so that
    // amplification does not spill sampled window tops over the tail budget
    const int window = dim + dim / 2 + 64;

    double nbar0 = g_inverse(S0);
    PassiveDistribution thermal = thermal_distribution(nbar0, window);
    FockDistribution thermal_out = evolve(spec, thermal);
    rep.baseline_evolved = raw_entropy(thermal_out.p);
    rep.baseline_closed = g(thermal_output_nbar(params_from_lindblad(spec), nbar0));
    if (std::abs(rep.baseline_evolved - rep.baseline_closed) > 1e-6)
        throw NumericalError("verify_conjecture_finite: evolved thermal baseline disagrees with "
                             "the transport formula");
    double baseline_budget =
        entropy_error_budget(thermal_out.tail_bound, window) + kIntegrationAllowance;

    std::vector<TrialOut> out(static_cast<std::size_t>(trials));
    run_indexed(trials, [&](int i) {
        TrialOut& tr = out[static_cast<std::size_t>(i)];
        PassiveDistribution p =
            sample_passive_with_entropy(S0, dim, derive_seed(seed, static_cast<std::uint64_t>(i)));
        FockDistribution padded{std::vector<double>(static_cast<std::size_t>(window), 0.0), 0.0};
        std::copy(p.p.begin(), p.p.end(), padded.p.begin());
        try {
            FockDistribution q = evolve(spec, padded);
            tr.gap = raw_entropy(q.p) - rep.baseline_evolved;
            tr.budget = baseline_budget + entropy_error_budget(q.tail_bound, window) +
                        kIntegrationAllowance;
        } catch (const TruncationError&) {
            tr.kind = TrialKind::Excluded;
        }
    });
    reduce_trials(out, seed, rep);
    return rep;
}

VerificationReport verify_conjecture_infinitesimal(const LindbladSpec& spec, double S0, int trials,
                                                   std::uint64_t seed, int dim) {
    spec.validate();
    if (trials < 1)
        throw std::invalid_argument("verify_conjecture_infinitesimal: trials must be >= 1");

    VerificationReport rep;
    rep.mode = "infinitesimal";
    rep.channel = spec;
    rep.S0 = S0;
    rep.dim = dim;
    rep.trials = trials;
    rep.seed = seed;

    double nbar0 = g_inverse(S0);
    PassiveDistribution thermal = thermal_distribution(nbar0, dim);
    EntropyRate base = entropy_derivative_at_zero(spec, thermal);
    if (base.divergent)
        throw NumericalError("verify_conjecture_infinitesimal: thermal baseline rate diverged");
    rep.baseline_evolved = base.value;
    // closed-form thermal rate: g'(nbar) * d(nbar)/dt
    rep.baseline_closed = std::log((nbar0 + 1.0) / nbar0) *
                          (spec.gamma_plus * (nbar0 + 1.0) - spec.gamma_minus * nbar0);
    if (std::abs(rep.baseline_evolved - rep.baseline_closed) > 1e-8)
        throw NumericalError("verify_conjecture_infinitesimal: thermal rate disagrees with the "
                             "closed form");

    std::vector<TrialOut> out(static_cast<std::size_t>(trials));
    run_indexed(trials, [&](int i) {
        TrialOut& tr = out[static_cast<std::size_t>(i)];
        PassiveDistribution p =
            sample_full_support_passive(S0, dim, derive_seed(seed, static_cast<std::uint64_t>(i)));
        EntropyRate rate = entropy_derivative_at_zero(spec, p);
        if (rate.divergent) {
            tr.kind = TrialKind::Divergent; // +infinity beats any finite baseline
            return;
        }
        tr.gap = rate.value - rep.baseline_evolved;
        tr.budget = 1e-8;
    });
    reduce_trials(out, seed, rep);
    return rep;
}

namespace {

// strictly positive projection back onto {passive, entropy = S0}
PassiveDistribution project_passive(std::vector<double> v, double S0) {
    for (double& x : v) x = std::max(x, 1e-300);
    std::sort(v.begin(), v.end(), std::greater<double>());
    double s = 0.0;
    for (double x : v) s += x;
    for (double& x : v) x /= s;
    std::vector<double> q = temper_to_entropy(v, S0);
    PassiveDistribution out;
    out.p = std::move(q);
    out.tail_bound = 0.0;
    // strong tempering can underflow the smallest entries to exact zeros
    int last = static_cast<int>(out.p.size()) - 1;
    while (last > 0 && out.p[static_cast<std::size_t>(last)] == 0.0) --last;
    out.support = (out.p.back() > 0.0) ? std::nullopt : std::make_optional(last);
    out.validate();
    return out;
}

} // namespace

LocalSearchResult local_search_min_entropy(const LindbladSpec& spec, double S0, int dim,
                                           int iterations, std::uint64_t seed) {
    spec.validate();
    if (iterations < 0) throw std::invalid_argument("local_search_min_entropy: iterations < 0");

    // search states live on dim levels; evolution gets headroom above
    const int window = dim + dim / 2 + 64;
    auto evolve_padded = [&](const FockDistribution& x) {
        FockDistribution padded{std::vector<double>(static_cast<std::size_t>(window), 0.0),
                                x.tail_bound};
        std::copy(x.p.begin(), x.p.end(), padded.p.begin());
        return evolve(spec, padded);
    };

    double nbar0 = g_inverse(S0);
    PassiveDistribution thermal = thermal_distribution(nbar0, window);
    double baseline = raw_entropy(evolve(spec, thermal).p);

    PassiveDistribution p = sample_full_support_passive(S0, dim, seed);
    double obj = raw_entropy(evolve_padded(p).p);

    LocalSearchResult res;
    res.baseline = baseline;
    const std::size_t d = static_cast<std::size_t>(dim);

    auto dot = [d](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) s += a[i] * b[i];
        return s;
    };

    int it = 0;
    double step = 0.1;
    for (; it < iterations; ++it) {
        FockDistribution q = evolve_padded(p);
        std::vector<double> w(q.p.size());
        for (std::size_t i = 0; i < w.size(); ++i)
            w[i] = -(1.0 + std::log(std::max(q.p[i], 1e-300)));
        // gradient of S(evolve(p)) w.r.t. p through the adjoint propagator,
        // restricted to the dim coordinates the search actually moves
        std::vector<double> grad = evolve_transpose(spec, w);
        grad.resize(d);

        // project out the normalization and entropy constraint directions
        std::vector<double> ones(d, 1.0);
        std::vector<double> ent(d);
        for (std::size_t i = 0; i < d; ++i)
            ent[i] = -(1.0 + std::log(std::max(p.p[i], 1e-300)));
        double ga = dot(grad, ones) / static_cast<double>(d);
        for (std::size_t i = 0; i < d; ++i) grad[i] -= ga;
        double ea = dot(ent, ones) / static_cast<double>(d);
        for (std::size_t i = 0; i < d; ++i) ent[i] -= ea;
        double en = dot(ent, ent);
        if (en > 0.0) {
            double ge = dot(grad, ent) / en;
            for (std::size_t i = 0; i < d; ++i) grad[i] -= ge * ent[i];
        }
        double gnorm = std::sqrt(dot(grad, grad));
        if (gnorm < 1e-13) break;

        bool improved = false;
        while (step > 1e-12) {
            std::vector<double> trial(d);
            for (std::size_t i = 0; i < d; ++i) trial[i] = p.p[i] - step / gnorm * grad[i];
            PassiveDistribution cand = project_passive(std::move(trial), S0);
            double cobj = raw_entropy(evolve_padded(cand).p);
            if (cobj < obj - 1e-14) {
                p = std::move(cand);
                obj = cobj;
                improved = true;
                step = std::min(step * 2.0, 0.5);
                break;
            }
            step *= 0.5;
        }
        if (!improved) break;
    }
    res.state = std::move(p);
    res.output_entropy = obj;
    res.iterations_used = it;
    return res;
}

void DenseState::validate() const {
    const int d = dim();
    if (d < 1 || rho.cols() != d) throw std::invalid_argument("DenseState: not square");
    double herm = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
    if (herm > 1e-10)
        throw std::invalid_argument("DenseState: Hermiticity violated by " + std::to_string(herm));
    double tr = rho.trace().real();
    if (std::abs(tr - 1.0) > 1e-9)
        throw std::invalid_argument("DenseState: trace deviates from one by " +
                                    std::to_string(tr - 1.0));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10)
        throw std::invalid_argument("DenseState: negative eigenvalue " +
                                    std::to_string(es.eigenvalues().minCoeff()));
}

namespace {

Eigen::MatrixXcd haar_unitary(int dim, Rng& rng) {
    Eigen::MatrixXcd a(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j)
            a(i, j) = std::complex<double>(rng.gaussian(), rng.gaussian()) / std::sqrt(2.0);
    Eigen::HouseholderQR<Eigen::MatrixXcd> qr(a);
    Eigen::MatrixXcd q = qr.householderQ();
    // fix the phase gauge so the distribution is exactly Haar
    Eigen::MatrixXcd r = qr.matrixQR();
    for (int j = 0; j < dim; ++j) {
        std::complex<double> rjj = r(j, j);
        std::complex<double> phase = rjj / std::abs(rjj);
        q.col(j) *= phase;
    }
    return q;
}

std::vector<double> dirichlet_flat(int dim, Rng& rng) {
    std::vector<double> w(static_cast<std::size_t>(dim));
    double s = 0.0;
    for (double& x : w) {
        x = rng.exponential();
        s += x;
    }
    for (double& x : w) x /= s;
    return w;
}

DenseState state_from_spectrum(const std::vector<double>& w, const Eigen::MatrixXcd& u) {
    const int d = static_cast<int>(w.size());
    Eigen::VectorXd lam(d);
    for (int i = 0; i < d; ++i) lam(i) = w[static_cast<std::size_t>(i)];
    Eigen::MatrixXcd rho = u * lam.asDiagonal() * u.adjoint();
    DenseState st{(rho + rho.adjoint()) / 2.0};
    return st;
}

} // namespace

DenseState random_dense_state(int dim, Rng& rng) {
    if (dim < 1) throw std::invalid_argument("random_dense_state: dim must be >= 1");
    std::vector<double> w = dirichlet_flat(dim, rng); // spectrum first, then basis
    Eigen::MatrixXcd u = haar_unitary(dim, rng);
    return state_from_spectrum(w, u);
}

DenseState dense_evolve(const LindbladSpec& spec, const DenseState& state, double abs_tol,
                        double rel_tol) {
    spec.validate();
    state.validate();
    const int d = state.dim();
    if (d > 32) throw std::invalid_argument("dense_evolve: window limited to dim <= 32");
    if (spec.is_identity()) return state;

    const double gp = spec.gamma_plus, gm = spec.gamma_minus;
    std::vector<double> sq(static_cast<std::size_t>(d) + 1);
    for (int k = 0; k <= d; ++k) sq[static_cast<std::size_t>(k)] = std::sqrt(static_cast<double>(k));

    using CVec = std::vector<std::complex<double>>;
    CVec x(static_cast<std::size_t>(d) * d);
    for (int m = 0; m < d; ++m)
        for (int n = 0; n < d; ++n) x[static_cast<std::size_t>(m * d + n)] = state.rho(m, n);

    auto rhs = [gp, gm, d, &sq](const CVec& v, CVec& dv, double) {
        for (int m = 0; m < d; ++m) {
            for (int n = 0; n < d; ++n) {
                std::size_t r = static_cast<std::size_t>(m * d + n);
                double half = 0.5 * (m + n);
                std::complex<double> acc = -(gp * (half + 1.0) + gm * half) * v[r];
                if (m > 0 && n > 0)
                    acc += gp * sq[static_cast<std::size_t>(m)] * sq[static_cast<std::size_t>(n)] *
                           v[r - static_cast<std::size_t>(d) - 1];
                if (m + 1 < d && n + 1 < d)
                    acc += gm * sq[static_cast<std::size_t>(m) + 1] *
                           sq[static_cast<std::size_t>(n) + 1] *
                           v[r + static_cast<std::size_t>(d) + 1];
                dv[r] = acc;
            }
        }
    };
    detail::integrate_adaptive_checked(rhs, x, 0.0, spec.t, abs_tol, rel_tol, (gp + gm) * (d + 1));

    Eigen::MatrixXcd rho(d, d);
    for (int m = 0; m < d; ++m)
        for (int n = 0; n < d; ++n) rho(m, n) = x[static_cast<std::size_t>(m * d + n)];
    double herm = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
    if (herm > 1e-10)
        throw NumericalError("dense_evolve: Hermiticity drifted by " + std::to_string(herm));
    DenseState out{(rho + rho.adjoint()) / 2.0};
    return out;
}

double von_neumann_entropy(const DenseState& state) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(state.rho, Eigen::EigenvaluesOnly);
    double s = 0.0;
    for (int i = 0; i < es.eigenvalues().size(); ++i) {
        double lam = es.eigenvalues()(i);
        if (lam < -1e-10)
            throw NumericalError("von_neumann_entropy: negative eigenvalue " + std::to_string(lam));
        if (lam > 0.0) s -= lam * std::log(lam);
    }
    return s;
}

VerificationReport check_passive_reduction(const LindbladSpec& spec, int dim, int trials,
                                           std::uint64_t seed) {
    spec.validate();
    if (dim < 2 || dim > 32)
        throw std::invalid_argument("check_passive_reduction: need 2 <= dim <= 32");
    if (trials < 1) throw std::invalid_argument("check_passive_reduction: trials must be >= 1");
    // always use the full oracle window: climbing from the top occupied level
    // to the boundary must stay below the tail budget even for flat spectra
    const int window = 32;

    VerificationReport rep;
    rep.mode = "passive";
    rep.channel = spec;
    rep.dim = dim;
    rep.trials = trials;
    rep.seed = seed;

    std::vector<TrialOut> out(static_cast<std::size_t>(trials));
    run_indexed(trials, [&](int i) {
        TrialOut& tr = out[static_cast<std::size_t>(i)];
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        std::vector<double> w = dirichlet_flat(dim, rng);
        Eigen::MatrixXcd u = haar_unitary(dim, rng);
        DenseState small = state_from_spectrum(w, u);

        DenseState big;
        big.rho = Eigen::MatrixXcd::Zero(window, window);
        big.rho.topLeftCorner(dim, dim) = small.rho;
        double s_dense = von_neumann_entropy(dense_evolve(spec, big));

        PassiveDistribution passive;
        passive.p.assign(static_cast<std::size_t>(window), 0.0);
        std::sort(w.begin(), w.end(), std::greater<double>());
        std::copy(w.begin(), w.end(), passive.p.begin());
        passive.support = dim - 1;
        FockDistribution evolved = evolve(spec, passive);
        double s_passive = raw_entropy(evolved.p);

        tr.gap = s_dense - s_passive;
        tr.budget = entropy_error_budget(evolved.tail_bound, window) + kIntegrationAllowance;
    });
    reduce_trials(out, seed, rep);
    return rep;
}

std::vector<DivergenceRow> check_finite_support_divergence(const LindbladSpec& spec,
                                                           int support_level, int dim,
                                                           std::span<const double> dt_grid) {
    spec.validate();
    if (support_level < 0 || support_level >= dim - 1)
        throw std::invalid_argument("check_finite_support_divergence: support must sit strictly "
                                    "inside the window");
    PassiveDistribution p;
    p.p.assign(static_cast<std::size_t>(dim), 0.0);
    for (int n = 0; n <= support_level; ++n)
        p.p[static_cast<std::size_t>(n)] = 1.0 / (support_level + 1);
    p.support = support_level;
    double s_in = std::log(static_cast<double>(support_level + 1));

    std::vector<DivergenceRow> rows;
    rows.reserve(dt_grid.size());
    for (double dt : dt_grid) {
        if (!(dt > 0.0) || dt >= 1.0)
            throw std::invalid_argument("check_finite_support_divergence: dt must be in (0, 1)");
        LindbladSpec slice{spec.gamma_plus, spec.gamma_minus, dt};
        FockDistribution q = evolve(slice, p);
        double s_out = raw_entropy(q.p);
        rows.push_back({dt, s_out, (s_out - s_in) / (dt * std::log(1.0 / dt))});
    }
    return rows;
}

DiscretizationTable check_discretization(const LindbladSpec& spec, double S0, int steps, int dim) {
    spec.validate();
    if (steps < 1) throw std::invalid_argument("check_discretization: steps must be >= 1");
    if (spec.is_identity())
        throw std::invalid_argument("check_discretization: identity channel has no chain");

    double nbar = g_inverse(S0);
    PassiveDistribution p0 = thermal_distribution(nbar, dim);
    LindbladSpec slice{spec.gamma_plus, spec.gamma_minus, spec.t / steps};
    ChannelParams slice_params = params_from_lindblad(slice);

    DiscretizationTable table;
    FockDistribution composed = p0;
    for (int k = 1; k <= steps; ++k) {
        composed = evolve(slice, composed);
        nbar = thermal_output_nbar(slice_params, nbar);
        table.rows.push_back({k, nbar, g(nbar), raw_entropy(composed.p)});
    }
    FockDistribution single = evolve(spec, p0);
    table.tv_composed_vs_single = total_variation(composed, single);
    return table;
}

} // namespace moe
