#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstdlib>
#include <vector>

#include "moelab/channel.hpp"
#include "moelab/fock.hpp"
#include "moelab/rng.hpp"
#include "moelab/verify.hpp"

using namespace moe;

namespace {

bool reports_identical(const VerificationReport& a, const VerificationReport& b) {
    return a.baseline_closed == b.baseline_closed && a.baseline_evolved == b.baseline_evolved &&
           a.min_gap == b.min_gap && a.argmin_trial == b.argmin_trial &&
           a.argmin_seed == b.argmin_seed && a.violations == b.violations &&
           a.excluded == b.excluded && a.divergent_trials == b.divergent_trials &&
           a.entropy_error_budget == b.entropy_error_budget && a.status == b.status;
}

} // namespace

TEST_CASE("worker_count reads the environment") {
    unsetenv("MOELAB_WORKERS");
    CHECK(worker_count() == 1);
    setenv("MOELAB_WORKERS", "3", 1);
    CHECK(worker_count() == 3);
    setenv("MOELAB_WORKERS", "0", 1);
    CHECK(worker_count() == 1);
    unsetenv("MOELAB_WORKERS");
}

TEST_CASE("finite verification passes and is worker-invariant") {
    LindbladSpec spec = lindblad_from_kind(Loss{0.7, 0.0});
    double S0 = g(1.0);

    unsetenv("MOELAB_WORKERS");
    VerificationReport serial = verify_conjecture_finite(spec, S0, 60, 2024, 128);
    CHECK(serial.status == "PASS");
    CHECK(serial.violations == 0);
    CHECK(serial.trials == 60);
    CHECK(std::abs(serial.baseline_closed - serial.baseline_evolved) <= 1e-6);
    CHECK(serial.min_gap >= -serial.entropy_error_budget);
    CHECK(serial.argmin_trial >= 0);
    CHECK(serial.mode == "finite");

    setenv("MOELAB_WORKERS", "3", 1);
    VerificationReport pooled = verify_conjecture_finite(spec, S0, 60, 2024, 128);
    unsetenv("MOELAB_WORKERS");
    CHECK(reports_identical(serial, pooled));

    // rerun with identical arguments is bitwise stable
    VerificationReport again = verify_conjecture_finite(spec, S0, 60, 2024, 128);
    CHECK(reports_identical(serial, again));

    // a different seed explores different inputs
    VerificationReport other = verify_conjecture_finite(spec, S0, 60, 2025, 128);
    CHECK(other.min_gap != serial.min_gap);
}

TEST_CASE("finite verification across channel families") {
    double S0 = g(1.0);
    for (const ChannelKind& kind : std::vector<ChannelKind>{
             Loss{0.5, 0.3}, Amplifier{1.3, 0.0}, Additive{0.25}}) {
        VerificationReport rep =
            verify_conjecture_finite(lindblad_from_kind(kind), S0, 40, 99, 192);
        CHECK(rep.status == "PASS");
        CHECK(rep.violations == 0);
        CHECK(rep.excluded == 0); // the evolution window headroom absorbs wide samples
    }
}

TEST_CASE("infinitesimal verification uses full-support inputs") {
    LindbladSpec spec = lindblad_from_kind(Additive{0.3});
    VerificationReport rep = verify_conjecture_infinitesimal(spec, g(1.0), 40, 7, 128);
    CHECK(rep.status == "PASS");
    CHECK(rep.violations == 0);
    CHECK(rep.divergent_trials == 0); // sampler guarantees full support
    CHECK(rep.mode == "infinitesimal");
    CHECK(std::isfinite(rep.min_gap));

    setenv("MOELAB_WORKERS", "2", 1);
    VerificationReport pooled = verify_conjecture_infinitesimal(spec, g(1.0), 40, 7, 128);
    unsetenv("MOELAB_WORKERS");
    CHECK(reports_identical(rep, pooled));
}

TEST_CASE("adjoint gradient of the output entropy, pairwise finite differences") {
    LindbladSpec spec = lindblad_from_kind(Amplifier{1.2, 0.1});
    auto p = thermal_distribution(0.8, 96);

    auto q = evolve(spec, p);
    std::vector<double> seed_grad(q.p.size());
    for (std::size_t i = 0; i < q.p.size(); ++i)
        seed_grad[i] = -(1.0 + std::log(std::max(q.p[i], 1e-300)));
    std::vector<double> grad = evolve_transpose(spec, seed_grad);

    auto F = [&](const FockDistribution& x) { return raw_entropy(evolve(spec, x).p); };
    double h = 1e-7;
    for (auto [i, j] : std::vector<std::pair<int, int>>{{0, 5}, {2, 9}, {7, 3}}) {
        FockDistribution up = p, dn = p;
        up.p[static_cast<std::size_t>(i)] += h;
        up.p[static_cast<std::size_t>(j)] -= h;
        dn.p[static_cast<std::size_t>(i)] -= h;
        dn.p[static_cast<std::size_t>(j)] += h;
        double fd = (F(up) - F(dn)) / (2.0 * h);
        double an = grad[static_cast<std::size_t>(i)] - grad[static_cast<std::size_t>(j)];
        CHECK(std::abs(fd - an) <= 1e-3 * std::max(1.0, std::abs(an)));
    }
}

TEST_CASE("local search never undercuts the thermal baseline") {
    double S0 = g(1.0);
    for (const ChannelKind& kind : std::vector<ChannelKind>{Loss{0.6, 0.0}, Amplifier{1.25, 0.0}}) {
        LindbladSpec spec = lindblad_from_kind(kind);
        LocalSearchResult res = local_search_min_entropy(spec, S0, 128, 60, 31);
        CHECK(res.output_entropy >= res.baseline - 1e-8);
        CHECK(res.iterations_used <= 60);
        CHECK(std::abs(shannon_entropy(res.state) - S0) <= 1e-8);

        LocalSearchResult again = local_search_min_entropy(spec, S0, 128, 60, 31);
        CHECK(res.output_entropy == again.output_entropy);
    }
}

TEST_CASE("random dense states are proper states") {
    Rng rng(5);
    for (int k = 0; k < 5; ++k) {
        DenseState s = random_dense_state(12, rng);
        CHECK_NOTHROW(s.validate());
        CHECK(std::abs(s.rho.trace().real() - 1.0) <= 1e-12);
        CHECK(std::abs(s.rho.trace().imag()) <= 1e-14);
        double asym = (s.rho - s.rho.adjoint()).cwiseAbs().maxCoeff();
        CHECK(asym <= 1e-12);
    }
}

TEST_CASE("dense evolution restricted to diagonals matches the window evolve") {
    LindbladSpec spec = lindblad_from_kind(Loss{0.6, 0.1});
    // renormalize the truncated thermal weights so the matrix has unit trace
    auto p = thermal_distribution(0.5, 20);
    double s = p.sum();
    for (double& x : p.p) x /= s;
    p.tail_bound = 0.0;

    DenseState rho;
    rho.rho = Eigen::MatrixXcd::Zero(20, 20);
    for (int n = 0; n < 20; ++n) rho.rho(n, n) = p.p[static_cast<std::size_t>(n)];

    DenseState out = dense_evolve(spec, rho);
    auto q = evolve(spec, p);
    for (int n = 0; n < 20; ++n) {
        CHECK(std::abs(out.rho(n, n).real() - q.p[static_cast<std::size_t>(n)]) <= 1e-9);
        CHECK(std::abs(out.rho(n, n).imag()) <= 1e-12);
    }
    // no coherence appears from nowhere
    double off = 0.0;
    for (int m = 0; m < 20; ++m)
        for (int n = 0; n < 20; ++n)
            if (m != n) off = std::max(off, std::abs(out.rho(m, n)));
    CHECK(off <= 1e-12);
}

TEST_CASE("pure loss damps a two-level coherence at half the population rate") {
    LindbladSpec spec{0.0, 1.0, 0.7};
    DenseState rho;
    rho.rho = Eigen::MatrixXcd::Zero(8, 8);
    rho.rho(0, 0) = 0.5;
    rho.rho(1, 1) = 0.5;
    rho.rho(0, 1) = 0.5;
    rho.rho(1, 0) = 0.5;

    DenseState out = dense_evolve(spec, rho);
    double t = 0.7;
    CHECK(std::abs(out.rho(0, 1).real() - 0.5 * std::exp(-t / 2.0)) <= 1e-10);
    CHECK(std::abs(out.rho(1, 1).real() - 0.5 * std::exp(-t)) <= 1e-10);
    CHECK(std::abs(out.rho(0, 0).real() - (1.0 - 0.5 * std::exp(-t))) <= 1e-10);
}

TEST_CASE("von Neumann entropy agrees with the diagonal Shannon entropy") {
    auto p = thermal_distribution(1.0, 24);
    DenseState rho;
    rho.rho = Eigen::MatrixXcd::Zero(24, 24);
    for (int n = 0; n < 24; ++n) rho.rho(n, n) = p.p[static_cast<std::size_t>(n)];
    CHECK(std::abs(von_neumann_entropy(rho) - shannon_entropy(p)) <= 1e-12);

    Rng rng(9);
    DenseState s = random_dense_state(10, rng);
    CHECK(von_neumann_entropy(s) >= 0.0);
    CHECK(von_neumann_entropy(s) <= std::log(10.0) + 1e-12);
}

TEST_CASE("coherent inputs never beat their passive rearrangement") {
    for (const ChannelKind& kind : std::vector<ChannelKind>{
             Loss{0.6, 0.1}, Amplifier{1.1, 0.0}, Additive{0.15}}) {
        VerificationReport rep =
            check_passive_reduction(lindblad_from_kind(kind), 10, 20, 4242);
        CHECK(rep.status == "PASS");
        CHECK(rep.violations == 0);
        CHECK(rep.min_gap >= -rep.entropy_error_budget);
    }

    unsetenv("MOELAB_WORKERS");
    VerificationReport serial = check_passive_reduction(lindblad_from_kind(Loss{0.6, 0.1}), 10, 20, 1);
    setenv("MOELAB_WORKERS", "4", 1);
    VerificationReport pooled = check_passive_reduction(lindblad_from_kind(Loss{0.6, 0.1}), 10, 20, 1);
    unsetenv("MOELAB_WORKERS");
    CHECK(reports_identical(serial, pooled));
}

TEST_CASE("entropy gain quotient over shrinking horizons") {
    std::vector<double> dts{1e-2, 1e-3, 1e-4, 1e-5, 1e-6};

    // upward rate: S(dt) - S(0) ~ dt ln(1/dt), so the quotient keeps rising
    auto rows = check_finite_support_divergence(lindblad_from_kind(Amplifier{1.5, 0.0}), 3, 64,
                                                dts);
    REQUIRE(rows.size() == dts.size());
    double S_in = std::log(4.0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].dt == dts[i]);
        CHECK(rows[i].entropy_out > S_in);
        if (i > 0) CHECK(rows[i].quotient > rows[i - 1].quotient);
    }

    // pure loss: the gain is linear in dt and the quotient dies off instead
    auto loss_rows = check_finite_support_divergence(lindblad_from_kind(Loss{0.6, 0.0}), 3, 64,
                                                     dts);
    for (std::size_t i = 1; i < loss_rows.size(); ++i)
        CHECK(std::abs(loss_rows[i].quotient) < std::abs(loss_rows[i - 1].quotient) + 1e-12);
}

TEST_CASE("time slicing tracks the closed-form thermal chain") {
    LindbladSpec spec = lindblad_from_kind(Loss{0.5, 0.0});
    DiscretizationTable table = check_discretization(spec, g(1.0), 8, 128);
    REQUIRE(table.rows.size() == 8);
    CHECK(table.tv_composed_vs_single <= 1e-9);

    // pure loss: nbar after k of 8 equal slices is nbar * eta^(k/8)
    for (const DiscretizationRow& row : table.rows) {
        double expect = 1.0 * std::pow(0.5, static_cast<double>(row.k) / 8.0);
        CHECK(row.nbar_chain == doctest::Approx(expect).epsilon(1e-12));
        CHECK(row.entropy_chain == doctest::Approx(g(expect)).epsilon(1e-12));
        CHECK(std::abs(row.entropy_evolved - row.entropy_chain) <= 1e-8);
    }

    // noisy amplifier slices compose just as well
    DiscretizationTable amp = check_discretization(lindblad_from_kind(Amplifier{1.4, 0.2}),
                                                   g(0.5), 5, 192);
    CHECK(amp.tv_composed_vs_single <= 1e-9);
    for (const DiscretizationRow& row : amp.rows)
        CHECK(std::abs(row.entropy_evolved - row.entropy_chain) <= 1e-8);
}
