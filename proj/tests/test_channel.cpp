#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "moelab/channel.hpp"
#include "moelab/errors.hpp"
#include "moelab/fock.hpp"
#include "moelab/rng.hpp"

using namespace moe;

namespace {

// pure loss starting from Fock level m: q_k = C(m,k) eta^k (1-eta)^(m-k),
// assembled in log space so large m stays exact
std::vector<double> binomial_loss_output(int m, double eta, int dim) {
    std::vector<double> q(static_cast<std::size_t>(dim), 0.0);
    for (int k = 0; k <= m && k < dim; ++k) {
        double lg = std::lgamma(m + 1.0) - std::lgamma(k + 1.0) - std::lgamma(m - k + 1.0) +
                    k * std::log(eta) + (m - k) * std::log1p(-eta);
        q[static_cast<std::size_t>(k)] = std::exp(lg);
    }
    return q;
}

FockDistribution delta_at(int m, int dim) {
    FockDistribution p{std::vector<double>(static_cast<std::size_t>(dim), 0.0), 0.0};
    p.p[static_cast<std::size_t>(m)] = 1.0;
    return p;
}

// random weights with geometric damping, so the window top carries almost no
// mass and amplification does not immediately overflow the truncation
FockDistribution random_window(int dim, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(static_cast<std::size_t>(dim));
    double s = 0.0, damp = 1.0;
    for (double& x : v) {
        x = rng.exponential() * damp;
        damp *= 0.55;
        s += x;
    }
    for (double& x : v) x /= s;
    return {std::move(v), 0.0};
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

} // namespace

TEST_CASE("kind dictionary maps to the documented rates") {
    LindbladSpec loss = lindblad_from_kind(Loss{0.25, 0.5});
    CHECK(loss.gamma_plus == 0.5);
    CHECK(loss.gamma_minus == 1.5);
    CHECK(loss.t == doctest::Approx(-std::log(0.25)).epsilon(1e-15));

    LindbladSpec amp = lindblad_from_kind(Amplifier{2.0, 0.3});
    CHECK(amp.gamma_plus == 1.3);
    CHECK(amp.gamma_minus == 0.3);
    CHECK(amp.t == doctest::Approx(std::log(2.0)).epsilon(1e-15));

    LindbladSpec add = lindblad_from_kind(Additive{0.4});
    CHECK(add.gamma_plus == 1.0);
    CHECK(add.gamma_minus == 1.0);
    CHECK(add.t == 0.4);

    ChannelParams pl = params_from_kind(Loss{0.25, 0.5});
    CHECK(pl.tau == 0.25);
    CHECK(pl.y == doctest::Approx(0.75 * 2.0).epsilon(1e-15));

    ChannelParams pa = params_from_kind(Amplifier{2.0, 0.3});
    CHECK(pa.tau == 2.0);
    CHECK(pa.y == doctest::Approx(1.0 * 1.6).epsilon(1e-15));

    ChannelParams pd = params_from_kind(Additive{0.4});
    CHECK(pd.tau == 1.0);
    CHECK(pd.y == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("params round-trip through the generator picture") {
    for (const ChannelKind& kind : std::vector<ChannelKind>{
             Loss{0.25, 0.5}, Loss{0.9, 0.0}, Amplifier{2.0, 0.3}, Amplifier{1.01, 1.0},
             Additive{0.4}, Additive{1e-3}}) {
        ChannelParams direct = params_from_kind(kind);
        ChannelParams via = params_from_lindblad(lindblad_from_kind(kind));
        CHECK(std::abs(via.tau - direct.tau) <= 1e-13 * std::max(1.0, direct.tau));
        CHECK(std::abs(via.y - direct.y) <= 1e-13 * std::max(1.0, direct.y));

        LindbladSpec back = lindblad_from_params(direct);
        ChannelParams again = params_from_lindblad(back);
        CHECK(std::abs(again.tau - direct.tau) <= 1e-12);
        CHECK(std::abs(again.y - direct.y) <= 1e-12);
    }
}

TEST_CASE("params_from_lindblad is continuous through balanced rates") {
    // gamma_plus == gamma_minus is the additive line tau = 1, y = 2 gamma t
    ChannelParams exact = params_from_lindblad({1.0, 1.0, 0.3});
    CHECK(exact.tau == 1.0);
    CHECK(exact.y == doctest::Approx(0.6).epsilon(1e-15));

    ChannelParams nudged = params_from_lindblad({1.0, 1.0 + 1e-12, 0.3});
    CHECK(std::abs(nudged.tau - 1.0) <= 1e-12);
    CHECK(std::abs(nudged.y - 0.6) <= 1e-11);
}

TEST_CASE("parameter validation") {
    CHECK_THROWS_AS(ChannelParams({0.5, 0.2}).validate(), std::invalid_argument); // y < |tau-1|
    CHECK_NOTHROW(ChannelParams({0.5, 0.5}).validate());
    CHECK_NOTHROW(ChannelParams({2.0, 1.0}).validate());
    CHECK_THROWS_AS(ChannelParams({-0.5, 2.0}).validate(), std::invalid_argument);
    CHECK_THROWS_AS(LindbladSpec({-1.0, 0.0, 1.0}).validate(), std::invalid_argument);
    CHECK_THROWS_AS(LindbladSpec({0.0, 1.0, -0.1}).validate(), std::invalid_argument);
}

TEST_CASE("generator_apply on a hand-checked window") {
    FockDistribution p{{0.5, 0.3, 0.2}, 0.0};
    double a = 0.7, b = 1.1;
    auto d = generator_apply({a, b, 1.0}, p);
    REQUIRE(d.size() == 3);
    CHECK(d[0] == doctest::Approx(-a * 0.5 + b * 0.3).epsilon(1e-15));
    CHECK(d[1] == doctest::Approx(a * (0.5 - 2 * 0.3) + b * (2 * 0.2 - 0.3)).epsilon(1e-15));
    CHECK(d[2] == doctest::Approx(a * (2 * 0.3 - 3 * 0.2) + b * (0.0 - 2 * 0.2)).epsilon(1e-15));
    // total rate equals the instantaneous leak through the window top
    CHECK(d[0] + d[1] + d[2] == doctest::Approx(-a * 3 * 0.2).epsilon(1e-14));
}

TEST_CASE("identity channels are no-ops") {
    auto p = thermal_distribution(1.0, 32);
    for (LindbladSpec spec : {LindbladSpec{0.4, 0.9, 0.0}, LindbladSpec{0.0, 0.0, 3.0}}) {
        CHECK(spec.is_identity());
        auto q = evolve(spec, p);
        CHECK(q.p == p.p);
        CHECK(q.tail_bound == p.tail_bound);
    }
}

TEST_CASE("thermal inputs stay thermal with the transported mean") {
    for (const ChannelKind& kind : std::vector<ChannelKind>{
             Loss{0.7, 0.5}, Loss{0.3, 0.0}, Amplifier{1.3, 0.2}, Additive{0.4}}) {
        LindbladSpec spec = lindblad_from_kind(kind);
        double nbar_out = thermal_output_nbar(params_from_kind(kind), 1.0);
        auto in = thermal_distribution(1.0, 128);
        auto out = evolve(spec, in);
        auto expect = thermal_distribution(nbar_out, 128);
        CHECK(total_variation(out, expect) <= 1e-9);
    }
}

TEST_CASE("pure loss scatters Fock levels binomially") {
    for (int m : {5, 17, 40}) {
        for (double eta : {0.3, 0.85}) {
            LindbladSpec spec = lindblad_from_kind(Loss{eta, 0.0});
            auto out = evolve(spec, delta_at(m, 64));
            auto expect = binomial_loss_output(m, eta, 64);
            double tv = 0.0;
            for (int k = 0; k < 64; ++k)
                tv += std::abs(out.p[static_cast<std::size_t>(k)] -
                               expect[static_cast<std::size_t>(k)]);
            CHECK(tv / 2.0 <= 1e-9);
        }
    }
}

TEST_CASE("adaptive and dense engines agree") {
    EvolveOptions dense;
    dense.engine = EvolveEngine::DenseExponential;
    for (std::uint64_t seed : {11ull, 12ull}) {
        auto p = random_window(48, seed);
        for (LindbladSpec spec : {lindblad_from_kind(Loss{0.5, 0.3}),
                                  lindblad_from_kind(Amplifier{1.2, 0.1}),
                                  lindblad_from_kind(Additive{0.25})}) {
            auto a = evolve(spec, p);
            auto d = evolve(spec, p, dense);
            CHECK(total_variation(a, d) <= 1e-10);
            CHECK(std::abs(a.tail_bound - d.tail_bound) <= 1e-10);
        }
    }
}

TEST_CASE("evolution composes along the time axis") {
    auto p = random_window(64, 21);
    LindbladSpec full{0.6, 1.1, 1.2};
    LindbladSpec first{0.6, 1.1, 0.5};
    LindbladSpec second{0.6, 1.1, 0.7};
    auto one_shot = evolve(full, p);
    auto comp = evolve(second, evolve(first, p));
    CHECK(total_variation(one_shot, comp) <= 1e-9);
}

TEST_CASE("window mass plus recorded tail stays normalized") {
    auto p = thermal_distribution(1.0, 96);
    LindbladSpec amp = lindblad_from_kind(Amplifier{1.4, 0.2});
    auto q = evolve(amp, p);
    CHECK(q.sum() + q.tail_bound == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(q.tail_bound > p.tail_bound); // amplification pushes mass upward
}

TEST_CASE("overdriven amplification trips the truncation budget") {
    auto p = thermal_distribution(1.0, 16);
    CHECK_THROWS_AS(evolve(lindblad_from_kind(Amplifier{5.0, 0.0}), p), TruncationError);
}

TEST_CASE("output_entropy and its windowed variant") {
    auto p = thermal_distribution(1.0, 256);
    LindbladSpec spec = lindblad_from_kind(Loss{0.6, 0.4});
    OutputEntropy direct = output_entropy(spec, p);
    OutputEntropy windowed = output_entropy_windowed(spec, p);
    CHECK(std::abs(direct.value - windowed.value) <= 1e-10);
    CHECK(direct.error_budget >= 1e-9);
    CHECK(windowed.error_budget >= 1e-9);

    double nbar_out = thermal_output_nbar(params_from_kind(Loss{0.6, 0.4}), 1.0);
    CHECK(direct.value == doctest::Approx(g(nbar_out)).epsilon(1e-10));
}

TEST_CASE("entropy rate at t = 0: thermal closed form") {
    // -sum (1 + ln p_n) dp_n for a geometric input collapses to
    // ln((nbar+1)/nbar) (gamma_plus (nbar+1) - gamma_minus nbar)
    double nbar = 1.0;
    auto p = thermal_distribution(nbar, 256);
    for (LindbladSpec spec : {LindbladSpec{0.3, 0.7, 1.0}, LindbladSpec{1.2, 0.4, 1.0},
                              LindbladSpec{0.0, 1.0, 1.0}}) {
        EntropyRate rate = entropy_derivative_at_zero(spec, p);
        REQUIRE(!rate.divergent);
        double expect = std::log((nbar + 1.0) / nbar) *
                        (spec.gamma_plus * (nbar + 1.0) - spec.gamma_minus * nbar);
        CHECK(rate.value == doctest::Approx(expect).epsilon(1e-8));
    }
}

TEST_CASE("entropy rate at t = 0: finite-difference oracle") {
    auto p = thermal_distribution(1.0, 96);
    for (LindbladSpec base : {LindbladSpec{0.3, 0.7, 0.0}, LindbladSpec{1.2, 0.4, 0.0}}) {
        EntropyRate rate = entropy_derivative_at_zero(base, p);
        REQUIRE(!rate.divergent);

        double h = 1e-6;
        auto entropy_at = [&](double t) {
            LindbladSpec s = base;
            s.t = t;
            return raw_entropy(evolve(s, p).p);
        };
        // one-sided second-order stencil, since negative durations are not defined
        double fd = (-3.0 * raw_entropy(p.p) + 4.0 * entropy_at(h) - entropy_at(2 * h)) /
                    (2.0 * h);
        CHECK(std::abs(fd - rate.value) <= 1e-4 * std::max(1.0, std::abs(rate.value)));
    }
}

TEST_CASE("entropy rate divergence trichotomy") {
    // finite support + upward rate = divergent
    PassiveDistribution finite;
    finite.p.assign(64, 0.0);
    for (int n = 0; n < 5; ++n) finite.p[static_cast<std::size_t>(n)] = 0.2;
    finite.support = 4;
    CHECK(entropy_derivative_at_zero({0.5, 1.0, 1.0}, finite).divergent);

    // pure loss never diverges
    EntropyRate loss_rate = entropy_derivative_at_zero({0.0, 1.0, 1.0}, finite);
    CHECK(!loss_rate.divergent);
    CHECK(std::isfinite(loss_rate.value));

    // full support within the window never diverges
    auto thermal = thermal_distribution(0.5, 64);
    CHECK(!entropy_derivative_at_zero({0.5, 1.0, 1.0}, thermal).divergent);

    // support at the window edge counts as full support
    PassiveDistribution edge;
    edge.p.assign(8, 0.125);
    edge.support = 7;
    CHECK(!entropy_derivative_at_zero({0.5, 1.0, 1.0}, edge).divergent);
}

TEST_CASE("evolve_transpose is the adjoint of the window map") {
    Rng rng(31);
    std::vector<double> w(64);
    for (double& x : w) x = rng.uniform();

    FockDistribution p{std::vector<double>(64, 0.0), 0.0};
    double s = 0.0;
    for (int n = 0; n < 8; ++n) s += (p.p[static_cast<std::size_t>(n)] = rng.exponential());
    for (int n = 0; n < 8; ++n) p.p[static_cast<std::size_t>(n)] /= s;

    for (LindbladSpec spec : {lindblad_from_kind(Loss{0.6, 0.3}),
                              lindblad_from_kind(Amplifier{1.2, 0.0}),
                              lindblad_from_kind(Additive{0.3})}) {
        auto forward = evolve(spec, p);
        auto adjoint = evolve_transpose(spec, w);
        CHECK(std::abs(dot(w, forward.p) - dot(adjoint, p.p)) <= 1e-10);
    }
}
