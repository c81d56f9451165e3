#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <aspectmix/numerics.hpp>
#include <aspectmix/rng.hpp>

#include "test_oracles.hpp"

using namespace aspectmix;

TEST_CASE("digamma matches frozen references") {
    // reference values computed at 40 digits
    CHECK(digamma(1.0) == Catch::Approx(-0.57721566490153286060651209008).epsilon(1e-14));
    CHECK(digamma(0.5) == Catch::Approx(-1.96351002602142347944097633300).epsilon(1e-14));
    CHECK(digamma(2.0) == Catch::Approx(0.42278433509846713939348790992).epsilon(1e-14));
    CHECK(digamma(6.0) == Catch::Approx(1.70611766843180047272682124325).epsilon(1e-14));
    CHECK(digamma(3.75) == Catch::Approx(1.18253738861179622864151150558).epsilon(1e-14));
    CHECK(digamma(1e-6) == Catch::Approx(-1000000.57721401996866806820091).epsilon(1e-14));
    CHECK(digamma(1000.0) ==
          Catch::Approx(std::log(1000.0) - 0.000500083333325000003968249802).epsilon(1e-14));
    CHECK(digamma(1e6) == Catch::Approx(13.8155100579641907707746154031).epsilon(1e-14));
    CHECK_THROWS_AS(digamma(0.0), std::domain_error);
    CHECK_THROWS_AS(digamma(-1.5), std::domain_error);
}

TEST_CASE("digamma agrees with the big-shift oracle over twelve decades") {
    for (double x = 1e-6; x < 2e6; x *= 3.7) {
        const double got = digamma(x);
        const double want = oracle::digamma(x);
        CHECK(std::abs(got - want) <= 1e-11 * std::max(1.0, std::abs(want)));
    }
}

TEST_CASE("digamma recurrence and reflection identities") {
    std::mt19937_64 engine(42);
    std::uniform_real_distribution<double> unif(0.01, 50.0);
    for (int i = 0; i < 200; ++i) {
        const double x = unif(engine);
        CHECK(digamma(x + 1.0) ==
              Catch::Approx(digamma(x) + 1.0 / x).epsilon(1e-12).margin(1e-12));
    }
}

TEST_CASE("trigamma matches analytic values and recurrence") {
    constexpr double pi = 3.14159265358979323846;
    CHECK(trigamma(1.0) == Catch::Approx(pi * pi / 6.0).epsilon(1e-13));
    CHECK(trigamma(0.5) == Catch::Approx(pi * pi / 2.0).epsilon(1e-13));
    // psi'(5) = pi^2/6 - (1 + 1/4 + 1/9 + 1/16)
    CHECK(trigamma(5.0) ==
          Catch::Approx(pi * pi / 6.0 - (1.0 + 0.25 + 1.0 / 9.0 + 0.0625)).epsilon(1e-13));
    std::mt19937_64 engine(43);
    std::uniform_real_distribution<double> unif(0.01, 50.0);
    for (int i = 0; i < 200; ++i) {
        const double x = unif(engine);
        CHECK(trigamma(x + 1.0) ==
              Catch::Approx(trigamma(x) - 1.0 / (x * x)).epsilon(1e-11).margin(1e-12));
    }
    CHECK_THROWS_AS(trigamma(0.0), std::domain_error);
}

TEST_CASE("log_gamma matches frozen references and recurrence") {
    CHECK(log_gamma(0.5) == Catch::Approx(0.57236494292470008707171367567653).epsilon(1e-14));
    CHECK(log_gamma(1.0) == Catch::Approx(0.0).margin(1e-14));
    CHECK(log_gamma(2.0) == Catch::Approx(0.0).margin(1e-14));
    CHECK(log_gamma(5.0) == Catch::Approx(std::log(24.0)).epsilon(1e-14));
    CHECK(log_gamma(1e-6) == Catch::Approx(13.8155099807494316692078268710).epsilon(1e-13));
    CHECK(log_gamma(12.3) == Catch::Approx(18.2389834070922419419298243319).epsilon(1e-14));
    CHECK(log_gamma(1e6) == Catch::Approx(12815504.5691476116599769717850).epsilon(1e-14));
    std::mt19937_64 engine(44);
    std::uniform_real_distribution<double> unif(0.01, 80.0);
    for (int i = 0; i < 200; ++i) {
        const double x = unif(engine);
        CHECK(log_gamma(x + 1.0) ==
              Catch::Approx(log_gamma(x) + std::log(x)).epsilon(1e-12).margin(1e-12));
    }
    CHECK_THROWS_AS(log_gamma(0.0), std::domain_error);
}

TEST_CASE("log_sum_exp handles shifts, infinities, and bad input") {
    CHECK(log_sum_exp(std::vector<double>{0.0, 0.0}) == Catch::Approx(std::log(2.0)));
    CHECK(log_sum_exp(std::vector<double>{-1000.0, -1001.0}) ==
          Catch::Approx(-1000.0 + std::log1p(std::exp(-1.0))));
    CHECK(log_sum_exp(std::vector<double>{1000.0, 1000.0}) ==
          Catch::Approx(1000.0 + std::log(2.0)));
    CHECK(log_sum_exp(std::vector<double>{5.0}) == Catch::Approx(5.0));
    const double neg_inf = -std::numeric_limits<double>::infinity();
    CHECK(log_sum_exp(std::vector<double>{neg_inf, neg_inf}) == neg_inf);
    CHECK(log_sum_exp(std::vector<double>{neg_inf, 1.0}) == Catch::Approx(1.0));
    CHECK_THROWS_AS(log_sum_exp(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("DirichletParams validates entries") {
    CHECK_NOTHROW(DirichletParams{std::vector<double>{0.5, 2.0}});
    CHECK_THROWS_AS(DirichletParams{std::vector<double>{}}, std::invalid_argument);
    CHECK_THROWS_AS((DirichletParams{std::vector<double>{1.0, 0.0}}), std::invalid_argument);
    CHECK_THROWS_AS((DirichletParams{std::vector<double>{1.0, -2.0}}), std::invalid_argument);
    const DirichletParams g{std::vector<double>{2.0, 6.0}};
    const std::vector<double> mean = dirichlet_mean(g);
    CHECK(mean[0] == Catch::Approx(0.25));
    CHECK(mean[1] == Catch::Approx(0.75));
}

TEST_CASE("dirichlet_log_pdf matches closed forms and boundary conventions") {
    // D(lambda | 2,1) = 2*lambda_1
    const DirichletParams g21{std::vector<double>{2.0, 1.0}};
    CHECK(dirichlet_log_pdf(g21, std::vector<double>{0.3, 0.7}) ==
          Catch::Approx(std::log(0.6)).epsilon(1e-13));
    // flat Dirichlet over the 2-simplex has density Gamma(3) = 2
    const DirichletParams flat{std::vector<double>{1.0, 1.0, 1.0}};
    CHECK(dirichlet_log_pdf(flat, std::vector<double>{0.2, 0.3, 0.5}) ==
          Catch::Approx(std::log(2.0)).epsilon(1e-13));
    // zero coordinate: parameter 1 contributes nothing, > 1 kills the density
    CHECK(dirichlet_log_pdf(flat, std::vector<double>{0.0, 0.4, 0.6}) ==
          Catch::Approx(std::log(2.0)).epsilon(1e-13));
    CHECK(dirichlet_log_pdf(g21, std::vector<double>{0.0, 1.0}) ==
          -std::numeric_limits<double>::infinity());
    const DirichletParams below{std::vector<double>{0.5, 1.0}};
    CHECK(dirichlet_log_pdf(below, std::vector<double>{0.0, 1.0}) ==
          std::numeric_limits<double>::infinity());
    CHECK_THROWS_AS(dirichlet_log_pdf(g21, std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("tilted moments reproduce the analytic two-component example") {
    // D(1,1) tilted by lambda_1: mean (2/3, 1/3), second moments (1/2, 1/6)
    const DirichletParams g{std::vector<double>{1.0, 1.0}};
    const std::vector<double> p = {1.0, 0.0};
    const TiltedMoments mm = dirichlet_tilted_moments(g, p);
    CHECK(mm.normalizer == Catch::Approx(0.5).epsilon(1e-14));
    CHECK(mm.mean[0] == Catch::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(mm.mean[1] == Catch::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(mm.second[0] == Catch::Approx(0.5).epsilon(1e-14));
    CHECK(mm.second[1] == Catch::Approx(1.0 / 6.0).epsilon(1e-14));
    CHECK_THROWS_AS(dirichlet_tilted_moments(g, std::vector<double>{0.0, 0.0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(dirichlet_tilted_moments(g, std::vector<double>{-0.1, 0.5}),
                    std::invalid_argument);
}

TEST_CASE("moment match refits the analytic example and keeps constant tilts") {
    const DirichletParams g{std::vector<double>{1.0, 1.0}};
    const auto matched = dirichlet_moment_match(g, std::vector<double>{1.0, 0.0});
    REQUIRE(matched.has_value());
    CHECK(matched->values[0] == Catch::Approx(2.0).epsilon(1e-12));
    CHECK(matched->values[1] == Catch::Approx(1.0).epsilon(1e-12));
    // constant tilt leaves the distribution untouched
    const DirichletParams g2{std::vector<double>{3.0, 0.7, 1.4}};
    const auto same = dirichlet_moment_match(g2, std::vector<double>{0.4, 0.4, 0.4});
    REQUIRE(same.has_value());
    for (std::size_t a = 0; a < 3; ++a) {
        CHECK(same->values[a] == Catch::Approx(g2.values[a]).epsilon(1e-9));
    }
    // one-component simplex: identity
    const DirichletParams g1{std::vector<double>{4.2}};
    const auto one = dirichlet_moment_match(g1, std::vector<double>{0.9});
    REQUIRE(one.has_value());
    CHECK(one->values[0] == 4.2);
}

TEST_CASE("moment match agrees with Monte Carlo on random tilts") {
    Rng rng(911);
    int checked = 0;
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t A = 2 + static_cast<std::size_t>(rng.uniform() * 3.0);
        std::vector<double> gv(A), p(A);
        for (std::size_t a = 0; a < A; ++a) {
            gv[a] = 0.3 + 7.0 * rng.uniform();
            p[a] = (rng.uniform() < 0.2) ? 0.0 : rng.uniform();
        }
        if (std::accumulate(p.begin(), p.end(), 0.0) <= 0.0) {
            p[0] = 0.5;
        }
        const DirichletParams g{gv};
        const TiltedMoments mm = dirichlet_tilted_moments(g, p);
        const oracle::TiltedMc mc = oracle::tilted_mc(gv, p, 200000, 1000 + trial);
        for (std::size_t a = 0; a < A; ++a) {
            CHECK(std::abs(mm.mean[a] - mc.mean[a]) <= 5.0 * mc.mean_se[a] + 1e-6);
            CHECK(std::abs(mm.second[a] - mc.second[a]) <= 5.0 * mc.second_se[a] + 1e-6);
        }
        ++checked;
    }
    CHECK(checked == 30);
}

TEST_CASE("inverse_digamma round trips across magnitudes") {
    for (double x : {1e-3, 0.05, 0.4, 1.0, 3.3, 27.0, 4000.0, 1e6}) {
        const double y = digamma(x);
        CHECK(inverse_digamma(y) == Catch::Approx(x).epsilon(1e-10));
    }
}

TEST_CASE("dirichlet_ml_fit recovers parameters from analytic statistics") {
    // alpha = (2,2): psi(2) - psi(4) = -(1/2 + 1/3) = -5/6
    {
        const std::vector<double> stats = {-5.0 / 6.0, -5.0 / 6.0};
        const DirichletParams fit = dirichlet_ml_fit(stats, 10);
        CHECK(fit.values[0] == Catch::Approx(2.0).margin(1e-6));
        CHECK(fit.values[1] == Catch::Approx(2.0).margin(1e-6));
    }
    // alpha = (1,5): psi(1)-psi(6) = -137/60, psi(5)-psi(6) = -1/5
    {
        const std::vector<double> stats = {-137.0 / 60.0, -0.2};
        const DirichletParams fit = dirichlet_ml_fit(stats, 10);
        CHECK(fit.values[0] == Catch::Approx(1.0).margin(1e-6));
        CHECK(fit.values[1] == Catch::Approx(5.0).margin(1e-6));
        // gradient of the average log-likelihood vanishes at the fit
        const double psi_total = digamma(fit.sum());
        CHECK(std::abs(psi_total - digamma(fit.values[0]) + stats[0]) <= 1e-8);
        CHECK(std::abs(psi_total - digamma(fit.values[1]) + stats[1]) <= 1e-8);
    }
    CHECK_THROWS_AS(dirichlet_ml_fit(std::vector<double>{}, 3), std::invalid_argument);
    CHECK_THROWS_AS(dirichlet_ml_fit(std::vector<double>{0.5, -1.0}, 3),
                    std::invalid_argument);
    CHECK_THROWS_AS(dirichlet_ml_fit(std::vector<double>{-1.0, -2.0}, 0),
                    std::invalid_argument);
}

TEST_CASE("dirichlet_ml_fit sits at a local maximum of the objective") {
    const std::vector<double> stats = {-1.9, -0.7, -1.2};
    const DirichletParams fit = dirichlet_ml_fit(stats, 25);
    const double at_fit = dirichlet_ml_objective(fit.values, stats);
    std::mt19937_64 engine(77);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> perturbed = fit.values;
        for (double& v : perturbed) {
            v = std::max(1e-6, v + 1e-3 * noise(engine));
        }
        CHECK(dirichlet_ml_objective(perturbed, stats) <= at_fit + 1e-12);
    }
}
