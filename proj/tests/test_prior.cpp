#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "parnn/prior.hpp"
#include "parnn/rng.hpp"

using namespace parnn;

namespace {

double log_normal_pdf(double x, double var) {
    return -0.5 * (std::log(2.0 * M_PI) + std::log(var) + x * x / var);
}

// Direct two-term mixture evaluation (long double for headroom).
double direct_log_mixture(double b, const MixturePrior& p) {
    const long double t1 =
        static_cast<long double>(p.lambda_n) * std::exp(static_cast<long double>(
                                                    log_normal_pdf(b, p.sigma1_sq)));
    const long double t0 =
        (1.0L - static_cast<long double>(p.lambda_n)) *
        std::exp(static_cast<long double>(log_normal_pdf(b, p.sigma0_sq)));
    return static_cast<double>(std::log(t1 + t0));
}

// Responsibility of the wide component, direct evaluation.
double responsibility(double b, const MixturePrior& p) {
    const double l1 = std::log(p.lambda_n) + log_normal_pdf(b, p.sigma1_sq);
    const double l0 = std::log1p(-p.lambda_n) + log_normal_pdf(b, p.sigma0_sq);
    return 1.0 / (1.0 + std::exp(l0 - l1));
}

// Bisection root of responsibility(b) = 0.5 on (0, sigma1).
double responsibility_root(const MixturePrior& p, double tol = 1e-12) {
    double lo = 0.0, hi = std::sqrt(p.sigma1_sq) * 50.0;
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if (responsibility(mid, p) < 0.5)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("log_prior") {
    SUBCASE("near-identical components approach the single Gaussian") {
        const double s1 = 0.05;
        MixturePrior p{0.5, s1 - 1e-12, s1};
        CHECK(log_prior(std::vector<double>{0.0}, p) ==
              doctest::Approx(log_normal_pdf(0.0, s1)).epsilon(1e-9));
    }
    SUBCASE("matches direct two-term evaluation at the paper-scale parameters") {
        MixturePrior p{1e-7, 1e-7, 0.05};
        CHECK(log_prior(std::vector<double>{0.0}, p) ==
              doctest::Approx(direct_log_mixture(0.0, p)).epsilon(1e-12));
        for (double b : {1e-4, 0.01, 0.2, 1.0})
            CHECK(log_prior(std::vector<double>{b}, p) ==
                  doctest::Approx(direct_log_mixture(b, p)).epsilon(1e-10));
    }
    SUBCASE("additivity over entries") {
        MixturePrior p{1e-3, 1e-5, 0.05};
        const double one = log_prior(std::vector<double>{0.0}, p);
        CHECK(log_prior(std::vector<double>(7, 0.0), p) ==
              doctest::Approx(7.0 * one).epsilon(1e-14));
    }
    SUBCASE("rejects non-finite entries") {
        MixturePrior p{1e-3, 1e-5, 0.05};
        CHECK_THROWS_AS(
            log_prior(std::vector<double>{std::numeric_limits<double>::quiet_NaN()}, p),
            std::invalid_argument);
    }
    SUBCASE("parameter validation") {
        CHECK_THROWS_AS(log_prior(std::vector<double>{0.0}, MixturePrior{0.0, 1e-5, 0.05}),
                        std::invalid_argument);
        CHECK_THROWS_AS(log_prior(std::vector<double>{0.0}, MixturePrior{0.5, 0.05, 0.05}),
                        std::invalid_argument);
    }
}

TEST_CASE("grad_log_prior") {
    MixturePrior p{1e-5, 1e-6, 0.05};
    SUBCASE("zero at the origin") {
        CHECK(grad_log_prior(std::vector<double>{0.0}, p)[0] == 0.0);
    }
    SUBCASE("matches finite differences of log_prior") {
        Rng rng(21, "test/prior");
        for (int i = 0; i < 50; ++i) {
            const double b = 0.6 * (2.0 * rng.uniform01() - 1.0);
            const double h = 1e-7;
            const double fd = (log_prior(std::vector<double>{b + h}, p) -
                               log_prior(std::vector<double>{b - h}, p)) /
                              (2.0 * h);
            const double an = grad_log_prior(std::vector<double>{b}, p)[0];
            CHECK(std::abs(an - fd) / std::max(1.0, std::abs(an)) < 1e-6);
        }
    }
    SUBCASE("wide component dominates at large magnitude") {
        const double b = 10.0 * std::sqrt(p.sigma1_sq);
        CHECK(grad_log_prior(std::vector<double>{b}, p)[0] ==
              doctest::Approx(-b / p.sigma1_sq).epsilon(1e-10));
    }
}

TEST_CASE("threshold") {
    SUBCASE("closed form equals the responsibility-0.5 crossing") {
        MixturePrior p{1e-7, 1e-7, 0.05};
        const double thr = threshold(p);
        CHECK(thr == doctest::Approx(responsibility_root(p)).epsilon(1e-8));
        CHECK(responsibility(thr * 0.999, p) < 0.5);
        CHECK(responsibility(thr * 1.001, p) > 0.5);
    }
    SUBCASE("vanishes as sigma0 goes to zero") {
        MixturePrior p{1e-7, 1e-12, 0.05};
        CHECK(threshold(p) < 1e-4);
        CHECK(threshold(p) > 0.0);
    }
    SUBCASE("hand algebra at lambda=1/2, sigma1=2 sigma0") {
        const double s0 = 0.01;
        MixturePrior p{0.5, s0 * s0, 4.0 * s0 * s0};
        const double expect =
            std::sqrt(2.0) * s0 * (2.0 * s0) / std::sqrt(3.0 * s0 * s0) * std::sqrt(std::log(2.0));
        CHECK(threshold(p) == doctest::Approx(expect).epsilon(1e-14));
    }
    SUBCASE("no real threshold when the spike dominates nowhere") {
        // (1-lambda) sigma1 <= lambda sigma0
        MixturePrior p{0.9, 1e-4, 1.05e-4};
        CHECK_THROWS_AS(threshold(p), std::domain_error);
    }
}

TEST_CASE("schedule_at") {
    AnnealSchedule s;
    s.T1 = 100;
    s.T2 = 200;
    s.T3 = 400;
    s.sigma0_init_sq = 1e-5;
    s.sigma0_end_sq = 1e-6;
    s.temp_const = 25.0;
    s.base_temperature = 0.1;

    CHECK(schedule_at(0, s).initial_phase);
    CHECK_FALSE(schedule_at(100, s).initial_phase);
    CHECK(schedule_at(100, s).eta == 0.0);
    CHECK(schedule_at(200, s).eta == 1.0);
    CHECK(schedule_at(150, s).eta == doctest::Approx(0.5));
    CHECK(schedule_at(400, s).sigma0_sq == doctest::Approx(1e-6));
    CHECK(schedule_at(425, s).temperature == doctest::Approx(1.0));  // c/(t-T3) at t=T3+c

    SUBCASE("continuity at the phase boundaries") {
        CHECK(schedule_at(200, s).sigma0_sq == doctest::Approx(schedule_at(201, s).sigma0_sq)
                                                   .epsilon(1e-1));
        const double before = schedule_at(399, s).sigma0_sq;
        const double at = schedule_at(400, s).sigma0_sq;
        CHECK(std::abs(before - at) < (s.sigma0_init_sq - s.sigma0_end_sq) / 100.0);
        CHECK(schedule_at(199, s).eta < 1.0);
        CHECK(schedule_at(199, s).eta > 0.98);
    }
    SUBCASE("bad ordering rejected") {
        AnnealSchedule bad = s;
        bad.T2 = 100;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    }
}

TEST_CASE("predicted_sparsity") {
    MixturePrior p{1e-5, 1e-6, 0.05};
    const double thr = threshold(p);
    CHECK(predicted_sparsity(std::vector<double>(10, 0.0), p) == 1.0);
    CHECK(predicted_sparsity(std::vector<double>(10, 10.0 * thr), p) == 0.0);
    std::vector<double> mixed{0.0, thr * 0.5, thr, thr * 1.01, -thr * 2.0, 5.0};
    // exactly-at-threshold counts as "small" (prune side of the tie rule)
    CHECK(predicted_sparsity(mixed, p) == doctest::Approx(3.0 / 6.0));
}

TEST_CASE("calibrate_sigma0_init") {
    MixturePrior tmpl{1e-5, 1e-6, 0.05};
    Rng rng(22, "test/prior");

    SUBCASE("hits a median-magnitude target") {
        std::vector<double> beta(101);
        for (double& b : beta) b = 0.3 * (2.0 * rng.uniform01() - 1.0);
        auto res = calibrate_sigma0_init(beta, tmpl, 0.5, 0.01);
        CHECK_FALSE(res.at_endpoint);
        CHECK(std::abs(res.achieved_sparsity - 0.5) <= 0.01);
        auto again = calibrate_sigma0_init(beta, tmpl, 0.5, 0.01);
        CHECK(res.sigma0_init_sq == again.sigma0_init_sq);  // deterministic
    }
    SUBCASE("infeasible target returns an endpoint with the warning flag") {
        // atoms at 0 and at 5 only: sparsity jumps 0.5 -> 1.0, so no
        // threshold can realize 0.7 and the closest point is flagged
        std::vector<double> beta;
        for (int i = 0; i < 50; ++i) beta.push_back(0.0);
        for (int i = 0; i < 50; ++i) beta.push_back(5.0);
        auto res = calibrate_sigma0_init(beta, tmpl, 0.7, 0.01);
        CHECK(res.at_endpoint);
        CHECK((res.achieved_sparsity == 0.5 || res.achieved_sparsity == 1.0));
    }
    SUBCASE("large random vector, 0.90 target within 0.01") {
        std::vector<double> beta(10000);
        for (double& b : beta) b = 0.4 * (2.0 * rng.uniform01() - 1.0);
        auto res = calibrate_sigma0_init(beta, tmpl, 0.90, 0.01);
        CHECK_FALSE(res.at_endpoint);
        CHECK(std::abs(res.achieved_sparsity - 0.90) <= 0.01);
    }
}

TEST_CASE("monotonicity properties on grids") {
    // threshold increases in sigma0 for fixed lambda, sigma1; predicted
    // sparsity increases with threshold
    MixturePrior base{1e-6, 1e-8, 0.05};
    Rng rng(23, "test/prior");
    std::vector<double> beta(500);
    for (double& b : beta) b = 0.2 * (2.0 * rng.uniform01() - 1.0);

    double prev_thr = 0.0, prev_sparsity = 0.0;
    for (double s0 : {1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3}) {
        MixturePrior p = base.with_sigma0(s0);
        const double thr = threshold(p);
        CHECK(thr > prev_thr);
        const double sp = predicted_sparsity(beta, p);
        CHECK(sp >= prev_sparsity);
        prev_thr = thr;
        prev_sparsity = sp;
    }
}
