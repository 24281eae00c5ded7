#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "parnn/data.hpp"
#include "parnn/prior.hpp"
#include "parnn/train.hpp"

using namespace parnn;

namespace {

NetworkSpec small_mlp() {
    NetworkSpec spec;
    spec.kind = NetKind::MLP;
    spec.layer_widths = {3, 5, 1};
    spec.activations = {Activation::Tanh};
    spec.validate();
    return spec;
}

std::vector<Window> expar_windows(std::size_t n, std::uint64_t seed, std::size_t W = 3,
                                  std::size_t M_l = 1) {
    auto series = gen_expar(n, seed, 50);
    return window_series(series, W, M_l);
}

AnnealSchedule small_schedule() {
    AnnealSchedule s;
    s.T1 = 30;
    s.T2 = 60;
    s.T3 = 90;
    s.sigma0_init_sq = 1e-4;
    s.sigma0_end_sq = 1e-5;
    s.temp_const = 1.0;
    s.base_temperature = 0.01;
    return s;
}

}  // namespace

TEST_CASE("loss_and_grad") {
    auto spec = small_mlp();
    auto windows = expar_windows(80, 31);
    auto params = init_params(spec, 5);
    auto mask = StructureMask::ones(params.values.size());
    MixturePrior prior{1e-4, 1e-5, 0.05};
    std::span<const Window> batch(windows.data(), 10);

    SUBCASE("eta 0 equals the pure likelihood gradient") {
        auto with = loss_and_grad(spec, params, mask, batch, windows.size(), 0.0, prior);
        // adding a prior term and removing it again must not change eta=0
        auto lg2 = loss_and_grad(spec, params, mask, batch, windows.size(), 0.0,
                                 MixturePrior{0.5, 1e-3, 1.0});
        CHECK(with.loss == lg2.loss);
        CHECK(with.grad == lg2.grad);
    }
    SUBCASE("perfect fit leaves only the prior gradient") {
        std::vector<Window> fitted(windows.begin(), windows.begin() + 10);
        for (Window& w : fitted) w.target = predict(spec, params, mask, w.inputs);
        const double eta = 0.7;
        auto lg = loss_and_grad(spec, params, mask, fitted, fitted.size(), eta, prior);
        auto pg = grad_log_prior(params.values, prior);
        for (std::size_t i = 0; i < lg.grad.size(); ++i)
            CHECK(lg.grad[i] == doctest::Approx(-eta * pg[i]).epsilon(1e-9));
    }
    SUBCASE("gradient matches finite differences of the energy") {
        const double eta = 0.4;
        auto lg = loss_and_grad(spec, params, mask, batch, windows.size(), eta, prior);
        const double h = 1e-6;
        for (std::size_t i = 0; i < params.values.size(); i += 7) {
            ParamVector up = params, dn = params;
            up.values[i] += h;
            dn.values[i] -= h;
            const double fu =
                loss_and_grad(spec, up, mask, batch, windows.size(), eta, prior).loss;
            const double fd =
                loss_and_grad(spec, dn, mask, batch, windows.size(), eta, prior).loss;
            const double numeric = (fu - fd) / (2.0 * h);
            CHECK(std::abs(lg.grad[i] - numeric) / std::max(1.0, std::abs(numeric)) < 1e-5);
        }
    }
    SUBCASE("masked coordinates receive zero gradient") {
        StructureMask half = mask;
        for (std::size_t i = 0; i < half.bits.size(); i += 2) half.bits[i] = 0;
        auto lg = loss_and_grad(spec, params, half, batch, windows.size(), 0.5, prior);
        for (std::size_t i = 0; i < half.bits.size(); i += 2) CHECK(lg.grad[i] == 0.0);
    }
    SUBCASE("empty batch rejected") {
        CHECK_THROWS_AS(
            loss_and_grad(spec, params, mask, std::span<const Window>{}, 10, 0.0, prior),
            std::invalid_argument);
    }
}

TEST_CASE("sgd_momentum_step") {
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.momentum = 0.9;

    SUBCASE("zero gradient and zero velocity change nothing") {
        ParamVector p{{1.0, -2.0}};
        OptimState st(2, 0);
        sgd_momentum_step(p, std::vector<double>{0.0, 0.0}, st, cfg);
        CHECK(p.values == std::vector<double>{1.0, -2.0});
    }
    SUBCASE("momentum 0 is plain gradient descent") {
        TrainConfig plain = cfg;
        plain.momentum = 0.0;
        ParamVector p{{1.0}};
        OptimState st(1, 0);
        sgd_momentum_step(p, std::vector<double>{0.5}, st, plain);
        CHECK(p.values[0] == doctest::Approx(1.0 - 0.1 * 0.5).epsilon(1e-15));
    }
    SUBCASE("two steps on the quadratic match the hand recursion") {
        // U = beta^2/2, grad = beta; lr 0.1, momentum 0.9, from beta=1
        ParamVector p{{1.0}};
        OptimState st(1, 0);
        sgd_momentum_step(p, std::vector<double>{p.values[0]}, st, cfg);
        CHECK(p.values[0] == doctest::Approx(0.9).epsilon(1e-15));
        sgd_momentum_step(p, std::vector<double>{p.values[0]}, st, cfg);
        // v2 = 0.9*(-0.1) - 0.1*0.9 = -0.18; beta = 0.9 - 0.18
        CHECK(p.values[0] == doctest::Approx(0.72).epsilon(1e-15));
    }
}

TEST_CASE("sghmc_step") {
    TrainConfig cfg;
    cfg.learning_rate = 0.01;
    cfg.momentum = 0.9;

    SUBCASE("temperature 0 is bit-identical to sgd_momentum over many steps") {
        ParamVector a{{0.3, -0.8, 1.2}}, b = a;
        OptimState sa(3, 17), sb(3, 17);
        Rng grads(99, "test/train");
        for (int step = 0; step < 1000; ++step) {
            std::vector<double> g(3);
            for (double& x : g) x = 2.0 * grads.uniform01() - 1.0;
            auto g2 = g;
            sghmc_step(a, g, sa, cfg, 0.0);
            sgd_momentum_step(b, g2, sb, cfg);
        }
        CHECK(a.values == b.values);
        CHECK(sa.velocity == sb.velocity);
    }
    SUBCASE("injected noise has variance 2 a tau lr") {
        TrainConfig pure = cfg;
        pure.momentum = 0.0;  // a = 1, so each step adds one fresh noise draw
        const double tau = 0.5;
        ParamVector p{{0.0}};
        OptimState st(1, 123);
        double prev = 0.0, sum = 0.0, sum_sq = 0.0;
        const int n = 100000;
        for (int i = 0; i < n; ++i) {
            sghmc_step(p, std::vector<double>{0.0}, st, pure, tau);
            const double inc = p.values[0] - prev;
            prev = p.values[0];
            sum += inc;
            sum_sq += inc * inc;
        }
        const double var = sum_sq / n - (sum / n) * (sum / n);
        CHECK(var == doctest::Approx(2.0 * 1.0 * tau * pure.learning_rate).epsilon(0.02));
    }
    SUBCASE("stationary variance on the 1-D Gaussian energy approaches tau") {
        const double tau = 1.0;
        TrainConfig langevin;
        langevin.learning_rate = 0.002;
        langevin.momentum = 0.9;
        ParamVector p{{0.0}};
        OptimState st(1, 7);
        double sum_sq = 0.0;
        const int burn = 20000, keep = 400000;
        for (int i = 0; i < burn + keep; ++i) {
            sghmc_step(p, std::vector<double>{p.values[0]}, st, langevin, tau);
            if (i >= burn) sum_sq += p.values[0] * p.values[0];
        }
        CHECK(sum_sq / keep == doctest::Approx(tau).epsilon(0.05));
    }
    SUBCASE("negative temperature rejected") {
        ParamVector p{{0.0}};
        OptimState st(1, 0);
        CHECK_THROWS_AS(sghmc_step(p, std::vector<double>{0.0}, st, cfg, -1.0),
                        std::invalid_argument);
    }
}

TEST_CASE("run_prior_annealing") {
    auto spec = small_mlp();
    auto windows = expar_windows(150, 33);
    MixturePrior prior{1e-4, 1e-5, 0.05};
    TrainConfig cfg;
    cfg.learning_rate = 1e-4;
    cfg.momentum = 0.9;
    cfg.batch_size = 16;
    cfg.total_iterations = 120;
    cfg.seed = 3;
    cfg.log_every = 10;

    SUBCASE("T1 = total iterations means the prior is never applied") {
        AnnealSchedule s = small_schedule();
        s.T1 = cfg.total_iterations;
        s.T2 = s.T1 + 1;
        s.T3 = s.T2 + 1;
        auto r1 = run_prior_annealing(spec, init_params(spec, 1), windows, prior, s, cfg);
        auto r2 = run_prior_annealing(spec, init_params(spec, 1), windows,
                                      MixturePrior{0.5, 1e-8, 2.0}, s, cfg);
        CHECK(r1.params.values == r2.params.values);
        for (const auto& e : r1.log) CHECK(e.phase == "initial");
    }
    SUBCASE("training reduces the data-fit loss on a smooth series") {
        auto start = init_params(spec, 2);
        auto mask = StructureMask::ones(start.values.size());
        const double before =
            loss_and_grad(spec, start, mask, windows, windows.size(), 0.0, prior).loss;
        auto result =
            run_prior_annealing(spec, start, windows, prior, small_schedule(), cfg);
        const double after =
            loss_and_grad(spec, result.params, mask, windows, windows.size(), 0.0, prior)
                .loss;
        CHECK(after < before);
        for (const auto& e : result.log) CHECK(std::isfinite(e.loss));
    }
    SUBCASE("bit-identical across reruns") {
        auto r1 = run_prior_annealing(spec, init_params(spec, 4), windows, prior,
                                      small_schedule(), cfg);
        auto r2 = run_prior_annealing(spec, init_params(spec, 4), windows, prior,
                                      small_schedule(), cfg);
        CHECK(r1.params.values == r2.params.values);
    }
    SUBCASE("divergence raises a structured error with the last finite state") {
        TrainConfig wild = cfg;
        wild.learning_rate = 1e14;
        try {
            run_prior_annealing(spec, init_params(spec, 5), windows, prior, small_schedule(),
                                wild);
            FAIL("expected divergence");
        } catch (const DivergenceError& e) {
            CHECK(e.iteration < wild.total_iterations);
            for (double v : e.last_params.values) CHECK(std::isfinite(v));
        }
    }
}

TEST_CASE("sparsify") {
    MixturePrior prior{1e-5, 1e-6, 0.05};
    const double thr = threshold(prior);

    SUBCASE("all-zero params give an all-zero mask") {
        ParamVector zeros{std::vector<double>(9, 0.0)};
        auto res = sparsify(zeros, prior);
        for (auto b : res.mask.bits) CHECK(b == 0);
        CHECK(res.kept_fraction == 0.0);
    }
    SUBCASE("straddling values match the direct comparison, tie prunes") {
        ParamVector p{{0.0, thr / 2.0, thr, thr * 1.0001, -2.0 * thr}};
        auto res = sparsify(p, prior);
        CHECK(res.mask.bits == std::vector<std::uint8_t>{0, 0, 0, 1, 1});
        CHECK(res.kept_fraction == doctest::Approx(2.0 / 5.0));
    }
    SUBCASE("kept fraction complements predicted sparsity") {
        Rng rng(77, "test/train");
        ParamVector p;
        p.values.resize(101);
        for (double& v : p.values) v = 0.02 * (2.0 * rng.uniform01() - 1.0);
        auto res = sparsify(p, prior);
        CHECK(res.kept_fraction ==
              doctest::Approx(1.0 - predicted_sparsity(p.values, prior)).epsilon(1e-15));
    }
}

TEST_CASE("refine") {
    auto spec = small_mlp();
    auto windows = expar_windows(120, 35);
    TrainConfig cfg;
    cfg.learning_rate = 1e-4;
    cfg.momentum = 0.9;
    cfg.batch_size = 16;
    cfg.total_iterations = 80;
    cfg.seed = 9;
    cfg.log_every = 1;

    auto params = init_params(spec, 8);
    StructureMask mask = StructureMask::ones(params.values.size());
    for (std::size_t i = 0; i < mask.bits.size(); i += 3) mask.bits[i] = 0;

    SUBCASE("all-zero mask returns zeroed params untouched") {
        TrainConfig zero_cfg = cfg;
        auto res = refine(spec, params, StructureMask::zeros(params.values.size()), windows,
                          zero_cfg);
        for (double v : res.params.values) CHECK(v == 0.0);
    }
    SUBCASE("masked coordinates stay exactly zero and unread") {
        auto res = refine(spec, params, mask, windows, cfg);
        for (std::size_t i = 0; i < mask.bits.size(); ++i)
            if (!mask.bits[i]) CHECK(res.params.values[i] == 0.0);
        // perturbing masked entries must not change any output
        ParamVector perturbed = res.params;
        for (std::size_t i = 0; i < mask.bits.size(); ++i)
            if (!mask.bits[i]) perturbed.values[i] = 1e6;
        CHECK(predict(spec, res.params, mask, windows[0].inputs) ==
              predict(spec, perturbed, mask, windows[0].inputs));
    }
    SUBCASE("refinement does not increase the full-data loss") {
        MixturePrior unused{0.5, 1.0, 2.0};
        ParamVector start = params;
        zero_masked(start.values, mask);
        const double before =
            loss_and_grad(spec, start, mask, windows, windows.size(), 0.0, unused).loss;
        auto res = refine(spec, params, mask, windows, cfg);
        const double after =
            loss_and_grad(spec, res.params, mask, windows, windows.size(), 0.0, unused).loss;
        CHECK(after <= before);
    }
}
