#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "doctest.h"
#include "parnn/data.hpp"
#include "parnn/rng.hpp"

using namespace parnn;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// lag-k sample autocorrelation
double autocorr(const std::vector<double>& v, std::size_t k) {
    const double m = mean_of(v);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) den += (v[i] - m) * (v[i] - m);
    for (std::size_t i = k; i < v.size(); ++i) num += (v[i] - m) * (v[i - k] - m);
    return num / den;
}

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("/tmp/parnn_test_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("nlar_step hand evaluation") {
    SUBCASE("zero history, zero noise") {
        std::vector<double> lags(7, 0.0);
        const double g1 = sigmoid(0.46 * (-6.68));
        const double g2 = sigmoid(1.17e-3 * 0.38);
        const double expect = -0.17 + 12.80 * g1 + 2.44 * g2;
        CHECK(nlar_step(lags, 0.0) == doctest::Approx(expect).epsilon(1e-15));
    }
    SUBCASE("distinct lags engage every linear coefficient") {
        std::vector<double> lags{1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0};
        const double g1 = sigmoid(0.46 * (0.29 * 1.0 - 0.87 * 2.0 + 0.40 * 7.0 - 6.68));
        const double g2 = sigmoid(1.17e-3 * (0.83 * 1.0 - 0.53 * 2.0 - 0.18 * 7.0 + 0.38));
        const double expect = -0.17 + 0.85 * 1.0 + 0.14 * 2.0 - 0.31 * 3.0 + 0.08 * 7.0 +
                              12.80 * g1 + 2.44 * g2 + 0.25;
        CHECK(nlar_step(lags, 0.25) == doctest::Approx(expect).epsilon(1e-15));
    }
    SUBCASE("fewer than 7 lags is an error") {
        CHECK_THROWS_AS(nlar_step(std::vector<double>(6, 0.0), 0.0), std::invalid_argument);
    }
}

TEST_CASE("gen_nlar") {
    SUBCASE("deterministic in the seed") {
        auto a = gen_nlar(200, 5);
        auto b = gen_nlar(200, 5);
        CHECK(a.values == b.values);
        auto c = gen_nlar(200, 6);
        CHECK(a.values != c.values);
    }
    SUBCASE("replays from nlar_step with the generator's own noise stream") {
        // after burn-in the series must satisfy the order-7 recursion;
        // verify directly by regenerating with burn_in values retained
        auto long_run = gen_nlar(300, 9, 7);
        for (std::size_t i = 7; i < long_run.values.size(); ++i) {
            std::vector<double> lags(7);
            for (std::size_t k = 0; k < 7; ++k) lags[k] = long_run.values[i - 1 - k];
            const double noiseless = nlar_step(lags, 0.0);
            // innovation must be the N(0,1)-scale remainder
            CHECK(std::abs(long_run.values[i] - noiseless) < 6.0);
        }
    }
    SUBCASE("stays in a plausible stationary range") {
        auto ds = gen_nlar(5000, 11);
        double lo = 1e9, hi = -1e9;
        for (double v : ds.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        CHECK(lo > -100.0);
        CHECK(hi < 100.0);
        CHECK(std::abs(mean_of(ds.values)) < 50.0);
    }
    SUBCASE("validation") {
        CHECK_THROWS_AS(gen_nlar(0, 1), std::invalid_argument);
        CHECK_THROWS_AS(gen_nlar(10, 1, 6), std::invalid_argument);
    }
}

TEST_CASE("expar_step and gen_expar") {
    SUBCASE("hand evaluations") {
        CHECK(expar_step(0.0, 0.0) == 0.0);
        const double expect = (0.8 - 1.1 * std::exp(-50.0)) * 1.0;
        CHECK(expar_step(1.0, 0.0) == doctest::Approx(expect).epsilon(1e-15));
        CHECK(expar_step(0.5, 0.3) ==
              doctest::Approx((0.8 - 1.1 * std::exp(-12.5)) * 0.5 + 0.3).epsilon(1e-15));
    }
    SUBCASE("deterministic and length-correct") {
        auto a = gen_expar(150, 3);
        CHECK(a.size() == 150);
        CHECK(a.values == gen_expar(150, 3).values);
    }
    SUBCASE("roughly mean-zero, bounded spread") {
        auto ds = gen_expar(20000, 17);
        CHECK(std::abs(mean_of(ds.values)) < 0.1);
        double ss = 0.0;
        for (double v : ds.values) ss += v * v;
        const double var = ss / static_cast<double>(ds.size());
        CHECK(var > 0.5);
        CHECK(var < 5.0);
    }
}

TEST_CASE("gen_ar1_panel") {
    SUBCASE("phi = 0 gives iid standard normals") {
        auto panel = gen_ar1_panel(1, 20000, 1, 0.0, 41);
        const auto& s = panel.sequences[0];
        CHECK(std::abs(mean_of(s)) < 0.05);
        double ss = 0.0;
        for (double v : s) ss += v * v;
        CHECK(ss / static_cast<double>(s.size()) == doctest::Approx(1.0).epsilon(0.05));
        CHECK(std::abs(autocorr(s, 1)) < 0.05);
    }
    SUBCASE("phi = 0.9 has the stationary variance and lag-1 correlation") {
        auto panel = gen_ar1_panel(1, 50000, 1, 0.9, 43);
        const auto& s = panel.sequences[0];
        double ss = 0.0;
        const double m = mean_of(s);
        for (double v : s) ss += (v - m) * (v - m);
        const double var = ss / static_cast<double>(s.size() - 1);
        CHECK(var == doctest::Approx(1.0 / (1.0 - 0.81)).epsilon(0.1));
        CHECK(autocorr(s, 1) == doctest::Approx(0.9).epsilon(0.02));
    }
    SUBCASE("sequences are mutually independent draws") {
        auto panel = gen_ar1_panel(3, 50, 2, 0.5, 47);
        CHECK(panel.sequences.size() == 3);
        CHECK(panel.horizon == 2);
        CHECK(panel.sequences[0] != panel.sequences[1]);
        CHECK(panel.sequences[1] != panel.sequences[2]);
        // deterministic in the seed
        auto again = gen_ar1_panel(3, 50, 2, 0.5, 47);
        CHECK(panel.sequences == again.sequences);
    }
    SUBCASE("validation") {
        CHECK_THROWS_AS(gen_ar1_panel(2, 10, 1, 1.0, 1), std::invalid_argument);
        CHECK_THROWS_AS(gen_ar1_panel(2, 3, 3, 0.5, 1), std::invalid_argument);
    }
}

TEST_CASE("window_series") {
    SeriesDataset ds;
    ds.values = {10, 11, 12, 13, 14, 15, 16, 17, 18, 19};

    SUBCASE("count and target alignment for W=1, M_l=2") {
        auto w = window_series(ds, 1, 2);
        CHECK(w.size() == 8);  // targets at indices 2..9
        for (std::size_t i = 0; i < w.size(); ++i) {
            CHECK(w[i].target[0] == ds.values[i + 2]);
            REQUIRE(w[i].inputs.size() == 2);
            // lag vector at step s is (y_{s-1}, ..., y_{s-W})
            CHECK(w[i].inputs[0][0] == ds.values[i + 1 - 1]);
            CHECK(w[i].inputs[1][0] == ds.values[i + 2 - 1]);
        }
    }
    SUBCASE("lag vector ordering for W=3") {
        auto w = window_series(ds, 3, 1);
        REQUIRE_FALSE(w.empty());
        // first window: target index 3, single step s = 3
        CHECK(w[0].target[0] == 13);
        CHECK(w[0].inputs[0] == std::vector<double>{12, 11, 10});
    }
    SUBCASE("exogenous columns of the target step are appended to each step") {
        SeriesDataset ex = ds;
        ex.exogenous.assign(10, {0.0, 0.0});
        for (std::size_t i = 0; i < 10; ++i) ex.exogenous[i] = {100.0 + i, -1.0};
        auto w = window_series(ex, 2, 2);
        // first target index = 3
        CHECK(w[0].inputs[0] == std::vector<double>{11, 10, 103.0, -1.0});
        CHECK(w[0].inputs[1] == std::vector<double>{12, 11, 103.0, -1.0});
    }
    SUBCASE("series too short") {
        SeriesDataset tiny;
        tiny.values = {1, 2, 3};
        CHECK_THROWS_AS(window_series(tiny, 2, 1), std::invalid_argument);
        CHECK_THROWS_AS(window_series(ds, 0, 1), std::invalid_argument);
    }
}

TEST_CASE("panel_windows") {
    PanelDataset panel;
    panel.horizon = 2;
    panel.sequences = {{1, 2, 3, 4, 5}, {6, 7, 8, 9, 10}};

    SUBCASE("observed prefix becomes scalar steps; tail is the target") {
        auto w = panel_windows(panel);
        REQUIRE(w.size() == 2);
        REQUIRE(w[0].inputs.size() == 3);
        CHECK(w[0].inputs[0] == std::vector<double>{1});
        CHECK(w[0].inputs[2] == std::vector<double>{3});
        CHECK(w[0].target == std::vector<double>{4, 5});
        CHECK(w[1].target == std::vector<double>{9, 10});
    }
    SUBCASE("ragged and degenerate panels rejected") {
        PanelDataset ragged = panel;
        ragged.sequences[1].push_back(0.0);
        CHECK_THROWS_AS(panel_windows(ragged), std::invalid_argument);
        PanelDataset empty;
        CHECK_THROWS_AS(panel_windows(empty), std::invalid_argument);
        PanelDataset tooshort;
        tooshort.horizon = 5;
        tooshort.sequences = {{1, 2, 3}};
        CHECK_THROWS_AS(panel_windows(tooshort), std::invalid_argument);
    }
}

TEST_CASE("standardize") {
    SUBCASE("uses training statistics only and round-trips") {
        SeriesDataset ds;
        ds.values = {1.0, 3.0, 100.0, -50.0};
        auto orig = ds.values;
        standardize(ds, 2);  // train mean 2, train sd sqrt(2)
        CHECK(ds.standardization->mean == 2.0);
        CHECK(ds.standardization->sd == doctest::Approx(std::sqrt(2.0)));
        CHECK(ds.values[0] == doctest::Approx(-1.0 / std::sqrt(2.0)));
        CHECK(ds.values[2] == doctest::Approx(98.0 / std::sqrt(2.0)));
        destandardize(ds);
        for (std::size_t i = 0; i < orig.size(); ++i)
            CHECK(ds.values[i] == doctest::Approx(orig[i]).epsilon(1e-12));
        CHECK_FALSE(ds.standardization.has_value());
    }
    SUBCASE("train slice gets exactly mean 0, sd 1") {
        Rng rng(51, "test/data");
        SeriesDataset ds;
        for (int i = 0; i < 100; ++i) ds.values.push_back(5.0 + 2.0 * rng.normal());
        standardize(ds, 60);
        double m = 0.0;
        for (int i = 0; i < 60; ++i) m += ds.values[i];
        m /= 60.0;
        CHECK(std::abs(m) < 1e-12);
        double ss = 0.0;
        for (int i = 0; i < 60; ++i) ss += (ds.values[i] - m) * (ds.values[i] - m);
        CHECK(ss / 59.0 == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("errors") {
        SeriesDataset ds;
        ds.values = {1.0, 1.0, 1.0};
        CHECK_THROWS_AS(standardize(ds, 3), std::invalid_argument);  // zero variance
        ds.values = {1.0, 2.0};
        CHECK_THROWS_AS(standardize(ds, 5), std::invalid_argument);  // train > n
        standardize(ds, 2);
        CHECK_THROWS_AS(standardize(ds, 2), std::logic_error);  // double standardize
        destandardize(ds);
        CHECK_THROWS_AS(destandardize(ds), std::logic_error);
    }
}

TEST_CASE("csv io") {
    SUBCASE("round trip preserves every bit") {
        Rng rng(53, "test/data");
        SeriesDataset ds;
        for (int i = 0; i < 50; ++i) ds.values.push_back(rng.normal() * 1e3);
        ds.values.push_back(0.1);  // not exactly representable
        TempFile f("roundtrip.csv");
        write_csv(f.path, ds);
        auto back = read_csv(f.path);
        CHECK(back.values == ds.values);
        CHECK(back.exogenous.empty());
    }
    SUBCASE("exogenous columns round trip") {
        SeriesDataset ds;
        ds.values = {1.5, -2.5};
        ds.exogenous = {{0.25, 3.0}, {-0.75, 4.0}};
        TempFile f("exo.csv");
        write_csv(f.path, ds);
        auto back = read_csv(f.path);
        CHECK(back.values == ds.values);
        CHECK(back.exogenous == ds.exogenous);
    }
    SUBCASE("headerless files are accepted") {
        TempFile f("noheader.csv");
        std::ofstream(f.path) << "1.0\n2.0\n3.0\n";
        auto ds = read_csv(f.path);
        CHECK(ds.values == std::vector<double>{1.0, 2.0, 3.0});
    }
    SUBCASE("non-numeric cell reports the row number") {
        TempFile f("bad.csv");
        std::ofstream(f.path) << "y\n1.0\noops\n";
        try {
            read_csv(f.path);
            FAIL("expected an exception");
        } catch (const std::runtime_error& e) {
            CHECK(std::string(e.what()).find("row 3") != std::string::npos);
        }
    }
    SUBCASE("missing and empty files are errors") {
        CHECK_THROWS_AS(read_csv("/tmp/parnn_test_does_not_exist.csv"), std::runtime_error);
        TempFile f("empty.csv");
        std::ofstream(f.path) << "y\n";
        CHECK_THROWS_AS(read_csv(f.path), std::runtime_error);
    }
}
