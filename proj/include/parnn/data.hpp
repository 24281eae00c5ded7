#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "parnn/model.hpp"

namespace parnn {

struct Standardization {
    double mean;
    double sd;
};

/// A single real-valued series, optionally with exogenous columns.
struct SeriesDataset {
    std::vector<double> values;
    std::vector<std::vector<double>> exogenous;  // one row per observation, may be empty
    std::optional<Standardization> standardization;

    std::size_t size() const { return values.size(); }
};

/// A set of equal-length sequences with a prediction horizon; the last
/// `horizon` entries of every sequence are the forecast targets.
struct PanelDataset {
    std::vector<std::vector<double>> sequences;
    std::size_t horizon = 1;

    std::size_t sequence_length() const {
        return sequences.empty() ? 0 : sequences.front().size();
    }
    std::size_t observed_length() const { return sequence_length() - horizon; }
};

/// Nonlinear autoregressive process of order 7 with two logistic terms.
SeriesDataset gen_nlar(std::size_t n, std::uint64_t seed, std::size_t burn_in = 200);

/// One deterministic NLAR step from the 7 most recent values (index 0 = lag 1)
/// plus a noise term; exposed for oracle tests.
double nlar_step(const std::vector<double>& lags, double noise);

/// Exponential autoregressive process of order 1:
/// y_i = (0.8 - 1.1 exp(-50 y_{i-1}^2)) y_{i-1} + noise.
SeriesDataset gen_expar(std::size_t n, std::uint64_t seed, std::size_t burn_in = 200);

double expar_step(double prev, double noise);

/// i.i.d. stationary AR(1) sequences with unit innovations; the first draw
/// comes from the stationary law N(0, 1/(1-phi^2)).
PanelDataset gen_ar1_panel(std::size_t n_sequences, std::size_t length, std::size_t horizon,
                           double phi, std::uint64_t seed);

/// Training windows over a single series: M_l consecutive lag vectors of
/// width W each, with the final-step value as target. Lag vector for step s
/// is (y_{s-1}, ..., y_{s-W}); exogenous columns of the target step, when
/// present, are appended to every lag vector.
std::vector<Window> window_series(const SeriesDataset& series, std::size_t W, std::size_t M_l);

/// One training window per sequence: the observed prefix as scalar steps,
/// the final `horizon` values as the multi-horizon target.
std::vector<Window> panel_windows(const PanelDataset& panel);

/// Z-scores values in place using the statistics of the first train_size
/// observations only; records (mean, sd) in the dataset.
void standardize(SeriesDataset& dataset, std::size_t train_size);
void destandardize(SeriesDataset& dataset);

/// CSV: single float column "y", optional header, exogenous columns after y.
SeriesDataset read_csv(const std::string& path);
void write_csv(const std::string& path, const SeriesDataset& dataset);

}  // namespace parnn
