#include "parnn/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "parnn/rng.hpp"

namespace parnn {

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

double nlar_step(const std::vector<double>& lags, double noise) {
    if (lags.size() < 7) throw std::invalid_argument("nlar_step: need 7 lags");
    const double y1 = lags[0], y2 = lags[1], y3 = lags[2], y7 = lags[6];
    const double g1 = logistic(0.46 * (0.29 * y1 - 0.87 * y2 + 0.40 * y7 - 6.68));
    const double g2 = logistic(1.17e-3 * (0.83 * y1 - 0.53 * y2 - 0.18 * y7 + 0.38));
    return -0.17 + 0.85 * y1 + 0.14 * y2 - 0.31 * y3 + 0.08 * y7 + 12.80 * g1 + 2.44 * g2 +
           noise;
}

SeriesDataset gen_nlar(std::size_t n, std::uint64_t seed, std::size_t burn_in) {
    if (n < 1) throw std::invalid_argument("gen_nlar: n must be >= 1");
    if (burn_in < 7) throw std::invalid_argument("gen_nlar: burn_in must be >= 7");
    Rng rng(seed, "data/nlar");
    std::vector<double> history(7, 0.0);  // index 0 = lag 1
    std::vector<double> out;
    out.reserve(n);
    for (std::size_t i = 0; i < burn_in + n; ++i) {
        const double y = nlar_step(history, rng.normal());
        for (std::size_t k = 6; k > 0; --k) history[k] = history[k - 1];
        history[0] = y;
        if (i >= burn_in) out.push_back(y);
    }
    SeriesDataset ds;
    ds.values = std::move(out);
    return ds;
}

double expar_step(double prev, double noise) {
    return (0.8 - 1.1 * std::exp(-50.0 * prev * prev)) * prev + noise;
}

SeriesDataset gen_expar(std::size_t n, std::uint64_t seed, std::size_t burn_in) {
    if (n < 1) throw std::invalid_argument("gen_expar: n must be >= 1");
    if (burn_in < 1) throw std::invalid_argument("gen_expar: burn_in must be >= 1");
    Rng rng(seed, "data/expar");
    double y = 0.0;
    std::vector<double> out;
    out.reserve(n);
    for (std::size_t i = 0; i < burn_in + n; ++i) {
        y = expar_step(y, rng.normal());
        if (i >= burn_in) out.push_back(y);
    }
    SeriesDataset ds;
    ds.values = std::move(out);
    return ds;
}

PanelDataset gen_ar1_panel(std::size_t n_sequences, std::size_t length, std::size_t horizon,
                           double phi, std::uint64_t seed) {
    if (std::abs(phi) >= 1.0) throw std::invalid_argument("gen_ar1_panel: need |phi| < 1");
    if (length <= horizon)
        throw std::invalid_argument("gen_ar1_panel: length must exceed horizon");
    PanelDataset panel;
    panel.horizon = horizon;
    panel.sequences.reserve(n_sequences);
    const double stat_sd = 1.0 / std::sqrt(1.0 - phi * phi);
    for (std::size_t i = 0; i < n_sequences; ++i) {
        Rng rng(derive_stream_seed(seed, "data/ar1_panel") + i, "data/ar1_seq");
        std::vector<double> seq(length);
        seq[0] = stat_sd * rng.normal();
        for (std::size_t t = 1; t < length; ++t) seq[t] = phi * seq[t - 1] + rng.normal();
        panel.sequences.push_back(std::move(seq));
    }
    return panel;
}

std::vector<Window> window_series(const SeriesDataset& series, std::size_t W, std::size_t M_l) {
    const std::size_t n = series.size();
    if (W < 1 || M_l < 1) throw std::invalid_argument("window_series: W and M_l must be >= 1");
    if (n <= M_l + W) throw std::invalid_argument("window_series: series too short");
    if (!series.exogenous.empty() && series.exogenous.size() != n)
        throw std::invalid_argument("window_series: exogenous rows must match series length");

    std::vector<Window> windows;
    windows.reserve(n - M_l - W + 1);
    // target index i (0-based) runs over the usable tail
    for (std::size_t i = M_l + W - 1; i < n; ++i) {
        Window win;
        win.inputs.reserve(M_l);
        for (std::size_t s = i - M_l + 1; s <= i; ++s) {
            std::vector<double> x;
            x.reserve(W + (series.exogenous.empty() ? 0 : series.exogenous[i].size()));
            for (std::size_t j = 1; j <= W; ++j) x.push_back(series.values[s - j]);
            if (!series.exogenous.empty())
                x.insert(x.end(), series.exogenous[i].begin(), series.exogenous[i].end());
            win.inputs.push_back(std::move(x));
        }
        win.target = {series.values[i]};
        windows.push_back(std::move(win));
    }
    return windows;
}

std::vector<Window> panel_windows(const PanelDataset& panel) {
    if (panel.sequences.empty()) throw std::invalid_argument("panel_windows: empty panel");
    const std::size_t len = panel.sequence_length();
    if (len <= panel.horizon)
        throw std::invalid_argument("panel_windows: sequences shorter than horizon");
    const std::size_t observed = len - panel.horizon;
    std::vector<Window> windows;
    windows.reserve(panel.sequences.size());
    for (const auto& seq : panel.sequences) {
        if (seq.size() != len)
            throw std::invalid_argument("panel_windows: ragged sequence lengths");
        Window w;
        w.inputs.reserve(observed);
        for (std::size_t t = 0; t < observed; ++t) w.inputs.push_back({seq[t]});
        w.target.assign(seq.begin() + static_cast<std::ptrdiff_t>(observed), seq.end());
        windows.push_back(std::move(w));
    }
    return windows;
}

void standardize(SeriesDataset& dataset, std::size_t train_size) {
    if (train_size < 2 || train_size > dataset.size())
        throw std::invalid_argument("standardize: bad train size");
    if (dataset.standardization)
        throw std::logic_error("standardize: dataset already standardized");
    double mean = 0.0;
    for (std::size_t i = 0; i < train_size; ++i) mean += dataset.values[i];
    mean /= static_cast<double>(train_size);
    double ss = 0.0;
    for (std::size_t i = 0; i < train_size; ++i) {
        const double d = dataset.values[i] - mean;
        ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(train_size - 1));
    if (sd == 0.0) throw std::invalid_argument("standardize: zero training variance");
    for (double& v : dataset.values) v = (v - mean) / sd;
    dataset.standardization = Standardization{mean, sd};
}

void destandardize(SeriesDataset& dataset) {
    if (!dataset.standardization) throw std::logic_error("destandardize: not standardized");
    const auto [mean, sd] = *dataset.standardization;
    for (double& v : dataset.values) v = v * sd + mean;
    dataset.standardization.reset();
}

SeriesDataset read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_csv: cannot open " + path);
    SeriesDataset ds;
    std::string line;
    std::size_t row = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (first) {
            first = false;
            if (cells[0] == "y") continue;  // header row
        }
        std::vector<double> vals;
        for (const auto& c : cells) {
            std::size_t pos = 0;
            double v;
            try {
                v = std::stod(c, &pos);
            } catch (const std::exception&) {
                throw std::runtime_error("read_csv: non-numeric cell at row " +
                                         std::to_string(row));
            }
            if (pos != c.size())
                throw std::runtime_error("read_csv: non-numeric cell at row " +
                                         std::to_string(row));
            vals.push_back(v);
        }
        ds.values.push_back(vals[0]);
        if (vals.size() > 1)
            ds.exogenous.emplace_back(vals.begin() + 1, vals.end());
    }
    if (ds.values.empty()) throw std::runtime_error("read_csv: no data rows in " + path);
    if (!ds.exogenous.empty() && ds.exogenous.size() != ds.values.size())
        throw std::runtime_error("read_csv: inconsistent exogenous columns");
    return ds;
}

void write_csv(const std::string& path, const SeriesDataset& dataset) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_csv: cannot open " + path);
    out << "y";
    const std::size_t exo = dataset.exogenous.empty() ? 0 : dataset.exogenous.front().size();
    for (std::size_t j = 0; j < exo; ++j) out << ",x" << j + 1;
    out << "\n";
    char buf[64];
    for (std::size_t i = 0; i < dataset.values.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", dataset.values[i]);
        out << buf;
        for (std::size_t j = 0; j < exo; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", dataset.exogenous[i][j]);
            out << "," << buf;
        }
        out << "\n";
    }
}

}  // namespace parnn
