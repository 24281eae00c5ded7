#include "parnn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace parnn {

namespace {

std::size_t count_difference(const std::set<std::size_t>& a, const std::set<std::size_t>& b) {
    std::size_t n = 0;
    for (std::size_t x : a)
        if (!b.count(x)) ++n;
    return n;
}

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;
};

MeanSd mean_sd(std::span<const double> x) {
    MeanSd out;
    if (x.empty()) return out;
    for (double v : x) out.mean += v;
    out.mean /= static_cast<double>(x.size());
    if (x.size() > 1) {
        double ss = 0.0;
        for (double v : x) ss += (v - out.mean) * (v - out.mean);
        out.sd = std::sqrt(ss / static_cast<double>(x.size() - 1));
    }
    return out;
}

}  // namespace

double fsr(const SelectionResult& results) {
    std::size_t false_selected = 0, selected = 0;
    for (const auto& s_hat : results.selected_lags) {
        false_selected += count_difference(s_hat, results.true_lags);
        selected += s_hat.size();
    }
    if (selected == 0) throw std::invalid_argument("fsr: no lags selected in any replicate");
    return static_cast<double>(false_selected) / static_cast<double>(selected);
}

double nsr(const SelectionResult& results) {
    if (results.true_lags.empty()) throw std::invalid_argument("nsr: empty true lag set");
    std::size_t missed = 0;
    for (const auto& s_hat : results.selected_lags)
        missed += count_difference(results.true_lags, s_hat);
    return static_cast<double>(missed) /
           static_cast<double>(results.true_lags.size() * results.selected_lags.size());
}

double mspe(std::span<const double> predictions, std::span<const double> targets) {
    if (predictions.empty() || predictions.size() != targets.size())
        throw std::invalid_argument("mspe: empty or misaligned inputs");
    double ss = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double r = predictions[i] - targets[i];
        ss += r * r;
    }
    return ss / static_cast<double>(predictions.size());
}

CoverageSummary coverage_and_length(const IntervalReport& report,
                                    std::span<const double> targets) {
    if (targets.size() != report.entries.size())
        throw std::invalid_argument("coverage_and_length: misaligned targets");
    std::size_t covered = 0;
    std::vector<double> widths;
    widths.reserve(report.entries.size());
    for (std::size_t i = 0; i < report.entries.size(); ++i) {
        const auto& e = report.entries[i];
        if (targets[i] >= e.lower && targets[i] <= e.upper) ++covered;
        widths.push_back(e.upper - e.lower);
    }
    CoverageSummary out{};
    out.coverage = report.entries.empty()
                       ? 0.0
                       : static_cast<double>(covered) / static_cast<double>(report.entries.size());
    auto ms = mean_sd(widths);
    out.mean_width = ms.mean;
    out.sd_width = ms.sd;
    std::sort(widths.begin(), widths.end());
    auto quantile = [&](double p) {
        if (widths.empty()) return 0.0;
        const double pos = p * static_cast<double>(widths.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = static_cast<std::size_t>(std::ceil(pos));
        return widths[lo] + (pos - static_cast<double>(lo)) * (widths[hi] - widths[lo]);
    };
    out.median_width = quantile(0.5);
    out.iqr_width = quantile(0.75) - quantile(0.25);
    return out;
}

double joint_coverage(std::span<const IntervalReport> reports,
                      std::span<const std::vector<double>> targets) {
    if (reports.empty() || reports.size() != targets.size())
        throw std::invalid_argument("joint_coverage: empty or misaligned inputs");
    std::size_t covered = 0;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& entries = reports[i].entries;
        if (entries.size() != targets[i].size())
            throw std::invalid_argument("joint_coverage: horizon mismatch");
        bool all_in = true;
        for (std::size_t k = 0; k < entries.size(); ++k) {
            if (targets[i][k] < entries[k].lower || targets[i][k] > entries[k].upper) {
                all_in = false;
                break;
            }
        }
        if (all_in) ++covered;
    }
    return static_cast<double>(covered) / static_cast<double>(reports.size());
}

std::string selection_summary_json(const SelectionResult& results,
                                   std::span<const double> mspe_values,
                                   std::span<const double> msfe_values) {
    nlohmann::json j;
    j["fsr"] = fsr(results);
    j["nsr"] = nsr(results);

    std::vector<double> orders;
    for (const auto& o : results.ar_orders)
        if (o) orders.push_back(static_cast<double>(*o));
    if (orders.empty()) {
        j["ar_order_mean"] = nullptr;
        j["ar_order_sd"] = nullptr;
    } else {
        auto ms = mean_sd(orders);
        j["ar_order_mean"] = ms.mean;
        j["ar_order_sd"] = ms.sd;
    }

    std::vector<double> links(results.hidden_links.begin(), results.hidden_links.end());
    auto lm = mean_sd(links);
    j["hidden_links_mean"] = lm.mean;
    j["hidden_links_sd"] = lm.sd;

    auto pm = mean_sd(mspe_values);
    j["mspe_mean"] = pm.mean;
    j["mspe_sd"] = pm.sd;
    auto fm = mean_sd(msfe_values);
    j["msfe_mean"] = fm.mean;
    j["msfe_sd"] = fm.sd;
    return j.dump(2);
}

}  // namespace parnn
