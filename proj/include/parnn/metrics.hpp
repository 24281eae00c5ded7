#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "parnn/uq.hpp"

namespace parnn {

/// Lag-selection outcomes over replicate runs of one configuration.
struct SelectionResult {
    std::set<std::size_t> true_lags;                    // S
    std::vector<std::set<std::size_t>> selected_lags;   // S-hat_j, one per replicate
    std::vector<std::size_t> hidden_links;              // per replicate
    std::vector<std::optional<std::size_t>> ar_orders;  // max(S-hat_j); null if empty
};

/// False selection rate sum_j |S-hat_j \ S| / sum_j |S-hat_j|.
double fsr(const SelectionResult& results);

/// Negative selection rate sum_j |S \ S-hat_j| / sum_j |S|.
double nsr(const SelectionResult& results);

/// Mean squared residual; MSPE on test predictions, MSFE on training fits.
double mspe(std::span<const double> predictions, std::span<const double> targets);
inline double msfe(std::span<const double> predictions, std::span<const double> targets) {
    return mspe(predictions, targets);
}

struct CoverageSummary {
    double coverage;
    double mean_width;
    double sd_width;
    double median_width;
    double iqr_width;
};

/// Per-point coverage of closed intervals plus width statistics.
CoverageSummary coverage_and_length(const IntervalReport& report,
                                    std::span<const double> targets);

/// Fraction of sequences whose targets all lie inside their per-horizon
/// intervals; one report per sequence, aligned with targets.
double joint_coverage(std::span<const IntervalReport> reports,
                      std::span<const std::vector<double>> targets);

/// Table-style summary over replicates: {fsr, nsr, ar_order_mean, ar_order_sd,
/// hidden_links_mean, hidden_links_sd, mspe_mean, mspe_sd, msfe_mean,
/// msfe_sd}; ar_order fields are null when no replicate has one.
std::string selection_summary_json(const SelectionResult& results,
                                   std::span<const double> mspe_values,
                                   std::span<const double> msfe_values);

}  // namespace parnn
