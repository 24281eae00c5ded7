#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "parnn/math.hpp"
#include "parnn/model.hpp"

namespace parnn {

struct IntervalEntry {
    double center;
    double lower;
    double upper;
    double varsigma2;  // delta-method variance of the center
};

/// Symmetric prediction intervals; one entry per test point (one-step mode)
/// or per horizon step (multi-horizon mode).
struct IntervalReport {
    std::vector<IntervalEntry> entries;
    double alpha = 0.0;
    std::vector<double> sigma2_hat;  // length 1, or m for multi-horizon
    bool degenerate = false;         // conformal quantile index exceeded n_cal
};

struct SingularHessianError : std::runtime_error {
    explicit SingularHessianError(double max_jitter)
        : std::runtime_error("negative log-likelihood Hessian is singular even with jitter " +
                             std::to_string(max_jitter)),
          max_jitter(max_jitter) {}
    double max_jitter;
};

/// Dense negative-Hessian of the averaged log-likelihood, restricted to
/// mask-1 coordinates and regularized until positive definite.
struct HessianBlock {
    std::vector<std::size_t> active;  // global parameter indices, ascending
    std::vector<double> matrix;       // row-major k x k, symmetric
    double jitter = 0.0;

    std::size_t dim() const { return active.size(); }
    /// g^T H^{-1} g for a gradient restricted to the active coordinates.
    double quadratic_form(std::span<const double> g_active) const;
};

struct HessianOptions {
    double fd_step = 1e-5;       // central-difference step on each coordinate
    double jitter_start = 1e-8;  // first jitter tried after the plain attempt
    double jitter_max = 1e-2;
};

/// sigma^2-hat = (1 / (N - 1)) sum_i ||y_i - mu_i||^2 over N training windows.
double estimate_sigma2(const NetworkSpec& spec, const ParamVector& params,
                       const StructureMask& mask, std::span<const Window> train);

/// -grad^2 of l_n = (1/n) sum_i log N(y_i | mu_i, sigma2 I) over mask-1
/// coordinates, by central finite differences of the analytic gradient,
/// symmetrized, with escalating jitter until Cholesky succeeds.
HessianBlock neg_hessian(const NetworkSpec& spec, const ParamVector& params,
                         const StructureMask& mask, std::span<const Window> train,
                         double sigma2, const HessianOptions& opts = {});

/// sigma2/Hessian pair reused across test points.
struct PreparedUq {
    double sigma2;
    std::vector<double> sigma2_vec;  // per-horizon (multi-horizon mode)
    HessianBlock hessian;
    std::size_t n_train;
};

PreparedUq prepare_one_step(const NetworkSpec& spec, const ParamVector& params,
                            const StructureMask& mask, std::span<const Window> train,
                            const HessianOptions& opts = {});

/// mu-hat +/- z_{alpha/2} sqrt(varsigma2/N + sigma2) with
/// varsigma2 = grad mu^T (-grad^2 l_n)^{-1} grad mu at the test point.
IntervalEntry interval_one_step(const NetworkSpec& spec, const ParamVector& params,
                                const StructureMask& mask, const PreparedUq& prep,
                                const std::vector<std::vector<double>>& test_inputs,
                                double alpha);

/// Convenience overload computing sigma2 and the Hessian from train.
IntervalEntry interval_one_step(const NetworkSpec& spec, const ParamVector& params,
                                const StructureMask& mask, std::span<const Window> train,
                                const std::vector<std::vector<double>>& test_inputs,
                                double alpha, const HessianOptions& opts = {});

PreparedUq prepare_multi_horizon(const NetworkSpec& spec, const ParamVector& params,
                                 const StructureMask& mask, std::span<const Window> train,
                                 const HessianOptions& opts = {});

/// Bonferroni bounds mu-hat_k +/- z_{alpha/(2m)} sqrt(varsigma2_k/n +
/// sigma2_k) per horizon step k; sigma2 vector uses divisor n-1 over the n
/// training sequences.
IntervalReport intervals_multi_horizon(const NetworkSpec& spec, const ParamVector& params,
                                       const StructureMask& mask, const PreparedUq& prep,
                                       const std::vector<std::vector<double>>& test_inputs,
                                       double alpha);

IntervalReport intervals_multi_horizon(const NetworkSpec& spec, const ParamVector& params,
                                       const StructureMask& mask, std::span<const Window> train,
                                       const std::vector<std::vector<double>>& test_inputs,
                                       double alpha, const HessianOptions& opts = {});

/// Split-conformal intervals: per-horizon absolute-residual order statistic
/// at index ceil((n_cal + 1)(1 - alpha/m)). An index beyond n_cal yields
/// infinite-width entries with the degenerate flag set.
IntervalReport split_conformal_baseline(
    const std::vector<std::vector<double>>& calibration_predictions,
    const std::vector<std::vector<double>>& calibration_targets,
    const std::vector<double>& test_prediction, double alpha, std::size_t m);

/// CSV columns: point_index, center, lower, upper.
void write_interval_csv(const std::string& path, const IntervalReport& report);

/// JSON object {alpha, coverage, mean_width, sd_width, median_width,
/// iqr_width}; coverage is over the supplied targets (closed intervals).
std::string interval_summary_json(const IntervalReport& report,
                                  std::span<const double> targets);

}  // namespace parnn
