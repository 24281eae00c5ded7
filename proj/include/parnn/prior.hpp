#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace parnn {

/// Two-component mixture Gaussian prior: a wide slab with weight lambda_n and
/// a narrow spike with weight 1 - lambda_n, both centered at zero.
struct MixturePrior {
    double lambda_n;
    double sigma0_sq;
    double sigma1_sq;

    void validate() const;
    MixturePrior with_sigma0(double s0_sq) const { return {lambda_n, s0_sq, sigma1_sq}; }
};

/// Phase layout of the annealing run. Iterations t < T1 are plain initial
/// training; T1..T2 ramp the prior weight eta from 0 to 1; T2..T3 shrink
/// sigma0^2 linearly from the init to the end value; past T3 the temperature
/// cools as temp_const / (t - T3).
struct AnnealSchedule {
    std::size_t T1, T2, T3;
    double sigma0_init_sq;
    double sigma0_end_sq;
    double temp_const;
    double base_temperature;

    void validate() const;
};

struct ScheduleState {
    bool initial_phase;  // t < T1: prior not applied
    double eta;
    double sigma0_sq;
    double temperature;
};

ScheduleState schedule_at(std::size_t t, const AnnealSchedule& sched);

/// Sum over entries of log[lambda N(b;0,s1^2) + (1-lambda) N(b;0,s0^2)],
/// evaluated in log space.
double log_prior(std::span<const double> beta, const MixturePrior& prior);

/// d/db_j of log_prior: -b_j [ r_j / s1^2 + (1 - r_j) / s0^2 ] with r_j the
/// responsibility of the wide component, computed in log space.
std::vector<double> grad_log_prior(std::span<const double> beta, const MixturePrior& prior);

/// |beta| at which the two component responsibilities cross 0.5; weights
/// strictly above it are kept. Throws std::domain_error when the log argument
/// is not > 1 and no real threshold exists.
double threshold(const MixturePrior& prior);

/// Fraction of entries with |b_j| <= threshold(prior).
double predicted_sparsity(std::span<const double> beta, const MixturePrior& prior);

struct CalibrationResult {
    double sigma0_init_sq;
    double achieved_sparsity;
    bool at_endpoint;  // target unreachable; closest endpoint returned
};

/// Bisection on sigma0_init^2 so that the predicted sparsity of beta matches
/// the target within tol.
CalibrationResult calibrate_sigma0_init(std::span<const double> beta,
                                        const MixturePrior& prior_template,
                                        double target_sparsity, double tol);

}  // namespace parnn
