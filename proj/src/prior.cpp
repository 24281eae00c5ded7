#include "parnn/prior.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace parnn {

namespace {

constexpr double kLogTwoPi = 1.8378770664093453;

double log_normal_pdf(double x, double var) {
    return -0.5 * (kLogTwoPi + std::log(var) + x * x / var);
}

// log of [lambda N(b;0,s1) + (1-lambda) N(b;0,s0)] via log-sum-exp
double log_mixture(double b, const MixturePrior& p) {
    const double l1 = std::log(p.lambda_n) + log_normal_pdf(b, p.sigma1_sq);
    const double l0 = std::log1p(-p.lambda_n) + log_normal_pdf(b, p.sigma0_sq);
    const double m = std::max(l0, l1);
    return m + std::log(std::exp(l0 - m) + std::exp(l1 - m));
}

// responsibility of the wide component
double wide_responsibility(double b, const MixturePrior& p) {
    const double l1 = std::log(p.lambda_n) + log_normal_pdf(b, p.sigma1_sq);
    const double l0 = std::log1p(-p.lambda_n) + log_normal_pdf(b, p.sigma0_sq);
    // 1 / (1 + exp(l0 - l1))
    return 1.0 / (1.0 + std::exp(l0 - l1));
}

}  // namespace

void MixturePrior::validate() const {
    if (!(lambda_n > 0.0 && lambda_n < 1.0))
        throw std::invalid_argument("MixturePrior: lambda_n must be in (0,1)");
    if (!(sigma0_sq > 0.0))
        throw std::invalid_argument("MixturePrior: sigma0_sq must be positive");
    if (!(sigma1_sq > sigma0_sq))
        throw std::invalid_argument("MixturePrior: sigma1_sq must exceed sigma0_sq");
}

void AnnealSchedule::validate() const {
    if (!(T1 < T2 && T2 < T3))
        throw std::invalid_argument("AnnealSchedule: need T1 < T2 < T3");
    if (!(sigma0_end_sq > 0.0) || sigma0_init_sq < sigma0_end_sq)
        throw std::invalid_argument("AnnealSchedule: need sigma0_init_sq >= sigma0_end_sq > 0");
    if (!(temp_const > 0.0) || !(base_temperature > 0.0))
        throw std::invalid_argument("AnnealSchedule: temperature constants must be positive");
}

ScheduleState schedule_at(std::size_t t, const AnnealSchedule& sched) {
    sched.validate();
    ScheduleState s;
    s.initial_phase = t < sched.T1;
    if (t < sched.T1) {
        s.eta = 0.0;
        s.sigma0_sq = sched.sigma0_init_sq;
        s.temperature = sched.base_temperature;
    } else if (t <= sched.T2) {
        s.eta = static_cast<double>(t - sched.T1) / static_cast<double>(sched.T2 - sched.T1);
        s.sigma0_sq = sched.sigma0_init_sq;
        s.temperature = sched.base_temperature;
    } else if (t <= sched.T3) {
        s.eta = 1.0;
        const double u = static_cast<double>(t - sched.T2) / static_cast<double>(sched.T3 - sched.T2);
        s.sigma0_sq = (1.0 - u) * sched.sigma0_init_sq + u * sched.sigma0_end_sq;
        s.temperature = sched.base_temperature;
    } else {
        s.eta = 1.0;
        s.sigma0_sq = sched.sigma0_end_sq;
        s.temperature = sched.temp_const / static_cast<double>(t - sched.T3);
    }
    return s;
}

double log_prior(std::span<const double> beta, const MixturePrior& prior) {
    prior.validate();
    double total = 0.0;
    for (double b : beta) {
        if (!std::isfinite(b)) throw std::invalid_argument("log_prior: non-finite entry");
        total += log_mixture(b, prior);
    }
    return total;
}

std::vector<double> grad_log_prior(std::span<const double> beta, const MixturePrior& prior) {
    prior.validate();
    std::vector<double> grad(beta.size());
    for (std::size_t i = 0; i < beta.size(); ++i) {
        const double r = wide_responsibility(beta[i], prior);
        grad[i] = -beta[i] * (r / prior.sigma1_sq + (1.0 - r) / prior.sigma0_sq);
    }
    return grad;
}

double threshold(const MixturePrior& prior) {
    prior.validate();
    const double s0 = std::sqrt(prior.sigma0_sq);
    const double s1 = std::sqrt(prior.sigma1_sq);
    const double log_arg =
        std::log((1.0 - prior.lambda_n) / prior.lambda_n) + std::log(s1 / s0);
    if (!(log_arg > 0.0))
        throw std::domain_error("threshold: no real solution; (1-lambda) sigma1 <= lambda sigma0");
    return std::sqrt(2.0) * s0 * s1 / std::sqrt(prior.sigma1_sq - prior.sigma0_sq) *
           std::sqrt(log_arg);
}

double predicted_sparsity(std::span<const double> beta, const MixturePrior& prior) {
    const double thr = threshold(prior);
    if (beta.empty()) throw std::invalid_argument("predicted_sparsity: empty vector");
    std::size_t below = 0;
    for (double b : beta)
        if (std::abs(b) <= thr) ++below;
    return static_cast<double>(below) / static_cast<double>(beta.size());
}

CalibrationResult calibrate_sigma0_init(std::span<const double> beta,
                                        const MixturePrior& prior_template,
                                        double target_sparsity, double tol) {
    if (!(target_sparsity > 0.0 && target_sparsity < 1.0))
        throw std::invalid_argument("calibrate_sigma0_init: target must be in (0,1)");
    const double lo_sq = 1e-12;
    const double hi_sq = prior_template.sigma1_sq * (1.0 - 1e-6);

    auto sparsity_at = [&](double s0_sq) {
        return predicted_sparsity(beta, prior_template.with_sigma0(s0_sq));
    };

    // predicted sparsity is monotone nondecreasing in sigma0^2
    const double lo_val = sparsity_at(lo_sq);
    const double hi_val = sparsity_at(hi_sq);
    if (target_sparsity <= lo_val)
        return {lo_sq, lo_val, std::abs(lo_val - target_sparsity) > tol};
    if (target_sparsity >= hi_val)
        return {hi_sq, hi_val, std::abs(hi_val - target_sparsity) > tol};

    double lo = lo_sq, hi = hi_sq;
    double mid = 0.5 * (lo + hi);
    for (int iter = 0; iter < 200; ++iter) {
        mid = 0.5 * (lo + hi);
        const double s = sparsity_at(mid);
        if (std::abs(s - target_sparsity) <= tol) return {mid, s, false};
        if (s < target_sparsity)
            lo = mid;
        else
            hi = mid;
    }
    const double s = sparsity_at(mid);
    return {mid, s, std::abs(s - target_sparsity) > tol};
}

}  // namespace parnn
