#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "parnn/model.hpp"
#include "parnn/prior.hpp"
#include "parnn/rng.hpp"

namespace parnn {

struct TrainConfig {
    double learning_rate = 1e-3;
    double momentum = 0.9;  // friction a = 1 - momentum
    std::size_t batch_size = 32;
    std::size_t total_iterations = 1000;
    std::size_t start_iteration = 0;  // resume the schedule mid-way (e.g. after T1)
    std::uint64_t seed = 0;
    double gradient_clip = 0.0;  // global-norm clip; 0 disables
    std::size_t log_every = 100;

    void validate() const;
};

/// Momentum buffer plus the noise stream for the sampler.
struct OptimState {
    std::vector<double> velocity;
    std::size_t step = 0;
    Rng rng;

    OptimState(std::size_t dim, std::uint64_t seed)
        : velocity(dim, 0.0), rng(seed, "train/sghmc_noise") {}
};

struct LossAndGrad {
    double loss;  // energy U = -n * l_hat - eta * log prior
    std::vector<double> grad;
};

struct DivergenceError : std::runtime_error {
    DivergenceError(std::size_t iteration, ParamVector last_params)
        : std::runtime_error("training diverged at iteration " + std::to_string(iteration)),
          iteration(iteration),
          last_params(std::move(last_params)) {}
    std::size_t iteration;
    ParamVector last_params;
};

/// Energy of the annealed target: U = -(n/B) sum_batch log N(y | mu, 1)
/// - eta * log prior, with the gradient taken over mask-1 coordinates.
/// eta = 0 switches the prior term off entirely.
LossAndGrad loss_and_grad(const NetworkSpec& spec, const ParamVector& params,
                          const StructureMask& mask, std::span<const Window> batch,
                          std::size_t n_total, double eta, const MixturePrior& prior);

/// v <- momentum * v - lr * grad; beta <- beta + v.
void sgd_momentum_step(ParamVector& params, std::span<const double> grad, OptimState& state,
                       const TrainConfig& cfg);

/// With friction a = 1 - momentum:
/// v <- (1-a) v - lr * grad + N(0, 2 a T lr I); beta <- beta + v.
/// At temperature 0 the trajectory is bit-identical to sgd_momentum_step.
void sghmc_step(ParamVector& params, std::span<const double> grad, OptimState& state,
                const TrainConfig& cfg, double temperature);

struct TrainLogEntry {
    std::size_t iter;
    std::string phase;
    double loss;
    double eta;
    double sigma0_sq;
    double temperature;
};

struct TrainResult {
    ParamVector params;
    std::vector<TrainLogEntry> log;
};

/// Initial training (momentum SGD, no prior) for t < T1, then annealed
/// sampling with the schedule's (eta, sigma0^2, temperature). Non-finite loss
/// raises DivergenceError carrying the last finite parameters.
TrainResult run_prior_annealing(const NetworkSpec& spec, ParamVector params,
                                std::span<const Window> data, const MixturePrior& prior_template,
                                const AnnealSchedule& sched, const TrainConfig& cfg);

struct SparsifyResult {
    StructureMask mask;
    double kept_fraction;
};

/// Mask bit 1 iff |beta_i| strictly exceeds the prior threshold.
SparsifyResult sparsify(const ParamVector& params, const MixturePrior& prior_at_end);

/// Maximizes the data likelihood over mask-1 coordinates only; masked
/// coordinates are pinned at exactly 0.
TrainResult refine(const NetworkSpec& spec, ParamVector params, const StructureMask& mask,
                   std::span<const Window> data, const TrainConfig& cfg);

/// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per layer.
ParamVector init_params(const NetworkSpec& spec, std::uint64_t seed);

}  // namespace parnn
