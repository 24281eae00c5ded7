#include "parnn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace parnn {

namespace {

constexpr double kLogTwoPi = 1.8378770664093453;

void clip_global_norm(std::vector<double>& grad, double max_norm) {
    if (max_norm <= 0.0) return;
    double ss = 0.0;
    for (double g : grad) ss += g * g;
    const double norm = std::sqrt(ss);
    if (norm > max_norm) {
        const double s = max_norm / norm;
        for (double& g : grad) g *= s;
    }
}

// Deterministic epoch-shuffled minibatch stream (sampling without
// replacement within each epoch).
class BatchSampler {
public:
    BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed)
        : order_(n), batch_size_(std::min(batch_size, n)), rng_(seed, "train/batches") {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        shuffle();
    }

    std::vector<std::size_t> next() {
        std::vector<std::size_t> batch;
        batch.reserve(batch_size_);
        for (std::size_t k = 0; k < batch_size_; ++k) {
            if (cursor_ == order_.size()) {
                shuffle();
                cursor_ = 0;
            }
            batch.push_back(order_[cursor_++]);
        }
        return batch;
    }

private:
    void shuffle() {
        for (std::size_t i = order_.size(); i > 1; --i)
            std::swap(order_[i - 1], order_[rng_.below(i)]);
    }

    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    std::size_t batch_size_;
    Rng rng_;
};

struct DataGrad {
    double loss;
    std::vector<double> grad;
};

// -(n/B) sum_batch log N(y | mu, 1) and its gradient, masked.
DataGrad data_loss_and_grad(const NetworkSpec& spec, const ParamVector& params,
                            const StructureMask& mask,
                            std::span<const Window* const> batch, std::size_t n_total) {
    ad::Tape tape;
    auto param_ids = register_params(tape, spec);
    ad::Tape::NodeId total = -1;
    std::size_t out_dim = spec.output_dim();
    for (const Window* w : batch) {
        if (w->target.size() != out_dim)
            throw std::invalid_argument("loss_and_grad: target dimension mismatch");
        auto outputs = build_window_graph(tape, spec, param_ids, w->inputs);
        auto res = tape.sub(outputs.back(), tape.constant(ad::Tensor::vector(w->target)));
        auto sq = tape.sum(tape.square(res));
        total = total < 0 ? sq : tape.add(total, sq);
    }
    const double scale = static_cast<double>(n_total) / (2.0 * static_cast<double>(batch.size()));
    tape.scale(total, scale);

    auto bindings = masked_bindings(spec, params, mask);
    DataGrad out;
    out.loss = tape.forward_eval(bindings) +
               static_cast<double>(n_total) * 0.5 * static_cast<double>(out_dim) * kLogTwoPi;
    out.grad = tape.backward_grad().values;
    zero_masked(out.grad, mask);
    return out;
}

}  // namespace

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate <= 0");
    if (!(momentum >= 0.0 && momentum < 1.0))
        throw std::invalid_argument("TrainConfig: momentum must be in [0,1)");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size < 1");
}

LossAndGrad loss_and_grad(const NetworkSpec& spec, const ParamVector& params,
                          const StructureMask& mask, std::span<const Window> batch,
                          std::size_t n_total, double eta, const MixturePrior& prior) {
    if (batch.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
    std::vector<const Window*> ptrs;
    ptrs.reserve(batch.size());
    for (const Window& w : batch) ptrs.push_back(&w);
    DataGrad dg = data_loss_and_grad(spec, params, mask, ptrs, n_total);

    LossAndGrad out;
    out.loss = dg.loss;
    out.grad = std::move(dg.grad);
    if (eta != 0.0) {
        out.loss -= eta * log_prior(params.values, prior);
        auto pg = grad_log_prior(params.values, prior);
        for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] -= eta * pg[i];
        zero_masked(out.grad, mask);
    }
    return out;
}

void sgd_momentum_step(ParamVector& params, std::span<const double> grad, OptimState& state,
                       const TrainConfig& cfg) {
    if (grad.size() != params.values.size() || state.velocity.size() != grad.size())
        throw std::invalid_argument("sgd_momentum_step: length mismatch");
    for (std::size_t i = 0; i < grad.size(); ++i) {
        state.velocity[i] = cfg.momentum * state.velocity[i] - cfg.learning_rate * grad[i];
        params.values[i] += state.velocity[i];
    }
    ++state.step;
}

void sghmc_step(ParamVector& params, std::span<const double> grad, OptimState& state,
                const TrainConfig& cfg, double temperature) {
    if (temperature < 0.0) throw std::invalid_argument("sghmc_step: negative temperature");
    if (temperature == 0.0) {
        sgd_momentum_step(params, grad, state, cfg);
        return;
    }
    if (grad.size() != params.values.size() || state.velocity.size() != grad.size())
        throw std::invalid_argument("sghmc_step: length mismatch");
    const double a = 1.0 - cfg.momentum;
    const double noise_sd = std::sqrt(2.0 * a * temperature * cfg.learning_rate);
    for (std::size_t i = 0; i < grad.size(); ++i) {
        state.velocity[i] = cfg.momentum * state.velocity[i] - cfg.learning_rate * grad[i] +
                            noise_sd * state.rng.normal();
        params.values[i] += state.velocity[i];
    }
    ++state.step;
}

TrainResult run_prior_annealing(const NetworkSpec& spec, ParamVector params,
                                std::span<const Window> data,
                                const MixturePrior& prior_template,
                                const AnnealSchedule& sched, const TrainConfig& cfg) {
    cfg.validate();
    prior_template.validate();
    sched.validate();
    const std::size_t n = data.size();
    if (n == 0) throw std::invalid_argument("run_prior_annealing: no training windows");

    ParamLayout layout(spec);
    if (params.values.size() != layout.size())
        throw std::invalid_argument("run_prior_annealing: bad parameter length");
    StructureMask full = StructureMask::ones(layout.size());
    OptimState state(layout.size(), cfg.seed);
    BatchSampler sampler(n, cfg.batch_size, cfg.seed);

    TrainResult result;
    ParamVector last_finite = params;
    for (std::size_t t = cfg.start_iteration; t < cfg.total_iterations; ++t) {
        const ScheduleState s = schedule_at(t, sched);
        const MixturePrior prior = prior_template.with_sigma0(s.sigma0_sq);

        auto idx = sampler.next();
        std::vector<Window> batch;
        batch.reserve(idx.size());
        for (std::size_t i : idx) batch.push_back(data[i]);

        const double eta = s.initial_phase ? 0.0 : s.eta;
        LossAndGrad lg = loss_and_grad(spec, params, full, batch, n, eta, prior);
        if (!std::isfinite(lg.loss)) throw DivergenceError(t, std::move(last_finite));
        last_finite = params;
        clip_global_norm(lg.grad, cfg.gradient_clip);

        if (s.initial_phase)
            sgd_momentum_step(params, lg.grad, state, cfg);
        else
            sghmc_step(params, lg.grad, state, cfg, s.temperature);
        if (std::any_of(params.values.begin(), params.values.end(),
                        [](double v) { return !std::isfinite(v); }))
            throw DivergenceError(t, std::move(last_finite));

        if (cfg.log_every > 0 && (t % cfg.log_every == 0 || t + 1 == cfg.total_iterations)) {
            result.log.push_back({t, s.initial_phase ? "initial" : "anneal", lg.loss, eta,
                                  s.sigma0_sq, s.initial_phase ? 0.0 : s.temperature});
        }
    }
    result.params = std::move(params);
    return result;
}

SparsifyResult sparsify(const ParamVector& params, const MixturePrior& prior_at_end) {
    const double thr = threshold(prior_at_end);
    SparsifyResult out;
    out.mask.bits.resize(params.values.size());
    std::size_t kept = 0;
    for (std::size_t i = 0; i < params.values.size(); ++i) {
        const bool keep = std::abs(params.values[i]) > thr;
        out.mask.bits[i] = keep ? 1 : 0;
        kept += keep ? 1 : 0;
    }
    out.kept_fraction =
        params.values.empty() ? 0.0
                              : static_cast<double>(kept) / static_cast<double>(params.values.size());
    return out;
}

TrainResult refine(const NetworkSpec& spec, ParamVector params, const StructureMask& mask,
                   std::span<const Window> data, const TrainConfig& cfg) {
    cfg.validate();
    const std::size_t n = data.size();
    if (n == 0) throw std::invalid_argument("refine: no training windows");
    ParamLayout layout(spec);
    if (params.values.size() != layout.size() || mask.bits.size() != layout.size())
        throw std::invalid_argument("refine: length mismatch");

    zero_masked(params.values, mask);
    const bool any_trainable =
        std::any_of(mask.bits.begin(), mask.bits.end(), [](std::uint8_t b) { return b != 0; });
    TrainResult result;
    if (!any_trainable) {
        result.params = std::move(params);
        return result;
    }

    OptimState state(layout.size(), derive_stream_seed(cfg.seed, "train/refine"));
    BatchSampler sampler(n, cfg.batch_size, derive_stream_seed(cfg.seed, "train/refine"));
    ParamVector last_finite = params;
    for (std::size_t t = 0; t < cfg.total_iterations; ++t) {
        auto idx = sampler.next();
        std::vector<Window> batch;
        batch.reserve(idx.size());
        for (std::size_t i : idx) batch.push_back(data[i]);

        MixturePrior unused{0.5, 1.0, 2.0};
        LossAndGrad lg = loss_and_grad(spec, params, mask, batch, n, 0.0, unused);
        if (!std::isfinite(lg.loss)) throw DivergenceError(t, std::move(last_finite));
        last_finite = params;
        clip_global_norm(lg.grad, cfg.gradient_clip);
        sgd_momentum_step(params, lg.grad, state, cfg);
        zero_masked(params.values, mask);  // keep pruned coordinates at exactly 0
        if (std::any_of(params.values.begin(), params.values.end(),
                        [](double v) { return !std::isfinite(v); }))
            throw DivergenceError(t, std::move(last_finite));

        if (cfg.log_every > 0 && (t % cfg.log_every == 0 || t + 1 == cfg.total_iterations)) {
            result.log.push_back({t, "refine", lg.loss, 0.0, 0.0, 0.0});
        }
    }
    result.params = std::move(params);
    return result;
}

ParamVector init_params(const NetworkSpec& spec, std::uint64_t seed) {
    ParamLayout layout(spec);
    Rng rng(seed, "train/init");
    ParamVector params;
    params.values.resize(layout.size());
    const std::size_t H = spec.depth();
    for (std::size_t h = 1; h <= H; ++h) {
        const std::size_t rows = spec.layer_widths[h];
        const std::size_t cols = spec.layer_widths[h - 1];
        const double bw = 1.0 / std::sqrt(static_cast<double>(cols));
        for (std::size_t i = 0; i < rows * cols; ++i)
            params.values[layout.w_offset(h) + i] = bw * (2.0 * rng.uniform01() - 1.0);
        if (layout.has_recurrent(h)) {
            const double bv = 1.0 / std::sqrt(static_cast<double>(rows));
            for (std::size_t i = 0; i < rows * rows; ++i)
                params.values[layout.v_offset(h) + i] = bv * (2.0 * rng.uniform01() - 1.0);
        }
        for (std::size_t i = 0; i < rows; ++i)
            params.values[layout.b_offset(h) + i] = bw * (2.0 * rng.uniform01() - 1.0);
    }
    return params;
}

}  // namespace parnn
