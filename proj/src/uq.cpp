#include "parnn/uq.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "json.hpp"

namespace parnn {

namespace {

// Quadratic data loss (1 / (2 sigma2 n)) sum_i ||y_i - mu_i||^2 on one tape;
// equal to -l_n up to an additive constant, so its Hessian is -grad^2 l_n.
ad::Tape build_likelihood_tape(const NetworkSpec& spec, std::span<const Window> train,
                               double sigma2) {
    ad::Tape tape;
    auto param_ids = register_params(tape, spec);
    ad::Tape::NodeId total = -1;
    for (const Window& w : train) {
        auto outputs = build_window_graph(tape, spec, param_ids, w.inputs);
        auto res = tape.sub(outputs.back(), tape.constant(ad::Tensor::vector(w.target)));
        auto sq = tape.sum(tape.square(res));
        total = total < 0 ? sq : tape.add(total, sq);
    }
    tape.scale(total, 1.0 / (2.0 * sigma2 * static_cast<double>(train.size())));
    return tape;
}

std::vector<double> masked_flat(const ParamVector& params, const StructureMask& mask) {
    std::vector<double> flat = params.values;
    zero_masked(flat, mask);
    return flat;
}

std::vector<std::size_t> active_indices(const StructureMask& mask) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < mask.bits.size(); ++i)
        if (mask.bits[i]) idx.push_back(i);
    return idx;
}

// Gradient of the tape terminal at flat, restricted to the active set.
std::vector<double> restricted_grad(ad::Tape& tape, std::span<const double> flat,
                                    const std::vector<std::size_t>& active) {
    tape.forward_eval_flat(flat);
    auto full = tape.backward_grad().values;
    std::vector<double> g(active.size());
    for (std::size_t k = 0; k < active.size(); ++k) g[k] = full[active[k]];
    return g;
}

// Gradient of output component `component` of the network at the test window,
// restricted to the active set.
std::vector<double> prediction_grad(const NetworkSpec& spec, std::span<const double> flat,
                                    const std::vector<std::size_t>& active,
                                    const std::vector<std::vector<double>>& test_inputs,
                                    std::size_t component) {
    ad::Tape tape;
    auto param_ids = register_params(tape, spec);
    auto outputs = build_window_graph(tape, spec, param_ids, test_inputs);
    tape.pick(outputs.back(), component);
    return restricted_grad(tape, flat, active);
}

double sample_sd(std::span<const double> x) {
    if (x.size() < 2) return 0.0;
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

// Linear-interpolation quantile of a sorted sample (R type 7).
double sorted_quantile(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) return 0.0;
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = static_cast<std::size_t>(std::ceil(pos));
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

IntervalEntry make_entry(double center, double varsigma2, double half_width) {
    return {center, center - half_width, center + half_width, varsigma2};
}

}  // namespace

double HessianBlock::quadratic_form(std::span<const double> g_active) const {
    if (g_active.size() != dim())
        throw std::invalid_argument("HessianBlock: gradient dimension mismatch");
    CholeskyFactor chol(matrix, dim());
    auto sol = chol.solve(g_active);
    double q = 0.0;
    for (std::size_t i = 0; i < sol.size(); ++i) q += g_active[i] * sol[i];
    return q;
}

double estimate_sigma2(const NetworkSpec& spec, const ParamVector& params,
                       const StructureMask& mask, std::span<const Window> train) {
    if (train.size() < 2) throw std::invalid_argument("estimate_sigma2: need >= 2 targets");
    double ss = 0.0;
    for (const Window& w : train) {
        auto mu = predict(spec, params, mask, w.inputs);
        for (std::size_t k = 0; k < mu.size(); ++k) {
            const double r = w.target[k] - mu[k];
            ss += r * r;
        }
    }
    return ss / static_cast<double>(train.size() - 1);
}

HessianBlock neg_hessian(const NetworkSpec& spec, const ParamVector& params,
                         const StructureMask& mask, std::span<const Window> train,
                         double sigma2, const HessianOptions& opts) {
    if (!(sigma2 > 0.0)) throw std::invalid_argument("neg_hessian: sigma2 must be positive");
    if (train.empty()) throw std::invalid_argument("neg_hessian: empty training set");
    HessianBlock block;
    block.active = active_indices(mask);
    const std::size_t k = block.active.size();
    if (k == 0) throw std::invalid_argument("neg_hessian: empty mask");

    ad::Tape tape = build_likelihood_tape(spec, train, sigma2);
    auto flat = masked_flat(params, mask);
    block.matrix.assign(k * k, 0.0);
    const double h = opts.fd_step;
    std::vector<double> work = flat;
    for (std::size_t j = 0; j < k; ++j) {
        const std::size_t gj = block.active[j];
        work[gj] = flat[gj] + h;
        auto gp = restricted_grad(tape, work, block.active);
        work[gj] = flat[gj] - h;
        auto gm = restricted_grad(tape, work, block.active);
        work[gj] = flat[gj];
        for (std::size_t i = 0; i < k; ++i)
            block.matrix[i * k + j] = (gp[i] - gm[i]) / (2.0 * h);
    }
    // symmetrize
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j) {
            const double avg = 0.5 * (block.matrix[i * k + j] + block.matrix[j * k + i]);
            block.matrix[i * k + j] = avg;
            block.matrix[j * k + i] = avg;
        }

    if (CholeskyFactor::try_factor(block.matrix, k)) return block;
    for (double eps = opts.jitter_start; eps <= opts.jitter_max * (1.0 + 1e-12); eps *= 10.0) {
        std::vector<double> jittered = block.matrix;
        for (std::size_t i = 0; i < k; ++i) jittered[i * k + i] += eps;
        if (CholeskyFactor::try_factor(jittered, k)) {
            block.matrix = std::move(jittered);
            block.jitter = eps;
            return block;
        }
    }
    throw SingularHessianError(opts.jitter_max);
}

PreparedUq prepare_one_step(const NetworkSpec& spec, const ParamVector& params,
                            const StructureMask& mask, std::span<const Window> train,
                            const HessianOptions& opts) {
    PreparedUq prep;
    prep.sigma2 = estimate_sigma2(spec, params, mask, train);
    prep.sigma2_vec = {prep.sigma2};
    prep.hessian = neg_hessian(spec, params, mask, train,
                               prep.sigma2 > 0.0 ? prep.sigma2 : 1.0, opts);
    prep.n_train = train.size();
    return prep;
}

IntervalEntry interval_one_step(const NetworkSpec& spec, const ParamVector& params,
                                const StructureMask& mask, const PreparedUq& prep,
                                const std::vector<std::vector<double>>& test_inputs,
                                double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("interval_one_step: alpha must be in (0,1)");
    auto flat = masked_flat(params, mask);
    auto mu = predict(spec, params, mask, test_inputs);
    auto g = prediction_grad(spec, flat, prep.hessian.active, test_inputs, 0);
    const double varsigma2 = prep.hessian.quadratic_form(g);
    const double z = normal_quantile(1.0 - alpha / 2.0);
    const double half =
        z * std::sqrt(varsigma2 / static_cast<double>(prep.n_train) + prep.sigma2);
    return make_entry(mu[0], varsigma2, half);
}

IntervalEntry interval_one_step(const NetworkSpec& spec, const ParamVector& params,
                                const StructureMask& mask, std::span<const Window> train,
                                const std::vector<std::vector<double>>& test_inputs,
                                double alpha, const HessianOptions& opts) {
    auto prep = prepare_one_step(spec, params, mask, train, opts);
    return interval_one_step(spec, params, mask, prep, test_inputs, alpha);
}

PreparedUq prepare_multi_horizon(const NetworkSpec& spec, const ParamVector& params,
                                 const StructureMask& mask, std::span<const Window> train,
                                 const HessianOptions& opts) {
    if (train.size() < 2)
        throw std::invalid_argument("prepare_multi_horizon: need >= 2 training sequences");
    const std::size_t m = spec.output_dim();
    PreparedUq prep;
    prep.n_train = train.size();
    prep.sigma2_vec.assign(m, 0.0);
    for (const Window& w : train) {
        auto mu = predict(spec, params, mask, w.inputs);
        for (std::size_t k = 0; k < m; ++k) {
            const double r = w.target[k] - mu[k];
            prep.sigma2_vec[k] += r * r;
        }
    }
    for (double& v : prep.sigma2_vec) v /= static_cast<double>(train.size() - 1);
    prep.sigma2 = 0.0;
    for (double v : prep.sigma2_vec) prep.sigma2 += v;
    prep.sigma2 /= static_cast<double>(m);
    prep.hessian = neg_hessian(spec, params, mask, train,
                               prep.sigma2 > 0.0 ? prep.sigma2 : 1.0, opts);
    return prep;
}

IntervalReport intervals_multi_horizon(const NetworkSpec& spec, const ParamVector& params,
                                       const StructureMask& mask, const PreparedUq& prep,
                                       const std::vector<std::vector<double>>& test_inputs,
                                       double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("intervals_multi_horizon: alpha must be in (0,1)");
    const std::size_t m = spec.output_dim();
    auto flat = masked_flat(params, mask);
    auto mu = predict(spec, params, mask, test_inputs);
    const double z = normal_quantile(1.0 - alpha / (2.0 * static_cast<double>(m)));

    IntervalReport report;
    report.alpha = alpha;
    report.sigma2_hat = prep.sigma2_vec;
    for (std::size_t k = 0; k < m; ++k) {
        auto g = prediction_grad(spec, flat, prep.hessian.active, test_inputs, k);
        const double varsigma2 = prep.hessian.quadratic_form(g);
        const double half =
            z * std::sqrt(varsigma2 / static_cast<double>(prep.n_train) + prep.sigma2_vec[k]);
        report.entries.push_back(make_entry(mu[k], varsigma2, half));
    }
    return report;
}

IntervalReport intervals_multi_horizon(const NetworkSpec& spec, const ParamVector& params,
                                       const StructureMask& mask, std::span<const Window> train,
                                       const std::vector<std::vector<double>>& test_inputs,
                                       double alpha, const HessianOptions& opts) {
    auto prep = prepare_multi_horizon(spec, params, mask, train, opts);
    return intervals_multi_horizon(spec, params, mask, prep, test_inputs, alpha);
}

IntervalReport split_conformal_baseline(
    const std::vector<std::vector<double>>& calibration_predictions,
    const std::vector<std::vector<double>>& calibration_targets,
    const std::vector<double>& test_prediction, double alpha, std::size_t m) {
    if (calibration_predictions.empty())
        throw std::invalid_argument("split_conformal_baseline: empty calibration set");
    if (calibration_predictions.size() != calibration_targets.size())
        throw std::invalid_argument("split_conformal_baseline: calibration size mismatch");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("split_conformal_baseline: alpha must be in (0,1)");
    if (m < 1 || test_prediction.size() != m)
        throw std::invalid_argument("split_conformal_baseline: bad horizon");

    const std::size_t n_cal = calibration_predictions.size();
    const auto index = static_cast<std::size_t>(std::ceil(
        static_cast<double>(n_cal + 1) * (1.0 - alpha / static_cast<double>(m))));

    IntervalReport report;
    report.alpha = alpha;
    for (std::size_t k = 0; k < m; ++k) {
        double half;
        if (index > n_cal) {
            half = std::numeric_limits<double>::infinity();
            report.degenerate = true;
        } else {
            std::vector<double> residuals(n_cal);
            for (std::size_t i = 0; i < n_cal; ++i) {
                if (calibration_predictions[i].size() != m || calibration_targets[i].size() != m)
                    throw std::invalid_argument("split_conformal_baseline: ragged calibration row");
                residuals[i] =
                    std::abs(calibration_targets[i][k] - calibration_predictions[i][k]);
            }
            std::sort(residuals.begin(), residuals.end());
            half = residuals[index - 1];  // order statistic, 1-based index
        }
        report.entries.push_back(make_entry(test_prediction[k], 0.0, half));
    }
    return report;
}

void write_interval_csv(const std::string& path, const IntervalReport& report) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_interval_csv: cannot open " + path);
    out << "point_index,center,lower,upper\n";
    char buf[64];
    for (std::size_t i = 0; i < report.entries.size(); ++i) {
        const auto& e = report.entries[i];
        out << i;
        for (double v : {e.center, e.lower, e.upper}) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out << "," << buf;
        }
        out << "\n";
    }
}

std::string interval_summary_json(const IntervalReport& report,
                                  std::span<const double> targets) {
    if (targets.size() != report.entries.size())
        throw std::invalid_argument("interval_summary_json: target count mismatch");
    std::size_t covered = 0;
    std::vector<double> widths;
    widths.reserve(report.entries.size());
    for (std::size_t i = 0; i < report.entries.size(); ++i) {
        const auto& e = report.entries[i];
        if (targets[i] >= e.lower && targets[i] <= e.upper) ++covered;
        widths.push_back(e.upper - e.lower);
    }
    double mean = 0.0;
    for (double w : widths) mean += w;
    if (!widths.empty()) mean /= static_cast<double>(widths.size());
    std::vector<double> sorted = widths;
    std::sort(sorted.begin(), sorted.end());

    nlohmann::json j;
    j["alpha"] = report.alpha;
    j["coverage"] = report.entries.empty()
                        ? 0.0
                        : static_cast<double>(covered) / static_cast<double>(report.entries.size());
    j["mean_width"] = mean;
    j["sd_width"] = sample_sd(widths);
    j["median_width"] = sorted_quantile(sorted, 0.5);
    j["iqr_width"] = sorted_quantile(sorted, 0.75) - sorted_quantile(sorted, 0.25);
    return j.dump(2);
}

}  // namespace parnn
