#include "parnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace parnn {

namespace {

double activate(Activation a, double x) {
    switch (a) {
        case Activation::Tanh: return std::tanh(x);
        case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
        case Activation::Relu: return x > 0.0 ? x : 0.0;
    }
    return 0.0;
}

bool bounded(Activation a) { return a == Activation::Tanh || a == Activation::Sigmoid; }

}  // namespace

std::string to_string(NetKind k) { return k == NetKind::MLP ? "mlp" : "elman_rnn"; }

std::string to_string(Activation a) {
    switch (a) {
        case Activation::Tanh: return "tanh";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Relu: return "relu";
    }
    return "?";
}

NetKind net_kind_from_string(const std::string& s) {
    if (s == "mlp") return NetKind::MLP;
    if (s == "elman_rnn") return NetKind::ElmanRNN;
    throw std::invalid_argument("unknown network kind: " + s);
}

Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "relu") return Activation::Relu;
    throw std::invalid_argument("unknown activation: " + s);
}

void NetworkSpec::validate() const {
    if (layer_widths.size() < 2)
        throw std::invalid_argument("NetworkSpec: need at least input and output widths");
    for (std::size_t w : layer_widths)
        if (w < 1) throw std::invalid_argument("NetworkSpec: all widths must be >= 1");
    if (activations.size() != layer_widths.size() - 2)
        throw std::invalid_argument("NetworkSpec: need one activation per hidden layer");
    if (exo_dim >= input_dim())
        throw std::invalid_argument("NetworkSpec: exo_dim must leave at least one lag column");
    if (kind == NetKind::ElmanRNN && !activations.empty() && !bounded(activations[0]))
        throw std::invalid_argument(
            "NetworkSpec: recurrent nets require a bounded first hidden activation");
}

ParamLayout::ParamLayout(const NetworkSpec& spec) : spec_(spec) {
    spec_.validate();
    const std::size_t H = spec_.depth();
    w_offset_.resize(H);
    v_offset_.resize(H);
    b_offset_.resize(H);
    std::size_t off = 0;
    for (std::size_t h = 1; h <= H; ++h) {
        const std::size_t rows = spec_.layer_widths[h];
        const std::size_t cols = spec_.layer_widths[h - 1];
        w_offset_[h - 1] = off;
        off += rows * cols;
        if (has_recurrent(h)) {
            v_offset_[h - 1] = off;
            off += rows * rows;
        } else {
            v_offset_[h - 1] = static_cast<std::size_t>(-1);
        }
        b_offset_[h - 1] = off;
        off += rows;
    }
    total_ = off;
}

bool ParamLayout::has_recurrent(std::size_t h) const {
    return spec_.kind == NetKind::ElmanRNN && h < spec_.layer_widths.size() - 1;
}

std::size_t ParamLayout::v_offset(std::size_t h) const {
    if (!has_recurrent(h))
        throw std::invalid_argument("ParamLayout: layer has no recurrent weights");
    return v_offset_[h - 1];
}

ParamIndexEntry ParamLayout::entry(std::size_t index) const {
    if (index >= total_) throw std::out_of_range("ParamLayout: index out of range");
    const std::size_t H = spec_.depth();
    for (std::size_t h = 1; h <= H; ++h) {
        const std::size_t rows = spec_.layer_widths[h];
        const std::size_t cols = spec_.layer_widths[h - 1];
        std::size_t off = w_offset_[h - 1];
        if (index < off + rows * cols) {
            const std::size_t local = index - off;
            return {h, ParamKind::InputWeight, local / cols, local % cols};
        }
        if (has_recurrent(h)) {
            off = v_offset_[h - 1];
            if (index < off + rows * rows) {
                const std::size_t local = index - off;
                return {h, ParamKind::RecurrentWeight, local / rows, local % rows};
            }
        }
        off = b_offset_[h - 1];
        if (index < off + rows) {
            return {h, ParamKind::Bias, index - off, 0};
        }
    }
    throw std::logic_error("ParamLayout: unreachable");
}

namespace {

struct AssembledNet {
    // masked copies of w^h, v^h, b^h per layer (1-based index h-1)
    std::vector<std::vector<double>> w, v, b;
};

AssembledNet assemble(const ParamLayout& layout, const ParamVector& params,
                      const StructureMask& mask) {
    if (params.values.size() != layout.size())
        throw std::invalid_argument("params length does not match network spec");
    if (mask.bits.size() != layout.size())
        throw std::invalid_argument("mask length does not match network spec");
    const NetworkSpec& spec = layout.spec();
    const std::size_t H = spec.depth();
    AssembledNet net;
    net.w.resize(H);
    net.v.resize(H);
    net.b.resize(H);
    auto masked_copy = [&](std::size_t off, std::size_t count) {
        std::vector<double> out(count);
        for (std::size_t i = 0; i < count; ++i)
            out[i] = mask.bits[off + i] ? params.values[off + i] : 0.0;
        return out;
    };
    for (std::size_t h = 1; h <= H; ++h) {
        const std::size_t rows = spec.layer_widths[h];
        const std::size_t cols = spec.layer_widths[h - 1];
        net.w[h - 1] = masked_copy(layout.w_offset(h), rows * cols);
        if (layout.has_recurrent(h)) net.v[h - 1] = masked_copy(layout.v_offset(h), rows * rows);
        net.b[h - 1] = masked_copy(layout.b_offset(h), rows);
    }
    return net;
}

void matvec_into(const std::vector<double>& m, const std::vector<double>& x,
                 std::vector<double>& out) {
    const std::size_t rows = out.size(), cols = x.size();
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        const double* row = m.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
        out[r] = acc;
    }
}

// Forward over a window; if layer_sums is non-null, records per-layer sums of
// absolute outputs at the final step.
ForwardResult forward_impl(const NetworkSpec& spec, const AssembledNet& net,
                           const std::vector<std::vector<double>>& window,
                           std::vector<double>* layer_sums) {
    const std::size_t H = spec.depth();
    const bool recurrent = spec.kind == NetKind::ElmanRNN;
    if (window.empty()) throw std::invalid_argument("forward: empty window");
    if (recurrent && window.size() < spec.warmup + 1)
        throw std::invalid_argument("forward: window shorter than warmup + 1");
    for (const auto& x : window)
        if (x.size() != spec.input_dim())
            throw std::invalid_argument("forward: input vector has wrong dimension");

    std::vector<std::vector<double>> state(H - 1), next(H - 1);
    for (std::size_t h = 1; h < H; ++h) {
        state[h - 1].assign(spec.layer_widths[h], 0.0);
        next[h - 1].assign(spec.layer_widths[h], 0.0);
    }

    ForwardResult result;
    result.first_usable = recurrent ? spec.warmup : 0;
    result.outputs.reserve(window.size());
    std::vector<double> pre;
    for (std::size_t step = 0; step < window.size(); ++step) {
        const std::vector<double>* below = &window[step];
        for (std::size_t h = 1; h < H; ++h) {
            auto& z = next[h - 1];
            pre.assign(z.size(), 0.0);
            matvec_into(net.w[h - 1], *below, pre);
            if (recurrent) {
                const auto& prev = state[h - 1];
                const std::size_t rows = z.size();
                const double* vm = net.v[h - 1].data();
                for (std::size_t r = 0; r < rows; ++r) {
                    double acc = 0.0;
                    const double* row = vm + r * rows;
                    for (std::size_t c = 0; c < rows; ++c) acc += row[c] * prev[c];
                    pre[r] += acc;
                }
            }
            const Activation act = spec.activations[h - 1];
            for (std::size_t r = 0; r < z.size(); ++r)
                z[r] = activate(act, pre[r] + net.b[h - 1][r]);
            below = &z;
        }
        std::vector<double> out(spec.output_dim());
        matvec_into(net.w[H - 1], *below, out);
        for (std::size_t r = 0; r < out.size(); ++r) out[r] += net.b[H - 1][r];
        if (layer_sums && step + 1 == window.size()) {
            layer_sums->clear();
            for (std::size_t h = 1; h < H; ++h) {
                double s = 0.0;
                for (double v : next[h - 1]) s += std::abs(v);
                layer_sums->push_back(s);
            }
            double s = 0.0;
            for (double v : out) s += std::abs(v);
            layer_sums->push_back(s);
        }
        result.outputs.push_back(std::move(out));
        std::swap(state, next);
    }
    return result;
}

}  // namespace

ForwardResult rnn_forward(const NetworkSpec& spec, const ParamVector& params,
                          const StructureMask& mask,
                          const std::vector<std::vector<double>>& window) {
    if (spec.kind != NetKind::ElmanRNN)
        throw std::invalid_argument("rnn_forward: spec is not a recurrent net");
    ParamLayout layout(spec);
    return forward_impl(spec, assemble(layout, params, mask), window, nullptr);
}

std::vector<double> mlp_forward(const NetworkSpec& spec, const ParamVector& params,
                                const StructureMask& mask,
                                const std::vector<double>& input) {
    if (spec.kind != NetKind::MLP)
        throw std::invalid_argument("mlp_forward: spec is not an MLP");
    ParamLayout layout(spec);
    auto result = forward_impl(spec, assemble(layout, params, mask), {input}, nullptr);
    return result.outputs[0];
}

std::vector<double> predict(const NetworkSpec& spec, const ParamVector& params,
                            const StructureMask& mask,
                            const std::vector<std::vector<double>>& window) {
    ParamLayout layout(spec);
    auto result = forward_impl(spec, assemble(layout, params, mask), window, nullptr);
    return result.outputs.back();
}

std::size_t count_hidden_links(const StructureMask& mask, const NetworkSpec& spec) {
    if (spec.kind != NetKind::ElmanRNN)
        throw std::invalid_argument("count_hidden_links: not a recurrent net");
    ParamLayout layout(spec);
    if (mask.bits.size() != layout.size())
        throw std::invalid_argument("count_hidden_links: mask length mismatch");
    std::size_t count = 0;
    for (std::size_t h = 1; h <= spec.depth(); ++h) {
        if (!layout.has_recurrent(h)) continue;
        const std::size_t off = layout.v_offset(h);
        const std::size_t n = spec.layer_widths[h] * spec.layer_widths[h];
        for (std::size_t i = 0; i < n; ++i) count += mask.bits[off + i] ? 1 : 0;
    }
    return count;
}

std::set<std::size_t> selected_input_lags(const StructureMask& mask, const NetworkSpec& spec) {
    ParamLayout layout(spec);
    if (mask.bits.size() != layout.size())
        throw std::invalid_argument("selected_input_lags: mask length mismatch");
    std::set<std::size_t> lags;
    const std::size_t rows = spec.layer_widths[1];
    const std::size_t cols = spec.layer_widths[0];
    const std::size_t off = layout.w_offset(1);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < spec.lag_count(); ++c)
            if (mask.bits[off + r * cols + c]) lags.insert(c + 1);
    return lags;
}

std::vector<LayerBound> lemma_output_bound(const NetworkSpec& spec, const ParamVector& params,
                                           const StructureMask& mask,
                                           const std::vector<std::vector<double>>& window) {
    ParamLayout layout(spec);
    AssembledNet net = assemble(layout, params, mask);
    std::vector<double> sums;
    forward_impl(spec, net, window, &sums);

    const std::size_t H = spec.depth();
    const double t = static_cast<double>(window.size());

    double max_abs = 0.0;
    for (std::size_t i = 0; i < params.values.size(); ++i)
        if (mask.bits[i]) max_abs = std::max(max_abs, std::abs(params.values[i]));
    // the bound's induction needs the weight cap and recurrent counts >= 1
    const double e_n = std::max(max_abs, 1.0);

    std::vector<double> rw(H), rv(H, 1.0);
    for (std::size_t h = 1; h <= H; ++h) {
        std::size_t cw = 0;
        const std::size_t nw = spec.layer_widths[h] * spec.layer_widths[h - 1];
        for (std::size_t i = 0; i < nw; ++i) cw += mask.bits[layout.w_offset(h) + i] ? 1 : 0;
        for (std::size_t i = 0; i < spec.layer_widths[h]; ++i)
            cw += mask.bits[layout.b_offset(h) + i] ? 1 : 0;
        rw[h - 1] = static_cast<double>(cw);
        if (layout.has_recurrent(h)) {
            std::size_t cv = 0;
            const std::size_t nv = spec.layer_widths[h] * spec.layer_widths[h];
            for (std::size_t i = 0; i < nv; ++i) cv += mask.bits[layout.v_offset(h) + i] ? 1 : 0;
            rv[h - 1] = std::max<double>(1.0, static_cast<double>(cv));
        }
    }

    std::vector<LayerBound> result(H);
    double prod_w = 1.0, prod_v = 1.0;
    for (std::size_t i = 1; i <= H; ++i) {
        prod_w *= rw[i - 1];
        double bound;
        if (i < H) {
            prod_v *= rv[i - 1];
            bound = std::pow(t, static_cast<double>(i)) * prod_w * std::pow(prod_v, t - 1.0) *
                    std::pow(e_n, t * static_cast<double>(i));
        } else {
            bound = std::pow(t, static_cast<double>(H)) * prod_w * std::pow(prod_v, t - 1.0) *
                    std::pow(e_n, t * static_cast<double>(H - 1) + 1.0);
        }
        result[i - 1] = {sums[i - 1], bound};
    }
    return result;
}

std::vector<ad::Tensor> masked_bindings(const NetworkSpec& spec, const ParamVector& params,
                                        const StructureMask& mask) {
    ParamLayout layout(spec);
    AssembledNet net = assemble(layout, params, mask);
    std::vector<ad::Tensor> out;
    const std::size_t H = spec.depth();
    for (std::size_t h = 1; h <= H; ++h) {
        const std::size_t rows = spec.layer_widths[h];
        const std::size_t cols = spec.layer_widths[h - 1];
        out.push_back(ad::Tensor::matrix(rows, cols, std::move(net.w[h - 1])));
        if (layout.has_recurrent(h))
            out.push_back(ad::Tensor::matrix(rows, rows, std::move(net.v[h - 1])));
        out.push_back(ad::Tensor::vector(std::move(net.b[h - 1])));
    }
    return out;
}

std::vector<ad::Tape::NodeId> register_params(ad::Tape& tape, const NetworkSpec& spec) {
    ParamLayout layout(spec);
    std::vector<ad::Tape::NodeId> ids;
    const std::size_t H = spec.depth();
    for (std::size_t h = 1; h <= H; ++h) {
        const std::size_t rows = spec.layer_widths[h];
        const std::size_t cols = spec.layer_widths[h - 1];
        ids.push_back(tape.param({rows, cols}));
        if (layout.has_recurrent(h)) ids.push_back(tape.param({rows, rows}));
        ids.push_back(tape.param({rows}));
    }
    return ids;
}

std::vector<ad::Tape::NodeId> build_window_graph(ad::Tape& tape, const NetworkSpec& spec,
                                                 const std::vector<ad::Tape::NodeId>& param_ids,
                                                 const std::vector<std::vector<double>>& window) {
    const std::size_t H = spec.depth();
    const bool recurrent = spec.kind == NetKind::ElmanRNN;
    ParamLayout layout(spec);

    // slot index per layer: (w, [v], b)
    std::vector<ad::Tape::NodeId> w_id(H), v_id(H, -1), b_id(H);
    std::size_t s = 0;
    for (std::size_t h = 1; h <= H; ++h) {
        w_id[h - 1] = param_ids.at(s++);
        if (layout.has_recurrent(h)) v_id[h - 1] = param_ids.at(s++);
        b_id[h - 1] = param_ids.at(s++);
    }

    std::vector<ad::Tape::NodeId> state(H - 1, -1);  // -1 = zero initial state
    std::vector<ad::Tape::NodeId> outputs;
    for (const auto& x : window) {
        ad::Tape::NodeId below = tape.constant(ad::Tensor::vector(x));
        for (std::size_t h = 1; h < H; ++h) {
            ad::Tape::NodeId pre = tape.matvec(w_id[h - 1], below);
            if (recurrent && state[h - 1] >= 0)
                pre = tape.add(pre, tape.matvec(v_id[h - 1], state[h - 1]));
            pre = tape.add(pre, b_id[h - 1]);
            switch (spec.activations[h - 1]) {
                case Activation::Tanh: pre = tape.tanh(pre); break;
                case Activation::Sigmoid: pre = tape.sigmoid(pre); break;
                case Activation::Relu: pre = tape.relu(pre); break;
            }
            state[h - 1] = pre;
            below = pre;
        }
        outputs.push_back(tape.add(tape.matvec(w_id[H - 1], below), b_id[H - 1]));
    }
    return outputs;
}

void zero_masked(std::vector<double>& values, const StructureMask& mask) {
    if (values.size() != mask.bits.size())
        throw std::invalid_argument("zero_masked: length mismatch");
    for (std::size_t i = 0; i < values.size(); ++i)
        if (!mask.bits[i]) values[i] = 0.0;
}

std::string checkpoint_to_json(const Checkpoint& cp) {
    nlohmann::json j;
    j["spec"]["kind"] = to_string(cp.spec.kind);
    j["spec"]["layer_widths"] = cp.spec.layer_widths;
    std::vector<std::string> acts;
    for (Activation a : cp.spec.activations) acts.push_back(to_string(a));
    j["spec"]["activations"] = acts;
    j["spec"]["warmup"] = cp.spec.warmup;
    j["spec"]["exo_dim"] = cp.spec.exo_dim;
    j["params"] = cp.params.values;
    j["mask"] = cp.mask.bits;
    j["training_meta"] =
        cp.meta_json.empty() ? nlohmann::json::object() : nlohmann::json::parse(cp.meta_json);
    return j.dump(2);
}

Checkpoint checkpoint_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    Checkpoint cp;
    cp.spec.kind = net_kind_from_string(j.at("spec").at("kind").get<std::string>());
    cp.spec.layer_widths = j.at("spec").at("layer_widths").get<std::vector<std::size_t>>();
    for (const auto& a : j.at("spec").at("activations"))
        cp.spec.activations.push_back(activation_from_string(a.get<std::string>()));
    cp.spec.warmup = j.at("spec").at("warmup").get<std::size_t>();
    cp.spec.exo_dim = j.at("spec").value("exo_dim", 0);
    cp.params.values = j.at("params").get<std::vector<double>>();
    cp.mask.bits = j.at("mask").get<std::vector<std::uint8_t>>();
    cp.meta_json = j.at("training_meta").dump();
    cp.spec.validate();
    ParamLayout layout(cp.spec);
    if (cp.params.values.size() != layout.size() || cp.mask.bits.size() != layout.size())
        throw std::invalid_argument("checkpoint: params/mask length does not match spec");
    return cp;
}

void save_checkpoint(const Checkpoint& cp, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open checkpoint file for writing: " + path);
    out << checkpoint_to_json(cp) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return checkpoint_from_json(text);
}

}  // namespace parnn
