#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "parnn/tape.hpp"
#include "parnn/tensor.hpp"

namespace parnn {

enum class NetKind { MLP, ElmanRNN };
enum class Activation { Tanh, Sigmoid, Relu };

std::string to_string(NetKind k);
std::string to_string(Activation a);
NetKind net_kind_from_string(const std::string& s);
Activation activation_from_string(const std::string& s);

/// Architecture of an MLP or Elman-RNN forecaster.
///
/// layer_widths = L0..LH with L0 the input dimension (lag window plus any
/// exogenous columns) and LH the output dimension. activations has one entry
/// per hidden layer. warmup is the number of leading steps whose outputs are
/// flagged unusable while hidden states accumulate history.
struct NetworkSpec {
    NetKind kind = NetKind::ElmanRNN;
    std::vector<std::size_t> layer_widths;
    std::vector<Activation> activations;
    std::size_t warmup = 0;
    std::size_t exo_dim = 0;  // trailing input columns that are not lags

    std::size_t depth() const { return layer_widths.size() - 1; }  // H
    std::size_t input_dim() const { return layer_widths.front(); }
    std::size_t output_dim() const { return layer_widths.back(); }
    std::size_t lag_count() const { return input_dim() - exo_dim; }

    /// Throws std::invalid_argument on malformed widths/activations, or a
    /// recurrent net whose first hidden activation is unbounded.
    void validate() const;
};

enum class ParamKind { InputWeight, RecurrentWeight, Bias };

struct ParamIndexEntry {
    std::size_t layer;  // 1-based, matching w^h / v^h / b^h
    ParamKind kind;
    std::size_t row;
    std::size_t col;  // 0 for biases
};

/// Flat layout of all weights/biases: for each layer h = 1..H, w^h row-major,
/// then v^h (recurrent nets, hidden layers only), then the bias vector.
class ParamLayout {
public:
    explicit ParamLayout(const NetworkSpec& spec);

    std::size_t size() const { return total_; }
    std::size_t w_offset(std::size_t h) const { return w_offset_[h - 1]; }
    std::size_t v_offset(std::size_t h) const;
    std::size_t b_offset(std::size_t h) const { return b_offset_[h - 1]; }
    bool has_recurrent(std::size_t h) const;

    ParamIndexEntry entry(std::size_t index) const;

    const NetworkSpec& spec() const { return spec_; }

private:
    NetworkSpec spec_;
    std::vector<std::size_t> w_offset_, v_offset_, b_offset_;
    std::size_t total_ = 0;
};

struct ParamVector {
    std::vector<double> values;
};

struct StructureMask {
    std::vector<std::uint8_t> bits;

    static StructureMask ones(std::size_t n) { return {std::vector<std::uint8_t>(n, 1)}; }
    static StructureMask zeros(std::size_t n) { return {std::vector<std::uint8_t>(n, 0)}; }
};

/// One training window: M_l consecutive lag vectors plus the final-step target.
struct Window {
    std::vector<std::vector<double>> inputs;  // M_l entries, each of length L0
    std::vector<double> target;               // length LH
};

struct ForwardResult {
    std::vector<std::vector<double>> outputs;  // one per step
    std::size_t first_usable = 0;              // outputs before this index are warmup
};

/// Exact recursion z_i^h = psi^h[w^h z_i^{h-1} + v^h z_{i-1}^h + b^h] with
/// z_0^h = 0; outputs before step warmup+1 are flagged unusable.
ForwardResult rnn_forward(const NetworkSpec& spec, const ParamVector& params,
                          const StructureMask& mask,
                          const std::vector<std::vector<double>>& window);

/// Feed-forward composition with masked weights; input is one lag vector.
std::vector<double> mlp_forward(const NetworkSpec& spec, const ParamVector& params,
                                const StructureMask& mask,
                                const std::vector<double>& input);

/// Dispatches on spec.kind; for the RNN, returns the final-step output.
std::vector<double> predict(const NetworkSpec& spec, const ParamVector& params,
                            const StructureMask& mask,
                            const std::vector<std::vector<double>>& window);

/// Number of mask-1 recurrent-weight entries. Errors on MLP specs.
std::size_t count_hidden_links(const StructureMask& mask, const NetworkSpec& spec);

/// Lags j in {1..lag_count} touched by at least one mask-1 first-layer input
/// weight. The AR-order estimate is the maximum of this set.
std::set<std::size_t> selected_input_lags(const StructureMask& mask, const NetworkSpec& spec);

struct LayerBound {
    double observed;  // sum of absolute outputs of the layer at the final step
    double bound;
};

/// Per-layer absolute output sums against the sparse-network growth bound
/// t^i (prod r_w)(prod r_v)^{t-1} E^{ti}, with the dedicated final-layer
/// variant. Inputs must lie in [-1, 1]; activations must vanish at 0 (tanh,
/// ReLU). Bias entries count toward r_w of their layer; empty recurrent
/// counts are clamped to 1, which only loosens the bound.
std::vector<LayerBound> lemma_output_bound(const NetworkSpec& spec, const ParamVector& params,
                                           const StructureMask& mask,
                                           const std::vector<std::vector<double>>& window);

/// Masked per-tensor bindings in layout order (w1,[v1],b1,w2,...), for use
/// with tapes built by register_params/build_window_graph.
std::vector<ad::Tensor> masked_bindings(const NetworkSpec& spec, const ParamVector& params,
                                        const StructureMask& mask);

/// Registers one parameter slot per layout tensor; slot order matches
/// ParamLayout, so a tape's flat gradient aligns with ParamVector.
std::vector<ad::Tape::NodeId> register_params(ad::Tape& tape, const NetworkSpec& spec);

/// Builds the forward graph for one window on an existing tape; returns the
/// output node of every step.
std::vector<ad::Tape::NodeId> build_window_graph(ad::Tape& tape, const NetworkSpec& spec,
                                                 const std::vector<ad::Tape::NodeId>& param_ids,
                                                 const std::vector<std::vector<double>>& window);

void zero_masked(std::vector<double>& values, const StructureMask& mask);

/// Model checkpoint (spec + flat params + mask + training metadata) as a
/// single JSON document.
struct Checkpoint {
    NetworkSpec spec;
    ParamVector params;
    StructureMask mask;
    std::string meta_json;  // free-form training metadata object
};

std::string checkpoint_to_json(const Checkpoint& cp);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const Checkpoint& cp, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace parnn
