#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "parnn/tensor.hpp"

namespace parnn::ad {

/// Flat gradient vector, aligned index-for-index with the parameter slots
/// registered on a tape (and hence with a model's flat parameter vector when
/// the tape is built in layout order).
struct GradientVector {
    std::vector<double> values;
};

enum class Op : std::uint8_t {
    Constant,   // leaf, value fixed at construction
    Param,      // leaf, value bound at forward_eval
    MatVec,     // a: (r,c) matrix, b: (c) vector -> (r)
    Add,        // same shape
    Sub,        // same shape
    Mul,        // elementwise, same shape
    Scale,      // a * aux
    AddConst,   // a + aux
    Tanh,
    Sigmoid,
    Relu,
    Square,
    Sum,        // -> scalar
    Mean,       // -> scalar
    Pick,       // component aux of a rank-1 tensor -> scalar
};

/// Append-only reverse-mode autodiff tape over dense tensors.
///
/// Construction records the graph; forward_eval binds parameter slots and
/// caches all intermediate values; backward_grad accumulates d(terminal)/d(slot)
/// for every registered parameter slot, concatenated in registration order.
class Tape {
public:
    using NodeId = int;

    NodeId constant(Tensor value);
    NodeId param(std::vector<std::size_t> shape);  // returns node id; slot order = call order

    NodeId matvec(NodeId m, NodeId x);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double factor);
    NodeId add_const(NodeId a, double c);
    NodeId tanh(NodeId a);
    NodeId sigmoid(NodeId a);
    NodeId relu(NodeId a);
    NodeId square(NodeId a);
    NodeId sum(NodeId a);
    NodeId mean(NodeId a);
    NodeId pick(NodeId a, std::size_t index);

    std::size_t num_params() const { return param_nodes_.size(); }
    std::size_t param_size() const { return total_param_size_; }
    const std::vector<std::size_t>& param_shape(std::size_t slot) const;

    /// Evaluates the terminal (last added) node, which must be scalar shaped.
    /// bindings[slot] supplies the value for each parameter slot.
    double forward_eval(std::span<const Tensor> bindings);

    /// Convenience: bindings taken from one flat vector, sliced in slot order.
    double forward_eval_flat(std::span<const double> flat);

    /// Gradient of the terminal node with respect to every parameter entry.
    /// Must be preceded by forward_eval on this tape.
    GradientVector backward_grad();

    const Tensor& value(NodeId id) const { return nodes_[id].value; }

private:
    struct Node {
        Op op;
        NodeId a = -1;
        NodeId b = -1;
        double aux = 0.0;
        std::size_t index = 0;
        std::vector<std::size_t> shape;
        Tensor value;
        Tensor grad;
    };

    NodeId push(Node n);
    const Node& node(NodeId id) const;
    static std::vector<std::size_t> elementwise_shape(const Node& a, const Node& b);

    std::vector<Node> nodes_;
    std::vector<NodeId> param_nodes_;
    std::size_t total_param_size_ = 0;
    bool evaluated_ = false;
};

struct GradientCheckEntry {
    std::size_t index;
    double analytic;
    double numeric;
    double rel_error;
};

struct GradientCheckReport {
    double max_rel_error = 0.0;
    std::vector<GradientCheckEntry> failures;  // entries with rel_error > tol
    bool ok() const { return failures.empty(); }
};

/// Compares the analytic gradient against central finite differences of the
/// tape value at the given binding. Relative error uses max(1, |analytic|)
/// as the denominator.
GradientCheckReport check_gradient(Tape& tape, std::span<const double> flat,
                                   double step = 1e-5, double tol = 1e-5);

}  // namespace parnn::ad
