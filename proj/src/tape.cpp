#include "parnn/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace parnn::ad {

Tape::NodeId Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    evaluated_ = false;
    return static_cast<NodeId>(nodes_.size() - 1);
}

const Tape::Node& Tape::node(NodeId id) const {
    if (id < 0 || id >= static_cast<NodeId>(nodes_.size()))
        throw std::invalid_argument("Tape: bad node id");
    return nodes_[id];
}

std::vector<std::size_t> Tape::elementwise_shape(const Node& a, const Node& b) {
    if (a.shape != b.shape)
        throw std::invalid_argument("Tape: shape mismatch " + shape_string(a.shape) +
                                    " vs " + shape_string(b.shape));
    return a.shape;
}

Tape::NodeId Tape::constant(Tensor value) {
    Node n;
    n.op = Op::Constant;
    n.shape = value.shape();
    n.value = std::move(value);
    return push(std::move(n));
}

Tape::NodeId Tape::param(std::vector<std::size_t> shape) {
    Node n;
    n.op = Op::Param;
    n.index = param_nodes_.size();
    n.shape = std::move(shape);
    total_param_size_ += Tensor::count(n.shape);
    NodeId id = push(std::move(n));
    param_nodes_.push_back(id);
    return id;
}

const std::vector<std::size_t>& Tape::param_shape(std::size_t slot) const {
    return nodes_[param_nodes_.at(slot)].shape;
}

Tape::NodeId Tape::matvec(NodeId m, NodeId x) {
    const Node& a = node(m);
    const Node& b = node(x);
    if (a.shape.size() != 2 || b.shape.size() != 1 || a.shape[1] != b.shape[0])
        throw std::invalid_argument("Tape: matvec shape mismatch " + shape_string(a.shape) +
                                    " * " + shape_string(b.shape));
    Node n;
    n.op = Op::MatVec;
    n.a = m;
    n.b = x;
    n.shape = {a.shape[0]};
    return push(std::move(n));
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    n.shape = elementwise_shape(node(a), node(b));
    return push(std::move(n));
}

Tape::NodeId Tape::sub(NodeId a, NodeId b) {
    Node n;
    n.op = Op::Sub;
    n.a = a;
    n.b = b;
    n.shape = elementwise_shape(node(a), node(b));
    return push(std::move(n));
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
    Node n;
    n.op = Op::Mul;
    n.a = a;
    n.b = b;
    n.shape = elementwise_shape(node(a), node(b));
    return push(std::move(n));
}

Tape::NodeId Tape::scale(NodeId a, double factor) {
    Node n;
    n.op = Op::Scale;
    n.a = a;
    n.aux = factor;
    n.shape = node(a).shape;
    return push(std::move(n));
}

Tape::NodeId Tape::add_const(NodeId a, double c) {
    Node n;
    n.op = Op::AddConst;
    n.a = a;
    n.aux = c;
    n.shape = node(a).shape;
    return push(std::move(n));
}

Tape::NodeId Tape::tanh(NodeId a) {
    Node n;
    n.op = Op::Tanh;
    n.a = a;
    n.shape = node(a).shape;
    return push(std::move(n));
}

Tape::NodeId Tape::sigmoid(NodeId a) {
    Node n;
    n.op = Op::Sigmoid;
    n.a = a;
    n.shape = node(a).shape;
    return push(std::move(n));
}

Tape::NodeId Tape::relu(NodeId a) {
    Node n;
    n.op = Op::Relu;
    n.a = a;
    n.shape = node(a).shape;
    return push(std::move(n));
}

Tape::NodeId Tape::square(NodeId a) {
    Node n;
    n.op = Op::Square;
    n.a = a;
    n.shape = node(a).shape;
    return push(std::move(n));
}

Tape::NodeId Tape::sum(NodeId a) {
    Node n;
    n.op = Op::Sum;
    n.a = a;
    n.shape = {};
    return push(std::move(n));
}

Tape::NodeId Tape::mean(NodeId a) {
    Node n;
    n.op = Op::Mean;
    n.a = a;
    n.shape = {};
    return push(std::move(n));
}

Tape::NodeId Tape::pick(NodeId a, std::size_t index) {
    const Node& src = node(a);
    if (src.shape.size() != 1 || index >= src.shape[0])
        throw std::invalid_argument("Tape: pick index out of range");
    Node n;
    n.op = Op::Pick;
    n.a = a;
    n.index = index;
    n.shape = {};
    return push(std::move(n));
}

double Tape::forward_eval(std::span<const Tensor> bindings) {
    if (nodes_.empty()) throw std::logic_error("Tape: empty");
    if (!nodes_.back().shape.empty())
        throw std::invalid_argument("Tape: terminal node is not scalar");
    if (bindings.size() != param_nodes_.size())
        throw std::invalid_argument("Tape: wrong number of parameter bindings");

    for (Node& n : nodes_) {
        switch (n.op) {
            case Op::Constant:
                break;
            case Op::Param: {
                const Tensor& t = bindings[n.index];
                if (t.shape() != n.shape)
                    throw std::invalid_argument("Tape: bound tensor shape " +
                                                shape_string(t.shape()) +
                                                " does not match declared slot " +
                                                shape_string(n.shape));
                n.value = t;
                break;
            }
            case Op::MatVec: {
                const Tensor& m = nodes_[n.a].value;
                const Tensor& x = nodes_[n.b].value;
                const std::size_t rows = m.shape()[0], cols = m.shape()[1];
                n.value = Tensor(n.shape);
                const double* md = m.data().data();
                const double* xd = x.data().data();
                double* out = n.value.data().data();
                for (std::size_t r = 0; r < rows; ++r) {
                    double acc = 0.0;
                    const double* row = md + r * cols;
                    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * xd[c];
                    out[r] = acc;
                }
                break;
            }
            case Op::Add: {
                n.value = nodes_[n.a].value;
                const auto& b = nodes_[n.b].value.data();
                for (std::size_t i = 0; i < b.size(); ++i) n.value[i] += b[i];
                break;
            }
            case Op::Sub: {
                n.value = nodes_[n.a].value;
                const auto& b = nodes_[n.b].value.data();
                for (std::size_t i = 0; i < b.size(); ++i) n.value[i] -= b[i];
                break;
            }
            case Op::Mul: {
                n.value = nodes_[n.a].value;
                const auto& b = nodes_[n.b].value.data();
                for (std::size_t i = 0; i < b.size(); ++i) n.value[i] *= b[i];
                break;
            }
            case Op::Scale: {
                n.value = nodes_[n.a].value;
                for (double& v : n.value.data()) v *= n.aux;
                break;
            }
            case Op::AddConst: {
                n.value = nodes_[n.a].value;
                for (double& v : n.value.data()) v += n.aux;
                break;
            }
            case Op::Tanh: {
                n.value = nodes_[n.a].value;
                for (double& v : n.value.data()) v = std::tanh(v);
                break;
            }
            case Op::Sigmoid: {
                n.value = nodes_[n.a].value;
                for (double& v : n.value.data()) v = 1.0 / (1.0 + std::exp(-v));
                break;
            }
            case Op::Relu: {
                n.value = nodes_[n.a].value;
                for (double& v : n.value.data()) v = v > 0.0 ? v : 0.0;
                break;
            }
            case Op::Square: {
                n.value = nodes_[n.a].value;
                for (double& v : n.value.data()) v *= v;
                break;
            }
            case Op::Sum: {
                double acc = 0.0;
                for (double v : nodes_[n.a].value.data()) acc += v;
                n.value = Tensor(std::vector<std::size_t>{});  // unchecked: overflow must reach the caller
                n.value[0] = acc;
                break;
            }
            case Op::Mean: {
                double acc = 0.0;
                const auto& d = nodes_[n.a].value.data();
                for (double v : d) acc += v;
                n.value = Tensor(std::vector<std::size_t>{});  // unchecked: overflow must reach the caller
                n.value[0] = acc / static_cast<double>(d.size());
                break;
            }
            case Op::Pick: {
                n.value = Tensor(std::vector<std::size_t>{});
                n.value[0] = nodes_[n.a].value[n.index];
                break;
            }
        }
    }
    evaluated_ = true;
    return nodes_.back().value[0];
}

double Tape::forward_eval_flat(std::span<const double> flat) {
    if (flat.size() != total_param_size_)
        throw std::invalid_argument("Tape: flat binding has wrong length");
    std::vector<Tensor> bindings;
    bindings.reserve(param_nodes_.size());
    std::size_t offset = 0;
    for (NodeId id : param_nodes_) {
        const auto& shape = nodes_[id].shape;
        const std::size_t count = Tensor::count(shape);
        bindings.emplace_back(shape, std::vector<double>(flat.begin() + offset,
                                                         flat.begin() + offset + count));
        offset += count;
    }
    return forward_eval(bindings);
}

GradientVector Tape::backward_grad() {
    if (!evaluated_)
        throw std::logic_error("Tape: backward_grad called before forward_eval");

    for (Node& n : nodes_) {
        n.grad = Tensor(n.shape);  // zeros
    }
    nodes_.back().grad[0] = 1.0;

    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node& n = *it;
        switch (n.op) {
            case Op::Constant:
            case Op::Param:
                break;
            case Op::MatVec: {
                Node& m = nodes_[n.a];
                Node& x = nodes_[n.b];
                const std::size_t rows = m.shape[0], cols = m.shape[1];
                const double* g = n.grad.data().data();
                const double* xd = x.value.data().data();
                const double* md = m.value.data().data();
                double* mg = m.grad.data().data();
                double* xg = x.grad.data().data();
                for (std::size_t r = 0; r < rows; ++r) {
                    const double gr = g[r];
                    if (gr == 0.0) continue;
                    double* mrow = mg + r * cols;
                    const double* vrow = md + r * cols;
                    for (std::size_t c = 0; c < cols; ++c) {
                        mrow[c] += gr * xd[c];
                        xg[c] += gr * vrow[c];
                    }
                }
                break;
            }
            case Op::Add: {
                auto& ga = nodes_[n.a].grad.data();
                auto& gb = nodes_[n.b].grad.data();
                for (std::size_t i = 0; i < ga.size(); ++i) {
                    ga[i] += n.grad[i];
                    gb[i] += n.grad[i];
                }
                break;
            }
            case Op::Sub: {
                auto& ga = nodes_[n.a].grad.data();
                auto& gb = nodes_[n.b].grad.data();
                for (std::size_t i = 0; i < ga.size(); ++i) {
                    ga[i] += n.grad[i];
                    gb[i] -= n.grad[i];
                }
                break;
            }
            case Op::Mul: {
                auto& ga = nodes_[n.a].grad.data();
                auto& gb = nodes_[n.b].grad.data();
                const auto& va = nodes_[n.a].value.data();
                const auto& vb = nodes_[n.b].value.data();
                for (std::size_t i = 0; i < ga.size(); ++i) {
                    ga[i] += n.grad[i] * vb[i];
                    gb[i] += n.grad[i] * va[i];
                }
                break;
            }
            case Op::Scale: {
                auto& ga = nodes_[n.a].grad.data();
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i] * n.aux;
                break;
            }
            case Op::AddConst: {
                auto& ga = nodes_[n.a].grad.data();
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i];
                break;
            }
            case Op::Tanh: {
                auto& ga = nodes_[n.a].grad.data();
                const auto& y = n.value.data();
                for (std::size_t i = 0; i < ga.size(); ++i)
                    ga[i] += n.grad[i] * (1.0 - y[i] * y[i]);
                break;
            }
            case Op::Sigmoid: {
                auto& ga = nodes_[n.a].grad.data();
                const auto& y = n.value.data();
                for (std::size_t i = 0; i < ga.size(); ++i)
                    ga[i] += n.grad[i] * y[i] * (1.0 - y[i]);
                break;
            }
            case Op::Relu: {
                // subgradient at 0 is taken as 0
                auto& ga = nodes_[n.a].grad.data();
                const auto& x = nodes_[n.a].value.data();
                for (std::size_t i = 0; i < ga.size(); ++i)
                    ga[i] += x[i] > 0.0 ? n.grad[i] : 0.0;
                break;
            }
            case Op::Square: {
                auto& ga = nodes_[n.a].grad.data();
                const auto& x = nodes_[n.a].value.data();
                for (std::size_t i = 0; i < ga.size(); ++i)
                    ga[i] += n.grad[i] * 2.0 * x[i];
                break;
            }
            case Op::Sum: {
                auto& ga = nodes_[n.a].grad.data();
                const double g = n.grad[0];
                for (double& v : ga) v += g;
                break;
            }
            case Op::Mean: {
                auto& ga = nodes_[n.a].grad.data();
                const double g = n.grad[0] / static_cast<double>(ga.size());
                for (double& v : ga) v += g;
                break;
            }
            case Op::Pick: {
                nodes_[n.a].grad[n.index] += n.grad[0];
                break;
            }
        }
    }

    GradientVector out;
    out.values.reserve(total_param_size_);
    for (NodeId id : param_nodes_) {
        const auto& g = nodes_[id].grad.data();
        out.values.insert(out.values.end(), g.begin(), g.end());
    }
    return out;
}

GradientCheckReport check_gradient(Tape& tape, std::span<const double> flat,
                                   double step, double tol) {
    if (step <= 0.0) throw std::invalid_argument("check_gradient: step must be positive");
    tape.forward_eval_flat(flat);
    GradientVector analytic = tape.backward_grad();

    std::vector<double> perturbed(flat.begin(), flat.end());
    GradientCheckReport report;
    for (std::size_t i = 0; i < perturbed.size(); ++i) {
        const double saved = perturbed[i];
        perturbed[i] = saved + step;
        const double up = tape.forward_eval_flat(perturbed);
        perturbed[i] = saved - step;
        const double down = tape.forward_eval_flat(perturbed);
        perturbed[i] = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double denom = std::max(1.0, std::abs(analytic.values[i]));
        const double rel = std::abs(analytic.values[i] - numeric) / denom;
        report.max_rel_error = std::max(report.max_rel_error, rel);
        if (rel > tol)
            report.failures.push_back({i, analytic.values[i], numeric, rel});
    }
    // leave cached values consistent with the unperturbed point
    tape.forward_eval_flat(flat);
    return report;
}

}  // namespace parnn::ad
