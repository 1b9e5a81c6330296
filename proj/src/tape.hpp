#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tensor.hpp"

namespace selnet {

// Handle into a Tape. Only valid for the tape that produced it.
struct Var {
    std::uint32_t id = UINT32_MAX;
    bool valid() const { return id != UINT32_MAX; }
};

// A named, tracked parameter tensor. Identity (uid) is process-unique so a
// GradientMap can key gradients without caring which layer owns the value.
struct Parameter {
    Parameter() = default;
    Parameter(std::string name_, Tensor value_);

    std::string name;
    Tensor value;
    std::uint64_t uid = 0;
};

// Gradients keyed by parameter identity, produced by Tape::backward.
class GradientMap {
public:
    const Tensor* find(const Parameter& p) const;
    const Tensor& at(const Parameter& p) const;
    void add(std::uint64_t uid, Tensor grad);
    std::size_t size() const { return grads_.size(); }

private:
    std::unordered_map<std::uint64_t, Tensor> grads_;
};

// Reverse-mode tape. Forward values are computed eagerly as the graph is
// built; backward() walks the nodes in reverse creation order, which is
// already a topological order. Build a fresh tape per forward pass.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::uint32_t node_id)>;

    Var leaf(Tensor value);
    Var param(Parameter& p);  // memoized: one node per parameter per tape

    // op catalogue
    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);       // denominator clamped away from zero (eps 1e-12)
    Var add_bias(Var x, Var b);  // [m x n] + [n], broadcast over rows
    Var relu(Var x);
    Var sigmoid(Var x);
    Var exp(Var x);
    Var log(Var x);  // log(max(x, 1e-12))
    Var neg(Var x);
    Var square(Var x);
    Var max_scalar(Var x, double s);
    Var softmax_rows(Var x);
    Var reduce_mean(Var x);
    Var reduce_sum(Var x);
    Var scale(Var x, double s);
    Var stop_gradient(Var x);

    // escape hatch for fused ops (batch norm); backward sees the node id and
    // uses grad_of/value_of/accumulate on the captured input ids.
    Var custom(std::string op, std::vector<Var> inputs, Tensor value, BackwardFn backward);

    const Tensor& value(Var v) const;
    const Tensor& grad(Var v) const;  // valid after backward(); zeros if unreached
    std::size_t node_count() const { return nodes_.size(); }

    // Seeds d(loss)/d(loss) = 1, sweeps the tape once in reverse, and collects
    // gradients for every parameter node. Loss must be a one-element tensor.
    GradientMap backward(Var loss);

    // helpers for backward closures
    const Tensor& value_of(std::uint32_t id) const { return nodes_[id].value; }
    const Tensor& grad_of(std::uint32_t id) const { return nodes_[id].grad; }
    Tensor& grad_ref(std::uint32_t id) { return nodes_[id].grad; }
    void accumulate(std::uint32_t id, const Tensor& delta);
    const std::vector<std::uint32_t>& inputs_of(std::uint32_t id) const { return nodes_[id].inputs; }
    const std::string& op_of(std::uint32_t id) const { return nodes_[id].op; }

    static constexpr double kDivEps = 1e-12;
    static constexpr double kLogEps = 1e-12;

private:
    struct Node {
        std::string op;
        std::vector<std::uint32_t> inputs;
        Tensor value;
        Tensor grad;
        BackwardFn backward;     // empty for leaves / stop_gradient
        std::uint64_t param_uid = 0;  // nonzero when this node mirrors a Parameter
    };

    Var push(std::string op, std::vector<std::uint32_t> inputs, Tensor value, BackwardFn backward);
    const Node& node(Var v) const;
    void check(Var v) const;

    // deque: growing the tape must not invalidate references handed out by
    // value()/grad(), which callers hold while building further nodes
    std::deque<Node> nodes_;
    std::unordered_map<std::uint64_t, std::uint32_t> param_nodes_;
};

}  // namespace selnet
