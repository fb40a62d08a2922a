#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lapdae/tensor.hpp"

namespace lapdae::ag {

class Node;
using NodePtr = std::shared_ptr<Node>;

/// One recorded operation result. Nodes form a DAG from leaves
/// (parameters, constants) to the loss; `backprop` scatters this node's
/// gradient into its inputs' gradients.
class Node {
public:
    Tensor value;
    Tensor grad;                       // allocated on first write
    bool requires_grad = false;
    bool backward_ran = false;         // set on the loss node by backward()
    std::string name;                  // nonempty for named parameter leaves
    std::vector<NodePtr> inputs;
    std::function<void(Node&)> backprop;

    void add_grad(const Tensor& g);
};

/// Value-semantics handle to a graph node.
class Var {
public:
    Var() = default;
    explicit Var(NodePtr n) : node_(std::move(n)) {}

    static Var leaf(Tensor value, bool requires_grad = false, std::string name = {});

    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Tensor& grad() const;
    bool has_grad() const { return node_ && !node_->grad.empty(); }
    void zero_grad() { node_->grad = Tensor(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const std::string& name() const { return node_->name; }
    NodePtr node() const { return node_; }
    bool valid() const { return node_ != nullptr; }

private:
    NodePtr node_;
};

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int padding);
Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int padding,
                     int output_padding = 0);
Var relu(const Var& x);
Var sigmoid(const Var& x);
/// Scalar (shape {1}) mean of (z - target)^2. target may be a constant leaf.
Var mse_loss(const Var& z, const Var& target);
Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, float factor);

/// Parameter name -> gradient. Copies; the leaves also keep their .grad.
using GradMap = std::map<std::string, Tensor>;

/// Reverse-mode sweep from a scalar loss. Fills .grad on every
/// requires_grad node reachable from `loss` and returns the gradients of
/// the named leaves. Gradients accumulate additively across multiple uses
/// of the same node. Calling backward twice on the same loss node without
/// rebuilding the graph throws UsageError (grads would silently double).
GradMap backward(const Var& loss);

} // namespace lapdae::ag
