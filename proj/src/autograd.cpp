#include "lapdae/autograd.hpp"

#include <algorithm>
#include <unordered_set>

#include "lapdae/ops.hpp"

namespace lapdae::ag {

void Node::add_grad(const Tensor& g) {
    if (grad.empty()) {
        grad = g;
        return;
    }
    Tensor::check_same_shape(grad, g, "grad accumulate");
    for (int64_t i = 0; i < grad.numel(); ++i) grad[i] += g[i];
}

Var Var::leaf(Tensor value, bool requires_grad, std::string name) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->name = std::move(name);
    return Var(n);
}

const Tensor& Var::grad() const {
    if (!node_ || node_->grad.empty())
        throw UsageError("grad() requested before backward() reached this node");
    return node_->grad;
}

namespace {

Var make_op(Tensor value, std::vector<NodePtr> inputs, std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->inputs = std::move(inputs);
    n->requires_grad =
        std::any_of(n->inputs.begin(), n->inputs.end(), [](const NodePtr& p) { return p->requires_grad; });
    if (n->requires_grad) n->backprop = std::move(backprop);
    return Var(n);
}

} // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int padding) {
    Tensor y = ops::conv2d(x.value(), w.value(), b.valid() ? b.value() : Tensor(), stride, padding);
    std::vector<NodePtr> in{x.node(), w.node()};
    if (b.valid()) in.push_back(b.node());
    return make_op(std::move(y), std::move(in), [stride, padding](Node& n) {
        NodePtr xn = n.inputs[0], wn = n.inputs[1];
        if (xn->requires_grad)
            xn->add_grad(ops::conv2d_grad_input(n.grad, wn->value, stride, padding, xn->value.dim(2),
                                                xn->value.dim(3)));
        if (wn->requires_grad)
            wn->add_grad(ops::conv2d_grad_kernel(n.grad, xn->value, stride, padding, wn->value.dim(2)));
        if (n.inputs.size() > 2 && n.inputs[2]->requires_grad)
            n.inputs[2]->add_grad(ops::conv2d_grad_bias(n.grad));
    });
}

Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int padding,
                     int output_padding) {
    Tensor y = ops::conv_transpose2d(x.value(), w.value(), b.valid() ? b.value() : Tensor(), stride,
                                     padding, output_padding);
    std::vector<NodePtr> in{x.node(), w.node()};
    if (b.valid()) in.push_back(b.node());
    return make_op(std::move(y), std::move(in), [stride, padding](Node& n) {
        NodePtr xn = n.inputs[0], wn = n.inputs[1];
        if (xn->requires_grad)
            xn->add_grad(ops::conv_transpose2d_grad_input(n.grad, wn->value, stride, padding));
        if (wn->requires_grad)
            wn->add_grad(
                ops::conv_transpose2d_grad_kernel(n.grad, xn->value, stride, padding, wn->value.dim(2)));
        if (n.inputs.size() > 2 && n.inputs[2]->requires_grad)
            n.inputs[2]->add_grad(ops::conv_transpose2d_grad_bias(n.grad));
    });
}

Var relu(const Var& x) {
    return make_op(ops::relu(x.value()), {x.node()}, [](Node& n) {
        if (n.inputs[0]->requires_grad)
            n.inputs[0]->add_grad(ops::relu_grad(n.inputs[0]->value, n.grad));
    });
}

Var sigmoid(const Var& x) {
    return make_op(ops::sigmoid(x.value()), {x.node()}, [](Node& n) {
        if (n.inputs[0]->requires_grad)
            n.inputs[0]->add_grad(ops::sigmoid_grad(n.value, n.grad));
    });
}

Var mse_loss(const Var& z, const Var& target) {
    double loss = ops::mse(z.value(), target.value());
    Tensor value({1});
    value[0] = static_cast<float>(loss);
    return make_op(std::move(value), {z.node(), target.node()}, [](Node& n) {
        float g = n.grad[0];
        if (n.inputs[0]->requires_grad) {
            Tensor gz = ops::mse_grad_z(n.inputs[0]->value, n.inputs[1]->value);
            if (g != 1.0f)
                for (int64_t i = 0; i < gz.numel(); ++i) gz[i] *= g;
            n.inputs[0]->add_grad(gz);
        }
        if (n.inputs[1]->requires_grad) {
            Tensor gx = ops::mse_grad_z(n.inputs[1]->value, n.inputs[0]->value);
            if (g != 1.0f)
                for (int64_t i = 0; i < gx.numel(); ++i) gx[i] *= g;
            n.inputs[1]->add_grad(gx);
        }
    });
}

Var add(const Var& a, const Var& b) {
    Tensor::check_same_shape(a.value(), b.value(), "add");
    Tensor y(a.value().shape());
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = a.value()[i] + b.value()[i];
    return make_op(std::move(y), {a.node(), b.node()}, [](Node& n) {
        for (auto& in : n.inputs)
            if (in->requires_grad) in->add_grad(n.grad);
    });
}

Var mul(const Var& a, const Var& b) {
    Tensor::check_same_shape(a.value(), b.value(), "mul");
    Tensor y(a.value().shape());
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = a.value()[i] * b.value()[i];
    return make_op(std::move(y), {a.node(), b.node()}, [](Node& n) {
        for (int side = 0; side < 2; ++side) {
            NodePtr self = n.inputs[static_cast<size_t>(side)];
            NodePtr other = n.inputs[static_cast<size_t>(1 - side)];
            if (!self->requires_grad) continue;
            Tensor g(n.grad.shape());
            for (int64_t i = 0; i < g.numel(); ++i) g[i] = n.grad[i] * other->value[i];
            self->add_grad(g);
        }
    });
}

Var scale(const Var& a, float factor) {
    Tensor y(a.value().shape());
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = a.value()[i] * factor;
    return make_op(std::move(y), {a.node()}, [factor](Node& n) {
        if (!n.inputs[0]->requires_grad) return;
        Tensor g(n.grad.shape());
        for (int64_t i = 0; i < g.numel(); ++i) g[i] = n.grad[i] * factor;
        n.inputs[0]->add_grad(g);
    });
}

GradMap backward(const Var& loss) {
    if (!loss.valid()) throw UsageError("backward: empty loss");
    if (loss.value().numel() != 1)
        throw UsageError("backward: loss must be scalar, got " + loss.value().shape_str());
    NodePtr root = loss.node();
    if (root->backward_ran)
        throw UsageError("backward: called twice on the same loss node; rebuild the graph "
                         "(gradients would double-accumulate)");
    root->backward_ran = true;

    // Iterative post-order DFS; `order` ends up topologically sorted.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    Tensor seed({1});
    seed[0] = 1.0f;
    root->add_grad(seed);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && !n->grad.empty()) n->backprop(*n);
    }

    GradMap grads;
    for (Node* n : order)
        if (n->requires_grad && !n->name.empty() && !n->grad.empty()) grads[n->name] = n->grad;
    return grads;
}

} // namespace lapdae::ag
