#pragma once

#include <unordered_map>
#include <vector>

#include "dited/tensor.hpp"

namespace dited {

enum class Op : uint8_t {
    leaf,
    constant,
    matmul,
    add,
    sub,
    mul,
    div,
    concat,
    slice,
    reshape,
    leaky_relu,
    sigmoid,
    tanh,
    softmax,
    log,
    exp,
    neg,
    sum,
    mean,
    square,
    sqrt,
    softplus,
    scale,
    add_scalar,
};

const char* op_name(Op op);

struct OpArgs {
    int axis = 0;
    int64_t start = 0;
    int64_t len = 0;
    Shape target_shape;
    double c = 0.0;
};

// Gradients of a scalar loss w.r.t. tracked leaves, keyed by leaf node id.
class GradientMap {
public:
    void put(int node, Tensor grad) { grads_[node] = std::move(grad); }
    bool has(const Tensor& leaf) const { return grads_.count(leaf.node) > 0; }
    const Tensor& at(const Tensor& leaf) const;
    const Tensor& at_node(int node) const;
    size_t size() const { return grads_.size(); }

private:
    std::unordered_map<int, Tensor> grads_;
};

// Append-only tape of primitive applications. Parents always precede
// children; backward visits each recorded node exactly once, in reverse.
// Single-threaded: one Graph must not be shared across threads.
class Graph {
public:
    Tensor leaf(Tensor value);

    // Records an op. Untracked inputs are captured as constants; nothing is
    // recorded when no input is tracked.
    Tensor apply(Op op, const std::vector<Tensor>& inputs, OpArgs args = {});

    // Reverse pass from a tracked scalar. Every tracked leaf appears in the
    // result (zeros when the loss does not reach it). The graph is consumed.
    GradientMap backward(const Tensor& loss);

    // Recomputes a recorded node's value from the stored leaf/constant
    // values, replaying the same primitive sequence.
    Tensor replay(int node_id) const;

    size_t size() const { return nodes_.size(); }
    void reserve(size_t n) { nodes_.reserve(n); }

private:
    struct Node {
        Op op;
        OpArgs args;
        std::vector<int> parents;
        Tensor value;  // forward output (node field unused here)
    };

    int add_node(Op op, OpArgs args, std::vector<int> parents, Tensor value);
    int capture(const Tensor& t);

    std::vector<Node> nodes_;
    std::vector<int> leaves_;
    bool consumed_ = false;

    friend class BackwardPass;
};

// Pure forward evaluation of one primitive; shared by apply() and replay().
Tensor eval_op(Op op, const OpArgs& args, const std::vector<const Tensor*>& in);

namespace ops {

Tensor matmul(Graph* g, const Tensor& a, const Tensor& b);
Tensor add(Graph* g, const Tensor& a, const Tensor& b);
Tensor sub(Graph* g, const Tensor& a, const Tensor& b);
Tensor mul(Graph* g, const Tensor& a, const Tensor& b);
Tensor div(Graph* g, const Tensor& a, const Tensor& b);
Tensor concat(Graph* g, const std::vector<Tensor>& parts, int axis);
Tensor slice(Graph* g, const Tensor& x, int axis, int64_t start, int64_t len);
Tensor reshape(Graph* g, const Tensor& x, Shape target);
Tensor leaky_relu(Graph* g, const Tensor& x, double slope = 0.01);
Tensor sigmoid(Graph* g, const Tensor& x);
Tensor tanh(Graph* g, const Tensor& x);
Tensor softmax(Graph* g, const Tensor& x);  // last axis
Tensor log(Graph* g, const Tensor& x);
Tensor exp(Graph* g, const Tensor& x);
Tensor neg(Graph* g, const Tensor& x);
Tensor sum(Graph* g, const Tensor& x);
Tensor mean(Graph* g, const Tensor& x);
Tensor square(Graph* g, const Tensor& x);
Tensor sqrt(Graph* g, const Tensor& x);
Tensor softplus(Graph* g, const Tensor& x);
Tensor scale(Graph* g, const Tensor& x, double c);
Tensor add_scalar(Graph* g, const Tensor& x, double c);

// x(m x in) * w(in x out) + b(out)
Tensor linear(Graph* g, const Tensor& x, const Tensor& w, const Tensor& b);

}  // namespace ops

}  // namespace dited
