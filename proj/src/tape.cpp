#include "dited/tape.hpp"

#include <cmath>
#include <cstring>

#include "dited/kernels.hpp"

namespace dited {

const char* op_name(Op op) {
    switch (op) {
        case Op::leaf: return "leaf";
        case Op::constant: return "constant";
        case Op::matmul: return "matmul";
        case Op::add: return "add";
        case Op::sub: return "sub";
        case Op::mul: return "mul";
        case Op::div: return "div";
        case Op::concat: return "concat";
        case Op::slice: return "slice";
        case Op::reshape: return "reshape";
        case Op::leaky_relu: return "leaky_relu";
        case Op::sigmoid: return "sigmoid";
        case Op::tanh: return "tanh";
        case Op::softmax: return "softmax";
        case Op::log: return "log";
        case Op::exp: return "exp";
        case Op::neg: return "neg";
        case Op::sum: return "sum";
        case Op::mean: return "mean";
        case Op::square: return "square";
        case Op::sqrt: return "sqrt";
        case Op::softplus: return "softplus";
        case Op::scale: return "scale";
        case Op::add_scalar: return "add_scalar";
    }
    return "?";
}

namespace {

[[noreturn]] void shape_error(Op op, const Shape& a, const Shape& b) {
    throw DitedError(std::string(op_name(op)) + ": shape mismatch (" + shape_str(a) + " vs " +
                     shape_str(b) + ")");
}

// How the second operand of an elementwise binary op maps onto the first.
struct BinaryMap {
    enum Mode { same, scalar, suffix, row } mode = same;
    int64_t b_numel = 0;
    int64_t last_dim = 1;

    int64_t index(int64_t i) const {
        switch (mode) {
            case same: return i;
            case scalar: return 0;
            case suffix: return i % b_numel;
            case row: return i / last_dim;
        }
        return i;
    }
};

BinaryMap binary_map(Op op, const Shape& a, const Shape& b) {
    BinaryMap m;
    m.b_numel = shape_numel(b);
    if (a == b) {
        m.mode = BinaryMap::same;
        return m;
    }
    if (m.b_numel == 1) {
        m.mode = BinaryMap::scalar;
        return m;
    }
    // b equals a trailing suffix of a: broadcast over leading (batch) dims
    if (b.size() < a.size() &&
        std::equal(b.begin(), b.end(), a.end() - static_cast<int64_t>(b.size()))) {
        m.mode = BinaryMap::suffix;
        return m;
    }
    // b is (..., 1) with matching leading dims: broadcast along the last axis
    if (a.size() == b.size() && !a.empty() && b.back() == 1 &&
        std::equal(a.begin(), a.end() - 1, b.begin())) {
        m.mode = BinaryMap::row;
        m.last_dim = a.back();
        return m;
    }
    shape_error(op, a, b);
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double stable_softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

struct AxisSplit {
    int64_t outer = 1, axis = 1, inner = 1;
};

AxisSplit axis_split(const Shape& s, int axis) {
    AxisSplit sp;
    for (int i = 0; i < static_cast<int>(s.size()); ++i) {
        if (i < axis)
            sp.outer *= s[static_cast<size_t>(i)];
        else if (i == axis)
            sp.axis = s[static_cast<size_t>(i)];
        else
            sp.inner *= s[static_cast<size_t>(i)];
    }
    return sp;
}

}  // namespace

Tensor eval_op(Op op, const OpArgs& args, const std::vector<const Tensor*>& in) {
    switch (op) {
        case Op::leaf:
        case Op::constant:
            return *in[0];

        case Op::matmul: {
            const Tensor& a = *in[0];
            const Tensor& b = *in[1];
            if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
                shape_error(op, a.shape, b.shape);
            Tensor out = Tensor::zeros({a.rows(), b.cols()});
            matmul(a.data.data(), b.data.data(), out.data.data(), a.rows(), a.cols(), b.cols());
            return out;
        }

        case Op::add:
        case Op::sub:
        case Op::mul:
        case Op::div: {
            const Tensor& a = *in[0];
            const Tensor& b = *in[1];
            const BinaryMap m = binary_map(op, a.shape, b.shape);
            Tensor out = Tensor::zeros(a.shape);
            const double* pa = a.data.data();
            const double* pb = b.data.data();
            double* po = out.data.data();
            const int64_t n = a.numel();
            switch (op) {
                case Op::add:
                    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[m.index(i)];
                    break;
                case Op::sub:
                    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[m.index(i)];
                    break;
                case Op::mul:
                    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[m.index(i)];
                    break;
                default:
                    for (int64_t i = 0; i < n; ++i) {
                        const double d = pb[m.index(i)];
                        if (d == 0.0) throw DitedError("div: division by zero");
                        po[i] = pa[i] / d;
                    }
            }
            return out;
        }

        case Op::concat: {
            const int axis = args.axis;
            const Shape& s0 = in[0]->shape;
            int64_t axis_total = 0;
            for (const Tensor* t : in) {
                if (t->rank() != static_cast<int>(s0.size())) shape_error(op, s0, t->shape);
                for (int d = 0; d < t->rank(); ++d)
                    if (d != axis && t->shape[static_cast<size_t>(d)] != s0[static_cast<size_t>(d)])
                        shape_error(op, s0, t->shape);
                axis_total += t->shape[static_cast<size_t>(axis)];
            }
            Shape out_shape = s0;
            out_shape[static_cast<size_t>(axis)] = axis_total;
            Tensor out = Tensor::zeros(out_shape);
            const AxisSplit sp = axis_split(out_shape, axis);
            int64_t prefix = 0;
            for (const Tensor* t : in) {
                const int64_t ax = t->shape[static_cast<size_t>(axis)];
                for (int64_t o = 0; o < sp.outer; ++o)
                    std::memcpy(out.data.data() + (o * sp.axis + prefix) * sp.inner,
                                t->data.data() + o * ax * sp.inner,
                                static_cast<size_t>(ax * sp.inner) * sizeof(double));
                prefix += ax;
            }
            return out;
        }

        case Op::slice: {
            const Tensor& x = *in[0];
            const AxisSplit sp = axis_split(x.shape, args.axis);
            if (args.axis < 0 || args.axis >= x.rank() || args.start < 0 || args.len <= 0 ||
                args.start + args.len > sp.axis)
                throw DitedError(std::string("slice: range [") + std::to_string(args.start) + "," +
                                 std::to_string(args.start + args.len) + ") out of bounds for " +
                                 shape_str(x.shape));
            Shape out_shape = x.shape;
            out_shape[static_cast<size_t>(args.axis)] = args.len;
            Tensor out = Tensor::zeros(out_shape);
            for (int64_t o = 0; o < sp.outer; ++o)
                std::memcpy(out.data.data() + o * args.len * sp.inner,
                            x.data.data() + (o * sp.axis + args.start) * sp.inner,
                            static_cast<size_t>(args.len * sp.inner) * sizeof(double));
            return out;
        }

        case Op::reshape: {
            const Tensor& x = *in[0];
            if (shape_numel(args.target_shape) != x.numel())
                shape_error(op, x.shape, args.target_shape);
            Tensor out = x;
            out.shape = args.target_shape;
            out.node = -1;
            return out;
        }

        case Op::softmax: {
            const Tensor& x = *in[0];
            if (x.rank() < 1) shape_error(op, x.shape, x.shape);
            const int64_t c = x.shape.back();
            const int64_t rows = x.numel() / c;
            Tensor out = Tensor::zeros(x.shape);
            for (int64_t r = 0; r < rows; ++r) {
                const double* xr = x.data.data() + r * c;
                double* yr = out.data.data() + r * c;
                double mx = xr[0];
                for (int64_t j = 1; j < c; ++j) mx = std::max(mx, xr[j]);
                double z = 0.0;
                for (int64_t j = 0; j < c; ++j) {
                    yr[j] = std::exp(xr[j] - mx);
                    z += yr[j];
                }
                for (int64_t j = 0; j < c; ++j) yr[j] /= z;
            }
            return out;
        }

        case Op::sum:
        case Op::mean: {
            const Tensor& x = *in[0];
            double acc = 0.0;
            for (double v : x.data) acc += v;
            if (op == Op::mean) acc /= static_cast<double>(x.numel());
            return Tensor::scalar(acc);
        }

        default: {
            // unary elementwise
            const Tensor& x = *in[0];
            Tensor out = Tensor::zeros(x.shape);
            const double* px = x.data.data();
            double* po = out.data.data();
            const int64_t n = x.numel();
            switch (op) {
                case Op::leaky_relu: {
                    const double s = args.c;
                    ewise_map(px, po, n, [s](double v) { return v >= 0.0 ? v : s * v; });
                    break;
                }
                case Op::sigmoid:
                    ewise_map(px, po, n, [](double v) { return stable_sigmoid(v); });
                    break;
                case Op::tanh:
                    ewise_map(px, po, n, [](double v) { return std::tanh(v); });
                    break;
                case Op::log:
                    for (int64_t i = 0; i < n; ++i) {
                        if (px[i] <= 0.0)
                            throw DitedError("log: domain error (non-positive input " +
                                             std::to_string(px[i]) + ")");
                        po[i] = std::log(px[i]);
                    }
                    break;
                case Op::exp:
                    ewise_map(px, po, n, [](double v) { return std::exp(v); });
                    break;
                case Op::neg:
                    ewise_map(px, po, n, [](double v) { return -v; });
                    break;
                case Op::square:
                    ewise_map(px, po, n, [](double v) { return v * v; });
                    break;
                case Op::sqrt:
                    for (int64_t i = 0; i < n; ++i) {
                        if (px[i] < 0.0)
                            throw DitedError("sqrt: domain error (negative input " +
                                             std::to_string(px[i]) + ")");
                        po[i] = std::sqrt(px[i]);
                    }
                    break;
                case Op::softplus:
                    ewise_map(px, po, n, [](double v) { return stable_softplus(v); });
                    break;
                case Op::scale: {
                    const double s = args.c;
                    ewise_map(px, po, n, [s](double v) { return s * v; });
                    break;
                }
                case Op::add_scalar: {
                    const double s = args.c;
                    ewise_map(px, po, n, [s](double v) { return v + s; });
                    break;
                }
                default:
                    throw DitedError(std::string("eval_op: unhandled op ") + op_name(op));
            }
            return out;
        }
    }
}

int Graph::add_node(Op op, OpArgs args, std::vector<int> parents, Tensor value) {
    value.node = -1;
    nodes_.push_back(Node{op, std::move(args), std::move(parents), std::move(value)});
    return static_cast<int>(nodes_.size()) - 1;
}

int Graph::capture(const Tensor& t) {
    if (t.tracked()) return t.node;
    return add_node(Op::constant, {}, {}, t);
}

Tensor Graph::leaf(Tensor value) {
    if (consumed_) throw DitedError("graph: consumed by backward");
    const int id = add_node(Op::leaf, {}, {}, value);
    leaves_.push_back(id);
    value.node = id;
    return value;
}

Tensor Graph::apply(Op op, const std::vector<Tensor>& inputs, OpArgs args) {
    if (consumed_) throw DitedError("graph: consumed by backward");
    std::vector<const Tensor*> ptrs;
    ptrs.reserve(inputs.size());
    for (const Tensor& t : inputs) ptrs.push_back(&t);
    Tensor out = eval_op(op, args, ptrs);
    std::vector<int> parents;
    parents.reserve(inputs.size());
    for (const Tensor& t : inputs) parents.push_back(capture(t));
    out.node = add_node(op, std::move(args), std::move(parents), out);
    return out;
}

Tensor Graph::replay(int node_id) const {
    if (node_id < 0 || node_id >= static_cast<int>(nodes_.size()))
        throw DitedError("replay: node id out of range");
    std::vector<Tensor> vals(static_cast<size_t>(node_id) + 1);
    for (int i = 0; i <= node_id; ++i) {
        const Node& nd = nodes_[static_cast<size_t>(i)];
        if (nd.op == Op::leaf || nd.op == Op::constant) {
            vals[static_cast<size_t>(i)] = nd.value;
            continue;
        }
        std::vector<const Tensor*> in;
        in.reserve(nd.parents.size());
        for (int p : nd.parents) in.push_back(&vals[static_cast<size_t>(p)]);
        vals[static_cast<size_t>(i)] = eval_op(nd.op, nd.args, in);
    }
    return vals[static_cast<size_t>(node_id)];
}

const Tensor& GradientMap::at(const Tensor& leaf) const { return at_node(leaf.node); }

const Tensor& GradientMap::at_node(int node) const {
    auto it = grads_.find(node);
    if (it == grads_.end())
        throw DitedError("gradient map: node " + std::to_string(node) + " is not a tracked leaf");
    return it->second;
}

// ---------------------------------------------------------------------------
// backward

class BackwardPass {
public:
    explicit BackwardPass(Graph& g) : g_(g), adj_(g.nodes_.size()) {}

    GradientMap run(const Tensor& loss) {
        adj_[static_cast<size_t>(loss.node)] = {1.0};
        for (int i = static_cast<int>(g_.nodes_.size()) - 1; i >= 0; --i) {
            if (adj_[static_cast<size_t>(i)].empty()) continue;
            pull(i);
        }
        GradientMap out;
        for (int id : g_.leaves_) {
            const Graph::Node& nd = g_.nodes_[static_cast<size_t>(id)];
            std::vector<double>& a = adj_[static_cast<size_t>(id)];
            if (a.empty()) a.assign(static_cast<size_t>(nd.value.numel()), 0.0);
            out.put(id, Tensor(nd.value.shape, std::move(a)));
        }
        return out;
    }

private:
    std::vector<double>& grad_of(int id) {
        std::vector<double>& a = adj_[static_cast<size_t>(id)];
        if (a.empty()) a.assign(static_cast<size_t>(g_.nodes_[static_cast<size_t>(id)].value.numel()), 0.0);
        return a;
    }

    const Tensor& value_of(int id) { return g_.nodes_[static_cast<size_t>(id)].value; }

    void pull(int id) {
        Graph::Node& nd = g_.nodes_[static_cast<size_t>(id)];
        const std::vector<double>& g = adj_[static_cast<size_t>(id)];
        switch (nd.op) {
            case Op::leaf:
            case Op::constant:
                return;

            case Op::matmul: {
                const Tensor& a = value_of(nd.parents[0]);
                const Tensor& b = value_of(nd.parents[1]);
                const int64_t m = a.rows(), k = a.cols(), n = b.cols();
                matmul_grad_a(g.data(), b.data.data(), grad_of(nd.parents[0]).data(), m, k, n);
                matmul_grad_b(a.data.data(), g.data(), grad_of(nd.parents[1]).data(), m, k, n);
                return;
            }

            case Op::add:
            case Op::sub:
            case Op::mul:
            case Op::div: {
                const Tensor& a = value_of(nd.parents[0]);
                const Tensor& b = value_of(nd.parents[1]);
                const BinaryMap mmap = binary_map(nd.op, a.shape, b.shape);
                std::vector<double>& da = grad_of(nd.parents[0]);
                std::vector<double>& db = grad_of(nd.parents[1]);
                const int64_t n = a.numel();
                switch (nd.op) {
                    case Op::add:
                        for (int64_t i = 0; i < n; ++i) {
                            da[static_cast<size_t>(i)] += g[static_cast<size_t>(i)];
                            db[static_cast<size_t>(mmap.index(i))] += g[static_cast<size_t>(i)];
                        }
                        return;
                    case Op::sub:
                        for (int64_t i = 0; i < n; ++i) {
                            da[static_cast<size_t>(i)] += g[static_cast<size_t>(i)];
                            db[static_cast<size_t>(mmap.index(i))] -= g[static_cast<size_t>(i)];
                        }
                        return;
                    case Op::mul:
                        for (int64_t i = 0; i < n; ++i) {
                            const int64_t j = mmap.index(i);
                            da[static_cast<size_t>(i)] += g[static_cast<size_t>(i)] * b.at(j);
                            db[static_cast<size_t>(j)] += g[static_cast<size_t>(i)] * a.at(i);
                        }
                        return;
                    default:
                        for (int64_t i = 0; i < n; ++i) {
                            const int64_t j = mmap.index(i);
                            const double bj = b.at(j);
                            da[static_cast<size_t>(i)] += g[static_cast<size_t>(i)] / bj;
                            db[static_cast<size_t>(j)] -=
                                g[static_cast<size_t>(i)] * a.at(i) / (bj * bj);
                        }
                        return;
                }
            }

            case Op::concat: {
                const AxisSplit sp = axis_split(nd.value.shape, nd.args.axis);
                int64_t prefix = 0;
                for (int pid : nd.parents) {
                    const Tensor& part = value_of(pid);
                    const int64_t ax = part.shape[static_cast<size_t>(nd.args.axis)];
                    std::vector<double>& dp = grad_of(pid);
                    for (int64_t o = 0; o < sp.outer; ++o) {
                        const double* src = g.data() + (o * sp.axis + prefix) * sp.inner;
                        double* dst = dp.data() + o * ax * sp.inner;
                        for (int64_t q = 0; q < ax * sp.inner; ++q) dst[q] += src[q];
                    }
                    prefix += ax;
                }
                return;
            }

            case Op::slice: {
                const Tensor& x = value_of(nd.parents[0]);
                const AxisSplit sp = axis_split(x.shape, nd.args.axis);
                std::vector<double>& dx = grad_of(nd.parents[0]);
                for (int64_t o = 0; o < sp.outer; ++o) {
                    const double* src = g.data() + o * nd.args.len * sp.inner;
                    double* dst = dx.data() + (o * sp.axis + nd.args.start) * sp.inner;
                    for (int64_t q = 0; q < nd.args.len * sp.inner; ++q) dst[q] += src[q];
                }
                return;
            }

            case Op::reshape: {
                std::vector<double>& dx = grad_of(nd.parents[0]);
                for (size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
                return;
            }

            case Op::softmax: {
                const Tensor& y = nd.value;
                const int64_t c = y.shape.back();
                const int64_t rows = y.numel() / c;
                std::vector<double>& dx = grad_of(nd.parents[0]);
                for (int64_t r = 0; r < rows; ++r) {
                    const double* yr = y.data.data() + r * c;
                    const double* gr = g.data() + r * c;
                    double dot = 0.0;
                    for (int64_t j = 0; j < c; ++j) dot += gr[j] * yr[j];
                    double* dr = dx.data() + r * c;
                    for (int64_t j = 0; j < c; ++j) dr[j] += yr[j] * (gr[j] - dot);
                }
                return;
            }

            case Op::sum: {
                std::vector<double>& dx = grad_of(nd.parents[0]);
                for (double& v : dx) v += g[0];
                return;
            }
            case Op::mean: {
                std::vector<double>& dx = grad_of(nd.parents[0]);
                const double s = g[0] / static_cast<double>(dx.size());
                for (double& v : dx) v += s;
                return;
            }

            default: {
                const Tensor& x = value_of(nd.parents[0]);
                const Tensor& y = nd.value;
                std::vector<double>& dx = grad_of(nd.parents[0]);
                const int64_t n = x.numel();
                switch (nd.op) {
                    case Op::leaky_relu: {
                        const double s = nd.args.c;
                        for (int64_t i = 0; i < n; ++i)
                            dx[static_cast<size_t>(i)] +=
                                g[static_cast<size_t>(i)] * (x.at(i) >= 0.0 ? 1.0 : s);
                        return;
                    }
                    case Op::sigmoid:
                        for (int64_t i = 0; i < n; ++i)
                            dx[static_cast<size_t>(i)] +=
                                g[static_cast<size_t>(i)] * y.at(i) * (1.0 - y.at(i));
                        return;
                    case Op::tanh:
                        for (int64_t i = 0; i < n; ++i)
                            dx[static_cast<size_t>(i)] +=
                                g[static_cast<size_t>(i)] * (1.0 - y.at(i) * y.at(i));
                        return;
                    case Op::log:
                        for (int64_t i = 0; i < n; ++i)
                            dx[static_cast<size_t>(i)] += g[static_cast<size_t>(i)] / x.at(i);
                        return;
                    case Op::exp:
                        for (int64_t i = 0; i < n; ++i)
                            dx[static_cast<size_t>(i)] += g[static_cast<size_t>(i)] * y.at(i);
                        return;
                    case Op::neg:
                        for (int64_t i = 0; i < n; ++i)
                            dx[static_cast<size_t>(i)] -= g[static_cast<size_t>(i)];
                        return;
                    case Op::square:
                        for (int64_t i = 0; i < n; ++i)
                            dx[static_cast<size_t>(i)] += g[static_cast<size_t>(i)] * 2.0 * x.at(i);
                        return;
                    case Op::sqrt:
                        for (int64_t i = 0; i < n; ++i)
                            dx[static_cast<size_t>(i)] += g[static_cast<size_t>(i)] * 0.5 / y.at(i);
                        return;
                    case Op::softplus:
                        // d softplus(x) = sigmoid(x) = 1 - exp(-softplus(x))
                        for (int64_t i = 0; i < n; ++i)
                            dx[static_cast<size_t>(i)] +=
                                g[static_cast<size_t>(i)] * (1.0 - std::exp(-y.at(i)));
                        return;
                    case Op::scale:
                        for (int64_t i = 0; i < n; ++i)
                            dx[static_cast<size_t>(i)] += g[static_cast<size_t>(i)] * nd.args.c;
                        return;
                    case Op::add_scalar:
                        for (int64_t i = 0; i < n; ++i)
                            dx[static_cast<size_t>(i)] += g[static_cast<size_t>(i)];
                        return;
                    default:
                        throw DitedError(std::string("backward: unhandled op ") + op_name(nd.op));
                }
            }
        }
    }

    Graph& g_;
    std::vector<std::vector<double>> adj_;
};

GradientMap Graph::backward(const Tensor& loss) {
    if (consumed_) throw DitedError("backward: graph already consumed");
    if (!loss.tracked() || loss.node >= static_cast<int>(nodes_.size()))
        throw DitedError("backward: loss is not tracked on this graph");
    if (loss.numel() != 1)
        throw DitedError("backward: loss must be scalar, got shape " + shape_str(loss.shape));
    consumed_ = true;
    BackwardPass pass(*this);
    return pass.run(loss);
}

// ---------------------------------------------------------------------------
// op helpers

namespace ops {

namespace {
Tensor run(Graph* g, Op op, const std::vector<Tensor>& in, OpArgs args = {}) {
    bool tracked = false;
    for (const Tensor& t : in) tracked = tracked || t.tracked();
    if (!tracked) {
        std::vector<const Tensor*> ptrs;
        ptrs.reserve(in.size());
        for (const Tensor& t : in) ptrs.push_back(&t);
        return eval_op(op, args, ptrs);
    }
    if (!g) throw DitedError(std::string(op_name(op)) + ": tracked input requires a graph");
    return g->apply(op, in, std::move(args));
}
}  // namespace

Tensor matmul(Graph* g, const Tensor& a, const Tensor& b) { return run(g, Op::matmul, {a, b}); }
Tensor add(Graph* g, const Tensor& a, const Tensor& b) { return run(g, Op::add, {a, b}); }
Tensor sub(Graph* g, const Tensor& a, const Tensor& b) { return run(g, Op::sub, {a, b}); }
Tensor mul(Graph* g, const Tensor& a, const Tensor& b) { return run(g, Op::mul, {a, b}); }
Tensor div(Graph* g, const Tensor& a, const Tensor& b) { return run(g, Op::div, {a, b}); }

Tensor concat(Graph* g, const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw DitedError("concat: no inputs");
    OpArgs args;
    args.axis = axis;
    return run(g, Op::concat, parts, args);
}

Tensor slice(Graph* g, const Tensor& x, int axis, int64_t start, int64_t len) {
    OpArgs args;
    args.axis = axis;
    args.start = start;
    args.len = len;
    return run(g, Op::slice, {x}, args);
}

Tensor reshape(Graph* g, const Tensor& x, Shape target) {
    OpArgs args;
    args.target_shape = std::move(target);
    return run(g, Op::reshape, {x}, args);
}

Tensor leaky_relu(Graph* g, const Tensor& x, double slope) {
    OpArgs args;
    args.c = slope;
    return run(g, Op::leaky_relu, {x}, args);
}

Tensor sigmoid(Graph* g, const Tensor& x) { return run(g, Op::sigmoid, {x}); }
Tensor tanh(Graph* g, const Tensor& x) { return run(g, Op::tanh, {x}); }
Tensor softmax(Graph* g, const Tensor& x) { return run(g, Op::softmax, {x}); }
Tensor log(Graph* g, const Tensor& x) { return run(g, Op::log, {x}); }
Tensor exp(Graph* g, const Tensor& x) { return run(g, Op::exp, {x}); }
Tensor neg(Graph* g, const Tensor& x) { return run(g, Op::neg, {x}); }
Tensor sum(Graph* g, const Tensor& x) { return run(g, Op::sum, {x}); }
Tensor mean(Graph* g, const Tensor& x) { return run(g, Op::mean, {x}); }
Tensor square(Graph* g, const Tensor& x) { return run(g, Op::square, {x}); }
Tensor sqrt(Graph* g, const Tensor& x) { return run(g, Op::sqrt, {x}); }
Tensor softplus(Graph* g, const Tensor& x) { return run(g, Op::softplus, {x}); }

Tensor scale(Graph* g, const Tensor& x, double c) {
    OpArgs args;
    args.c = c;
    return run(g, Op::scale, {x}, args);
}

Tensor add_scalar(Graph* g, const Tensor& x, double c) {
    OpArgs args;
    args.c = c;
    return run(g, Op::add_scalar, {x}, args);
}

Tensor linear(Graph* g, const Tensor& x, const Tensor& w, const Tensor& b) {
    return add(g, matmul(g, x, w), b);
}

}  // namespace ops

}  // namespace dited
