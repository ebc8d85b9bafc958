#pragma once

// Tape-based reverse-mode differentiation over dense row-major tensors.
// Gradients are themselves recorded on the tape, so second- and third-order
// terms fall out of calling grad() on expressions built from earlier grad()
// results. All arithmetic is double precision.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace l2t {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string r = "(";
    for (size_t i = 0; i < s.size(); ++i) r += (i ? "," : "") + std::to_string(s[i]);
    return r + ")";
}

class AutodiffError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Tape;

// Dense tensor. Data is immutable and shared; a tensor optionally carries a
// handle to the tape node that produced it. Tensors without a node are
// constants and receive no gradient.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data)
        : shape_(std::move(shape)),
          data_(std::make_shared<const std::vector<double>>(std::move(data))) {
        if (static_cast<int64_t>(data_->size()) != numel(shape_))
            throw AutodiffError("tensor data length does not match shape " + shape_str(shape_));
    }

    static Tensor scalar(double v) { return Tensor(Shape{1}, {v}); }
    static Tensor zeros(const Shape& s) { return Tensor(s, std::vector<double>(numel(s), 0.0)); }

    bool defined() const { return data_ != nullptr; }
    const Shape& shape() const { return shape_; }
    int64_t size() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }
    const std::vector<double>& data() const { return *data_; }
    double value() const {
        if (size() != 1) throw AutodiffError("value() on non-scalar tensor " + shape_str(shape_));
        return (*data_)[0];
    }

    Tape* tape() const { return tape_; }
    int node() const { return node_; }
    bool on_tape() const { return tape_ != nullptr; }

    // Constant copy of the same values, off any tape.
    Tensor detached() const {
        Tensor t;
        t.shape_ = shape_;
        t.data_ = data_;
        return t;
    }

private:
    friend class Tape;
    Shape shape_;
    std::shared_ptr<const std::vector<double>> data_;
    Tape* tape_ = nullptr;
    int node_ = -1;
};

enum class OpKind {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Scale,      // alpha * x
    AddScalar,  // x + alpha
    MatMul,
    Transpose,
    LeakyRelu,  // alpha = slope
    Sigmoid,
    Tanh,
    Exp,
    Log,
    Square,
    SumAll,
    SumAxis,    // axis in attr
    MeanAll,
    MeanAxis,
    Concat,     // along axis
    Slice,      // axis, start, len
    PadSlice,   // inverse of Slice: place into zeros of target shape
    Reshape,
    GatherCols,  // (B,C) with per-row column index -> (B,1)
    ScatterCols, // (B,1) with per-row column index -> (B,C) zeros elsewhere
};

inline const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::Leaf: return "leaf";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
        case OpKind::Div: return "div";
        case OpKind::Scale: return "scale";
        case OpKind::AddScalar: return "add_scalar";
        case OpKind::MatMul: return "matmul";
        case OpKind::Transpose: return "transpose";
        case OpKind::LeakyRelu: return "leaky_relu";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::Tanh: return "tanh";
        case OpKind::Exp: return "exp";
        case OpKind::Log: return "log";
        case OpKind::Square: return "square";
        case OpKind::SumAll: return "sum";
        case OpKind::SumAxis: return "sum_axis";
        case OpKind::MeanAll: return "mean";
        case OpKind::MeanAxis: return "mean_axis";
        case OpKind::Concat: return "concat";
        case OpKind::Slice: return "slice";
        case OpKind::PadSlice: return "pad_slice";
        case OpKind::Reshape: return "reshape";
        case OpKind::GatherCols: return "gather_cols";
        case OpKind::ScatterCols: return "scatter_cols";
    }
    return "?";
}

struct Node {
    OpKind kind = OpKind::Leaf;
    std::vector<Tensor> in;  // operand values (constants included)
    Tensor out;
    double alpha = 0.0;
    int axis = -1;
    int64_t start = 0, len = 0;
    Shape target;                // Reshape / PadSlice target shape
    std::vector<int64_t> index;  // GatherCols / ScatterCols row indices
};

// Append-only op record. Parents always precede children, so a reverse id
// sweep is a valid reverse-topological order.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    std::vector<Node> nodes;

    Tensor leaf(Shape shape, std::vector<double> data) {
        Tensor t(std::move(shape), std::move(data));
        check_finite(t, OpKind::Leaf, static_cast<int>(nodes.size()));
        Node n;
        n.kind = OpKind::Leaf;
        t.tape_ = this;
        t.node_ = static_cast<int>(nodes.size());
        n.out = t;
        nodes.push_back(std::move(n));
        return t;
    }

    Tensor leaf(const Tensor& values) { return leaf(values.shape(), values.data()); }

    int mark() const { return static_cast<int>(nodes.size()); }
    void truncate(int m) { nodes.resize(m); }

    Tensor record(Node n) {
        check_finite(n.out, n.kind, static_cast<int>(nodes.size()));
        n.out.tape_ = this;
        n.out.node_ = static_cast<int>(nodes.size());
        Tensor out = n.out;
        nodes.push_back(std::move(n));
        return out;
    }

    // Recompute every node's forward value from its recorded operands and
    // compare bit-for-bit against what was stored.
    bool replay_matches() const;

    static void check_finite(const Tensor& t, OpKind k, int id) {
        for (double v : t.data())
            if (!std::isfinite(v))
                throw AutodiffError(std::string("non-finite value in ") + op_name(k) +
                                    " (node " + std::to_string(id) + ")");
    }
};

namespace detail {

inline Tape* common_tape(const std::vector<Tensor>& ops) {
    Tape* t = nullptr;
    for (const auto& x : ops) {
        if (!x.on_tape()) continue;
        if (t && t != x.tape()) throw AutodiffError("operands live on different tapes");
        t = x.tape();
    }
    return t;
}

// Record if any operand is on a tape, otherwise return a checked constant.
inline Tensor finish(Node n) {
    Tape* t = common_tape(n.in);
    if (!t) {
        Tape::check_finite(n.out, n.kind, -1);
        return n.out;
    }
    return t->record(std::move(n));
}

// Elementwise broadcast: identical shapes, a 1-element operand against
// anything, or a (B,1)/(1,C) operand against (B,C).
inline Shape broadcast_shape(const Shape& a, const Shape& b) {
    if (a == b) return a;
    if (numel(b) == 1) return a;
    if (numel(a) == 1) return b;
    if (a.size() == 2 && b.size() == 2) {
        if (b[0] == a[0] && b[1] == 1) return a;
        if (b[0] == 1 && b[1] == a[1]) return a;
        if (a[0] == b[0] && a[1] == 1) return b;
        if (a[0] == 1 && a[1] == b[1]) return b;
    }
    throw AutodiffError("shapes not broadcastable: " + shape_str(a) + " vs " + shape_str(b));
}

// Map a flat index in the broadcast output to a flat index in operand x.
struct BcIndex {
    int64_t rows, cols;   // output view as 2-D (rows=1 for 1-D)
    int64_t xr, xc;       // operand dims
    bool scalar;
    BcIndex(const Shape& out, const Shape& x) {
        rows = out.size() == 2 ? out[0] : 1;
        cols = out.size() == 2 ? out[1] : numel(out);
        scalar = numel(x) == 1;
        xr = x.size() == 2 ? x[0] : 1;
        xc = x.size() == 2 ? x[1] : numel(x);
    }
    int64_t operator()(int64_t i) const {
        if (scalar) return 0;
        int64_t r = i / cols, c = i % cols;
        int64_t rr = xr == 1 ? 0 : r;
        int64_t cc = xc == 1 ? 0 : c;
        return rr * xc + cc;
    }
};

template <class F>
inline Tensor binary_elementwise(OpKind k, const Tensor& a, const Tensor& b, F f) {
    Shape os = broadcast_shape(a.shape(), b.shape());
    BcIndex ia(os, a.shape()), ib(os, b.shape());
    std::vector<double> out(numel(os));
    for (int64_t i = 0; i < static_cast<int64_t>(out.size()); ++i)
        out[i] = f(a.data()[ia(i)], b.data()[ib(i)]);
    Node n;
    n.kind = k;
    n.in = {a, b};
    n.out = Tensor(os, std::move(out));
    return finish(std::move(n));
}

template <class F>
inline Tensor unary_elementwise(OpKind k, const Tensor& a, F f, double alpha = 0.0) {
    std::vector<double> out(a.size());
    for (int64_t i = 0; i < a.size(); ++i) out[i] = f(a.data()[i]);
    Node n;
    n.kind = k;
    n.in = {a};
    n.alpha = alpha;
    n.out = Tensor(a.shape(), std::move(out));
    return finish(std::move(n));
}

}  // namespace detail

// ---- forward ops ----

inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::binary_elementwise(OpKind::Add, a, b, [](double x, double y) { return x + y; });
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::binary_elementwise(OpKind::Sub, a, b, [](double x, double y) { return x - y; });
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
    return detail::binary_elementwise(OpKind::Mul, a, b, [](double x, double y) { return x * y; });
}
inline Tensor div(const Tensor& a, const Tensor& b) {
    return detail::binary_elementwise(OpKind::Div, a, b, [](double x, double y) { return x / y; });
}

inline Tensor scale(const Tensor& a, double c) {
    return detail::unary_elementwise(OpKind::Scale, a, [c](double x) { return c * x; }, c);
}
inline Tensor add_scalar(const Tensor& a, double c) {
    return detail::unary_elementwise(OpKind::AddScalar, a, [c](double x) { return x + c; }, c);
}
inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
        throw AutodiffError("matmul shape mismatch: " + shape_str(a.shape()) + " x " +
                            shape_str(b.shape()));
    int64_t m = a.shape()[0], k = a.shape()[1], nn = b.shape()[1];
    std::vector<double> out(m * nn, 0.0);
    const auto& A = a.data();
    const auto& B = b.data();
    for (int64_t i = 0; i < m; ++i)
        for (int64_t p = 0; p < k; ++p) {
            double av = A[i * k + p];
            if (av == 0.0) continue;
            const double* brow = B.data() + p * nn;
            double* orow = out.data() + i * nn;
            for (int64_t j = 0; j < nn; ++j) orow[j] += av * brow[j];
        }
    Node n;
    n.kind = OpKind::MatMul;
    n.in = {a, b};
    n.out = Tensor({m, nn}, std::move(out));
    return detail::finish(std::move(n));
}

inline Tensor transpose(const Tensor& a) {
    if (a.shape().size() != 2) throw AutodiffError("transpose expects rank-2 tensor");
    int64_t m = a.shape()[0], c = a.shape()[1];
    std::vector<double> out(m * c);
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < c; ++j) out[j * m + i] = a.data()[i * c + j];
    Node n;
    n.kind = OpKind::Transpose;
    n.in = {a};
    n.out = Tensor({c, m}, std::move(out));
    return detail::finish(std::move(n));
}

inline Tensor leaky_relu(const Tensor& a, double slope = 0.01) {
    return detail::unary_elementwise(
        OpKind::LeakyRelu, a, [slope](double x) { return x >= 0.0 ? x : slope * x; }, slope);
}
inline Tensor sigmoid(const Tensor& a) {
    return detail::unary_elementwise(OpKind::Sigmoid, a, [](double x) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    });
}
inline Tensor tanh(const Tensor& a) {
    return detail::unary_elementwise(OpKind::Tanh, a, [](double x) { return std::tanh(x); });
}
inline Tensor exp(const Tensor& a) {
    return detail::unary_elementwise(OpKind::Exp, a, [](double x) { return std::exp(x); });
}
inline Tensor log(const Tensor& a) {
    return detail::unary_elementwise(OpKind::Log, a, [](double x) { return std::log(x); });
}
inline Tensor square(const Tensor& a) {
    return detail::unary_elementwise(OpKind::Square, a, [](double x) { return x * x; });
}

inline Tensor sum(const Tensor& a) {
    double s = std::accumulate(a.data().begin(), a.data().end(), 0.0);
    Node n;
    n.kind = OpKind::SumAll;
    n.in = {a};
    n.out = Tensor::scalar(s);
    return detail::finish(std::move(n));
}

inline Tensor sum(const Tensor& a, int axis) {
    if (a.shape().size() != 2 || (axis != 0 && axis != 1))
        throw AutodiffError("sum(axis) expects rank-2 tensor and axis in {0,1}");
    int64_t m = a.shape()[0], c = a.shape()[1];
    Shape os = axis == 0 ? Shape{1, c} : Shape{m, 1};
    std::vector<double> out(numel(os), 0.0);
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < c; ++j) out[axis == 0 ? j : i] += a.data()[i * c + j];
    Node n;
    n.kind = OpKind::SumAxis;
    n.in = {a};
    n.axis = axis;
    n.out = Tensor(os, std::move(out));
    return detail::finish(std::move(n));
}

inline Tensor mean(const Tensor& a) {
    double s = std::accumulate(a.data().begin(), a.data().end(), 0.0);
    Node n;
    n.kind = OpKind::MeanAll;
    n.in = {a};
    n.out = Tensor::scalar(s / static_cast<double>(a.size()));
    return detail::finish(std::move(n));
}

inline Tensor mean(const Tensor& a, int axis) {
    if (a.shape().size() != 2 || (axis != 0 && axis != 1))
        throw AutodiffError("mean(axis) expects rank-2 tensor and axis in {0,1}");
    int64_t m = a.shape()[0], c = a.shape()[1];
    int64_t count = axis == 0 ? m : c;
    Shape os = axis == 0 ? Shape{1, c} : Shape{m, 1};
    std::vector<double> out(numel(os), 0.0);
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < c; ++j) out[axis == 0 ? j : i] += a.data()[i * c + j];
    for (double& v : out) v /= static_cast<double>(count);
    Node n;
    n.kind = OpKind::MeanAxis;
    n.in = {a};
    n.axis = axis;
    n.out = Tensor(os, std::move(out));
    return detail::finish(std::move(n));
}

inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw AutodiffError("concat of zero tensors");
    Shape base = parts[0].shape();
    if (base.size() != 2 || (axis != 0 && axis != 1))
        throw AutodiffError("concat expects rank-2 tensors and axis in {0,1}");
    int64_t along = 0;
    for (const auto& p : parts) {
        if (p.shape().size() != 2 || p.shape()[1 - axis] != base[1 - axis])
            throw AutodiffError("concat shape mismatch");
        along += p.shape()[axis];
    }
    Shape os = base;
    os[axis] = along;
    std::vector<double> out(numel(os));
    int64_t off = 0;
    for (const auto& p : parts) {
        int64_t pm = p.shape()[0], pc = p.shape()[1];
        for (int64_t i = 0; i < pm; ++i)
            for (int64_t j = 0; j < pc; ++j) {
                int64_t r = axis == 0 ? off + i : i;
                int64_t cidx = axis == 1 ? off + j : j;
                out[r * os[1] + cidx] = p.data()[i * pc + j];
            }
        off += p.shape()[axis];
    }
    Node n;
    n.kind = OpKind::Concat;
    n.in = parts;
    n.axis = axis;
    n.out = Tensor(os, std::move(out));
    return detail::finish(std::move(n));
}

inline Tensor slice(const Tensor& a, int axis, int64_t start, int64_t len) {
    if (a.shape().size() != 2 || (axis != 0 && axis != 1))
        throw AutodiffError("slice expects rank-2 tensor and axis in {0,1}");
    if (start < 0 || len < 0 || start + len > a.shape()[axis])
        throw AutodiffError("slice range out of bounds");
    int64_t m = a.shape()[0], c = a.shape()[1];
    Shape os = axis == 0 ? Shape{len, c} : Shape{m, len};
    std::vector<double> out(numel(os));
    for (int64_t i = 0; i < os[0]; ++i)
        for (int64_t j = 0; j < os[1]; ++j) {
            int64_t r = axis == 0 ? start + i : i;
            int64_t cc = axis == 1 ? start + j : j;
            out[i * os[1] + j] = a.data()[r * c + cc];
        }
    Node n;
    n.kind = OpKind::Slice;
    n.in = {a};
    n.axis = axis;
    n.start = start;
    n.len = len;
    n.out = Tensor(os, std::move(out));
    return detail::finish(std::move(n));
}

// Place `a` into a zero tensor of shape `target` at offset `start` along
// `axis`. Adjoint counterpart of slice.
inline Tensor pad_slice(const Tensor& a, int axis, int64_t start, const Shape& target) {
    if (a.shape().size() != 2 || target.size() != 2)
        throw AutodiffError("pad_slice expects rank-2 tensors");
    std::vector<double> out(numel(target), 0.0);
    int64_t pm = a.shape()[0], pc = a.shape()[1];
    for (int64_t i = 0; i < pm; ++i)
        for (int64_t j = 0; j < pc; ++j) {
            int64_t r = axis == 0 ? start + i : i;
            int64_t cc = axis == 1 ? start + j : j;
            out[r * target[1] + cc] = a.data()[i * pc + j];
        }
    Node n;
    n.kind = OpKind::PadSlice;
    n.in = {a};
    n.axis = axis;
    n.start = start;
    n.target = target;
    n.out = Tensor(target, std::move(out));
    return detail::finish(std::move(n));
}

inline Tensor reshape(const Tensor& a, Shape target) {
    if (numel(target) != a.size())
        throw AutodiffError("reshape element count mismatch: " + shape_str(a.shape()) + " -> " +
                            shape_str(target));
    Node n;
    n.kind = OpKind::Reshape;
    n.in = {a};
    n.target = target;
    n.out = Tensor(std::move(target), a.data());
    return detail::finish(std::move(n));
}

// Pick data[i, idx[i]] from each row, producing (B,1).
inline Tensor gather_cols(const Tensor& a, std::vector<int64_t> idx) {
    if (a.shape().size() != 2) throw AutodiffError("gather_cols expects rank-2 tensor");
    int64_t m = a.shape()[0], c = a.shape()[1];
    if (static_cast<int64_t>(idx.size()) != m)
        throw AutodiffError("gather_cols index count mismatch");
    std::vector<double> out(m);
    for (int64_t i = 0; i < m; ++i) {
        if (idx[i] < 0 || idx[i] >= c)
            throw AutodiffError("gather_cols index out of range: " + std::to_string(idx[i]));
        out[i] = a.data()[i * c + idx[i]];
    }
    Node n;
    n.kind = OpKind::GatherCols;
    n.in = {a};
    n.index = std::move(idx);
    n.len = c;
    n.out = Tensor({m, 1}, std::move(out));
    return detail::finish(std::move(n));
}

inline Tensor scatter_cols(const Tensor& a, std::vector<int64_t> idx, int64_t cols) {
    if (a.shape().size() != 2 || a.shape()[1] != 1)
        throw AutodiffError("scatter_cols expects a (B,1) tensor");
    int64_t m = a.shape()[0];
    std::vector<double> out(m * cols, 0.0);
    for (int64_t i = 0; i < m; ++i) out[i * cols + idx[i]] = a.data()[i];
    Node n;
    n.kind = OpKind::ScatterCols;
    n.in = {a};
    n.index = std::move(idx);
    n.len = cols;
    n.out = Tensor({m, cols}, std::move(out));
    return detail::finish(std::move(n));
}

// Row-wise log-sum-exp with a constant max shift; overflow-safe by
// construction. Input (B,C), output (B,1).
inline Tensor logsumexp_rows(const Tensor& a) {
    if (a.shape().size() != 2) throw AutodiffError("logsumexp_rows expects rank-2 tensor");
    int64_t m = a.shape()[0], c = a.shape()[1];
    std::vector<double> mx(m, -1e300);
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < c; ++j) mx[i] = std::max(mx[i], a.data()[i * c + j]);
    Tensor shift({m, 1}, std::move(mx));
    Tensor z = sub(a, shift);  // entries <= 0
    return add(log(sum(exp(z), 1)), shift);
}

inline Tensor softmax_rows(const Tensor& a) { return exp(sub(a, logsumexp_rows(a))); }

// ---- reverse-mode differentiation ----

namespace detail {

// Reduce a broadcast-shaped adjoint back to the operand's shape, using
// recorded ops so the result stays differentiable.
inline Tensor reduce_to(const Tensor& adj, const Shape& target) {
    if (adj.shape() == target) return adj;
    if (numel(target) == 1) return reshape(sum(adj), target);
    Tensor r = adj;
    if (target.size() == 2 && adj.shape().size() == 2) {
        if (target[0] == 1 && adj.shape()[0] != 1) r = sum(r, 0);
        if (target[1] == 1 && adj.shape()[1] != 1) r = sum(r, 1);
    }
    if (r.shape() != target) r = reshape(r, target);
    return r;
}

inline std::vector<Tensor> backward(const Node& n, const Tensor& adj) {
    switch (n.kind) {
        case OpKind::Add:
            return {reduce_to(adj, n.in[0].shape()), reduce_to(adj, n.in[1].shape())};
        case OpKind::Sub:
            return {reduce_to(adj, n.in[0].shape()), reduce_to(neg(adj), n.in[1].shape())};
        case OpKind::Mul:
            return {reduce_to(mul(adj, n.in[1]), n.in[0].shape()),
                    reduce_to(mul(adj, n.in[0]), n.in[1].shape())};
        case OpKind::Div:
            return {reduce_to(div(adj, n.in[1]), n.in[0].shape()),
                    reduce_to(neg(mul(adj, div(n.out, n.in[1]))), n.in[1].shape())};
        case OpKind::Scale:
            return {scale(adj, n.alpha)};
        case OpKind::AddScalar:
            return {adj};
        case OpKind::MatMul:
            return {matmul(adj, transpose(n.in[1])), matmul(transpose(n.in[0]), adj)};
        case OpKind::Transpose:
            return {transpose(adj)};
        case OpKind::LeakyRelu: {
            std::vector<double> m(n.in[0].size());
            for (int64_t i = 0; i < n.in[0].size(); ++i)
                m[i] = n.in[0].data()[i] >= 0.0 ? 1.0 : n.alpha;
            return {mul(adj, Tensor(n.in[0].shape(), std::move(m)))};
        }
        case OpKind::Sigmoid:
            return {mul(adj, sub(n.out, square(n.out)))};
        case OpKind::Tanh:
            return {mul(adj, add_scalar(neg(square(n.out)), 1.0))};
        case OpKind::Exp:
            return {mul(adj, n.out)};
        case OpKind::Log:
            return {div(adj, n.in[0])};
        case OpKind::Square:
            return {mul(adj, scale(n.in[0], 2.0))};
        case OpKind::SumAll:
        case OpKind::SumAxis:
            return {add(Tensor::zeros(n.in[0].shape()), adj)};
        case OpKind::MeanAll:
            return {scale(add(Tensor::zeros(n.in[0].shape()), adj),
                          1.0 / static_cast<double>(n.in[0].size()))};
        case OpKind::MeanAxis: {
            int64_t count = n.axis == 0 ? n.in[0].shape()[0] : n.in[0].shape()[1];
            return {scale(add(Tensor::zeros(n.in[0].shape()), adj), 1.0 / count)};
        }
        case OpKind::Concat: {
            std::vector<Tensor> adjs;
            int64_t off = 0;
            for (const auto& p : n.in) {
                adjs.push_back(slice(adj, n.axis, off, p.shape()[n.axis]));
                off += p.shape()[n.axis];
            }
            return adjs;
        }
        case OpKind::Slice:
            return {pad_slice(adj, n.axis, n.start, n.in[0].shape())};
        case OpKind::PadSlice:
            return {slice(adj, n.axis, n.start, n.in[0].shape()[n.axis])};
        case OpKind::Reshape:
            return {reshape(adj, n.in[0].shape())};
        case OpKind::GatherCols:
            return {scatter_cols(adj, n.index, n.len)};
        case OpKind::ScatterCols:
            return {gather_cols(adj, n.index)};
        case OpKind::Leaf:
            return {};
    }
    throw AutodiffError("backward: unhandled op");
}

}  // namespace detail

// Gradient of a scalar output with respect to each tensor in `wrt`.
// The returned tensors are recorded on the same tape, so any scalar function
// of them can itself be differentiated. Tensors not reachable from the output
// get an exactly-zero constant gradient.
inline std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& wrt) {
    if (output.size() != 1)
        throw AutodiffError("grad expects a scalar output, got " + shape_str(output.shape()));
    std::vector<Tensor> result;
    result.reserve(wrt.size());
    if (!output.on_tape()) {
        for (const auto& w : wrt) result.push_back(Tensor::zeros(w.shape()));
        return result;
    }
    Tape& tp = *output.tape();
    const int top = output.node();
    std::vector<Tensor> adj(static_cast<size_t>(top) + 1);
    adj[top] = Tensor(output.shape(), std::vector<double>(1, 1.0));
    for (int id = top; id >= 0; --id) {
        if (!adj[id].defined()) continue;
        Node nd = tp.nodes[id];  // copy: the tape grows while we record adjoints
        if (nd.kind == OpKind::Leaf) continue;
        std::vector<Tensor> in_adjs = detail::backward(nd, adj[id]);
        for (size_t k = 0; k < nd.in.size(); ++k) {
            const Tensor& in = nd.in[k];
            if (!in.on_tape() || in.tape() != &tp) continue;
            int iid = in.node();
            adj[iid] = adj[iid].defined() ? add(adj[iid], in_adjs[k]) : in_adjs[k];
        }
    }
    for (const auto& w : wrt) {
        if (w.on_tape() && w.tape() == &tp && w.node() <= top && adj[w.node()].defined())
            result.push_back(adj[w.node()]);
        else
            result.push_back(Tensor::zeros(w.shape()));
    }
    return result;
}

inline Tensor grad(const Tensor& output, const Tensor& wrt) { return grad(output, std::vector<Tensor>{wrt})[0]; }

// Inner product of two tensor lists, recorded on the tape.
inline Tensor dot(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    if (a.size() != b.size()) throw AutodiffError("dot: list length mismatch");
    Tensor acc;
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i].shape() != b[i].shape())
            throw AutodiffError("dot: shape mismatch at entry " + std::to_string(i));
        Tensor s = sum(mul(a[i], b[i]));
        acc = acc.defined() ? add(acc, s) : s;
    }
    return acc;
}

// (d2f/dparams2) . v, with v treated as a constant.
inline std::vector<Tensor> hvp(const Tensor& f, const std::vector<Tensor>& params,
                               const std::vector<Tensor>& v) {
    if (params.size() != v.size()) throw AutodiffError("hvp: params/v length mismatch");
    std::vector<Tensor> vc;
    for (size_t i = 0; i < v.size(); ++i) {
        if (v[i].shape() != params[i].shape())
            throw AutodiffError("hvp: v shape mismatch at entry " + std::to_string(i));
        vc.push_back(v[i].detached());
    }
    std::vector<Tensor> g = grad(f, params);
    return grad(dot(g, vc), params);
}

inline Tensor hvp(const Tensor& f, const Tensor& params, const Tensor& v) {
    return hvp(f, std::vector<Tensor>{params}, std::vector<Tensor>{v})[0];
}

// Mixed second-order product: (d2f/dp1 dp2) . v == d/dp2 <df/dp1, v>.
inline std::vector<Tensor> hvp_mixed(const Tensor& f, const std::vector<Tensor>& p1,
                                     const std::vector<Tensor>& p2, const std::vector<Tensor>& v) {
    if (p1.size() != v.size()) throw AutodiffError("hvp_mixed: p1/v length mismatch");
    std::vector<Tensor> vc;
    for (size_t i = 0; i < v.size(); ++i) {
        if (v[i].shape() != p1[i].shape())
            throw AutodiffError("hvp_mixed: v shape mismatch at entry " + std::to_string(i));
        vc.push_back(v[i].detached());
    }
    std::vector<Tensor> g = grad(f, p1);
    return grad(dot(g, vc), p2);
}

inline Tensor hvp_mixed(const Tensor& f, const Tensor& p1, const Tensor& p2, const Tensor& v) {
    return hvp_mixed(f, std::vector<Tensor>{p1}, std::vector<Tensor>{p2}, std::vector<Tensor>{v})[0];
}

inline bool Tape::replay_matches() const {
    // Forward-recompute each non-leaf node from its stored operand values on
    // a scratch tape and compare bitwise.
    for (const Node& n : nodes) {
        if (n.kind == OpKind::Leaf) continue;
        std::vector<Tensor> cin;
        for (const auto& t : n.in) cin.push_back(t.detached());
        Tensor redo;
        switch (n.kind) {
            case OpKind::Add: redo = add(cin[0], cin[1]); break;
            case OpKind::Sub: redo = sub(cin[0], cin[1]); break;
            case OpKind::Mul: redo = mul(cin[0], cin[1]); break;
            case OpKind::Div: redo = div(cin[0], cin[1]); break;
            case OpKind::Scale: redo = scale(cin[0], n.alpha); break;
            case OpKind::AddScalar: redo = add_scalar(cin[0], n.alpha); break;
            case OpKind::MatMul: redo = matmul(cin[0], cin[1]); break;
            case OpKind::Transpose: redo = transpose(cin[0]); break;
            case OpKind::LeakyRelu: redo = leaky_relu(cin[0], n.alpha); break;
            case OpKind::Sigmoid: redo = sigmoid(cin[0]); break;
            case OpKind::Tanh: redo = l2t::tanh(cin[0]); break;
            case OpKind::Exp: redo = l2t::exp(cin[0]); break;
            case OpKind::Log: redo = l2t::log(cin[0]); break;
            case OpKind::Square: redo = square(cin[0]); break;
            case OpKind::SumAll: redo = sum(cin[0]); break;
            case OpKind::SumAxis: redo = sum(cin[0], n.axis); break;
            case OpKind::MeanAll: redo = mean(cin[0]); break;
            case OpKind::MeanAxis: redo = mean(cin[0], n.axis); break;
            case OpKind::Concat: redo = concat(cin, n.axis); break;
            case OpKind::Slice: redo = slice(cin[0], n.axis, n.start, n.len); break;
            case OpKind::PadSlice: redo = pad_slice(cin[0], n.axis, n.start, n.target); break;
            case OpKind::Reshape: redo = reshape(cin[0], n.target); break;
            case OpKind::GatherCols: redo = gather_cols(cin[0], n.index); break;
            case OpKind::ScatterCols: redo = scatter_cols(cin[0], n.index, n.len); break;
            case OpKind::Leaf: continue;
        }
        if (redo.data() != n.out.data()) return false;
    }
    return true;
}

}  // namespace l2t
