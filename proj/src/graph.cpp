#include "scoreag/graph.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "scoreag/errors.hpp"
#include "scoreag/kernels.hpp"

namespace scoreag {

const char* op_name(Op op) {
    switch (op) {
        case Op::Input: return "input";
        case Op::Constant: return "constant";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Scale: return "scale";
        case Op::Matmul: return "matmul";
        case Op::Affine: return "affine";
        case Op::Nonlin: return "nonlin";
        case Op::Sum: return "sum";
        case Op::Mean: return "mean";
        case Op::SoftmaxXent: return "softmax_xent";
        case Op::SqError: return "sq_error";
        case Op::Concat: return "concat";
        case Op::Slice: return "slice";
        case Op::Broadcast: return "broadcast";
        case Op::Reshape: return "reshape";
        case Op::Im2col: return "im2col";
        case Op::StopGrad: return "stop_grad";
    }
    return "?";
}

Nonlin nonlin_from_string(const std::string& s) {
    if (s == "relu") return Nonlin::Relu;
    if (s == "tanh") return Nonlin::Tanh;
    if (s == "sigmoid") return Nonlin::Sigmoid;
    if (s == "silu") return Nonlin::Silu;
    throw ConfigError("unknown nonlinearity '" + s + "' (relu|tanh|sigmoid|silu)");
}

std::string nonlin_to_string(Nonlin n) {
    switch (n) {
        case Nonlin::Relu: return "relu";
        case Nonlin::Tanh: return "tanh";
        case Nonlin::Sigmoid: return "sigmoid";
        case Nonlin::Silu: return "silu";
    }
    return "?";
}

void softmax_rows(const double* in, double* out, int64_t rows, int64_t cols) {
    for (int64_t r = 0; r < rows; ++r) {
        const double* x = in + r * cols;
        double* y = out + r * cols;
        double m = x[0];
        for (int64_t j = 1; j < cols; ++j) m = std::max(m, x[j]);
        double z = 0.0;
        for (int64_t j = 0; j < cols; ++j) {
            y[j] = std::exp(x[j] - m);
            z += y[j];
        }
        for (int64_t j = 0; j < cols; ++j) y[j] /= z;
    }
}

namespace {

std::string node_label(const Node& n, int idx) {
    std::ostringstream os;
    os << "node #" << idx << " (" << op_name(n.op);
    if (!n.name.empty()) os << " '" << n.name << "'";
    os << ")";
    return os.str();
}

// Rows/cols view of a 1-D or 2-D tensor, used by Affine and SoftmaxXent.
struct Mat {
    int64_t rows, cols;
};

Mat as_rows(const Tensor& t) {
    if (t.rank() == 1) return {1, t.shape[0]};
    if (t.rank() == 2) return {t.shape[0], t.shape[1]};
    throw ShapeError("expected rank-1 or rank-2 tensor, got " + t.shape_str());
}

} // namespace

int Graph::push(Node&& n) {
    nodes_.push_back(std::move(n));
    int idx = static_cast<int>(nodes_.size()) - 1;
    check_finite(idx);
    return idx;
}

Node& Graph::at(NodeRef r) {
    if (!r.valid() || r.idx >= static_cast<int>(nodes_.size())) {
        throw ContractError("invalid node reference");
    }
    return nodes_[static_cast<size_t>(r.idx)];
}

const Node& Graph::cat(NodeRef r) const {
    if (!r.valid() || r.idx >= static_cast<int>(nodes_.size())) {
        throw ContractError("invalid node reference");
    }
    return nodes_[static_cast<size_t>(r.idx)];
}

void Graph::check_finite(int idx) const {
    const Node& n = nodes_[static_cast<size_t>(idx)];
    if (!n.value.all_finite()) {
        throw OverflowError("non-finite values in " + node_label(n, idx), idx);
    }
}

void Graph::fail_shape(int idx, const std::string& msg) const {
    const Node& n = nodes_[static_cast<size_t>(idx)];
    throw ShapeError(node_label(n, idx) + ": " + msg);
}

NodeRef Graph::input(const std::string& name, Tensor value, bool requires_grad) {
    Node n;
    n.op = Op::Input;
    n.name = name;
    n.value = std::move(value);
    n.needs_grad = requires_grad;
    return {push(std::move(n))};
}

NodeRef Graph::constant(Tensor value, const std::string& name) {
    Node n;
    n.op = Op::Constant;
    n.name = name;
    n.value = std::move(value);
    return {push(std::move(n))};
}

NodeRef Graph::add(NodeRef a, NodeRef b) {
    const Node& na = cat(a);
    const Node& nb = cat(b);
    if (!na.value.same_shape(nb.value)) {
        throw ShapeError("node #" + std::to_string(nodes_.size()) + " (add): shape mismatch " +
                         na.value.shape_str() + " vs " + nb.value.shape_str());
    }
    Node n;
    n.op = Op::Add;
    n.parents = {a.idx, b.idx};
    n.needs_grad = na.needs_grad || nb.needs_grad;
    n.value = Tensor::zeros(na.value.shape);
    kernels::add(na.value.data.data(), nb.value.data.data(), n.value.data.data(), n.value.data.size());
    return {push(std::move(n))};
}

NodeRef Graph::sub(NodeRef a, NodeRef b) {
    const Node& na = cat(a);
    const Node& nb = cat(b);
    if (!na.value.same_shape(nb.value)) {
        throw ShapeError("node #" + std::to_string(nodes_.size()) + " (sub): shape mismatch " +
                         na.value.shape_str() + " vs " + nb.value.shape_str());
    }
    Node n;
    n.op = Op::Sub;
    n.parents = {a.idx, b.idx};
    n.needs_grad = na.needs_grad || nb.needs_grad;
    n.value = Tensor::zeros(na.value.shape);
    kernels::sub(na.value.data.data(), nb.value.data.data(), n.value.data.data(), n.value.data.size());
    return {push(std::move(n))};
}

NodeRef Graph::mul(NodeRef a, NodeRef b) {
    const Node& na = cat(a);
    const Node& nb = cat(b);
    if (!na.value.same_shape(nb.value)) {
        throw ShapeError("node #" + std::to_string(nodes_.size()) + " (mul): shape mismatch " +
                         na.value.shape_str() + " vs " + nb.value.shape_str());
    }
    Node n;
    n.op = Op::Mul;
    n.parents = {a.idx, b.idx};
    n.needs_grad = na.needs_grad || nb.needs_grad;
    n.value = Tensor::zeros(na.value.shape);
    kernels::mul(na.value.data.data(), nb.value.data.data(), n.value.data.data(), n.value.data.size());
    return {push(std::move(n))};
}

NodeRef Graph::scale(NodeRef a, double c) {
    const Node& na = cat(a);
    Node n;
    n.op = Op::Scale;
    n.c = c;
    n.parents = {a.idx};
    n.needs_grad = na.needs_grad;
    n.value = Tensor::zeros(na.value.shape);
    kernels::scale(na.value.data.data(), c, n.value.data.data(), n.value.data.size());
    return {push(std::move(n))};
}

NodeRef Graph::matmul(NodeRef a, NodeRef b) {
    const Node& na = cat(a);
    const Node& nb = cat(b);
    if (na.value.rank() != 2 || nb.value.rank() != 2 || na.value.shape[1] != nb.value.shape[0]) {
        throw ShapeError("node #" + std::to_string(nodes_.size()) + " (matmul): incompatible shapes " +
                         na.value.shape_str() + " x " + nb.value.shape_str());
    }
    int64_t m = na.value.shape[0], k = na.value.shape[1], p = nb.value.shape[1];
    Node n;
    n.op = Op::Matmul;
    n.parents = {a.idx, b.idx};
    n.needs_grad = na.needs_grad || nb.needs_grad;
    n.value = Tensor::zeros({m, p});
    kernels::matmul(na.value.data.data(), nb.value.data.data(), n.value.data.data(),
                    static_cast<int>(m), static_cast<int>(k), static_cast<int>(p));
    return {push(std::move(n))};
}

NodeRef Graph::affine(NodeRef x, NodeRef w, NodeRef b) {
    const Node& nx = cat(x);
    const Node& nw = cat(w);
    const Node& nb = cat(b);
    Mat mx = as_rows(nx.value);
    if (nw.value.rank() != 2 || nb.value.rank() != 1 || mx.cols != nw.value.shape[0] ||
        nw.value.shape[1] != nb.value.shape[0]) {
        throw ShapeError("node #" + std::to_string(nodes_.size()) + " (affine): incompatible shapes x" +
                         nx.value.shape_str() + " w" + nw.value.shape_str() + " b" + nb.value.shape_str());
    }
    int64_t m = nw.value.shape[1];
    Node n;
    n.op = Op::Affine;
    n.parents = {x.idx, w.idx, b.idx};
    n.needs_grad = nx.needs_grad || nw.needs_grad || nb.needs_grad;
    n.value = nx.value.rank() == 1 ? Tensor::zeros({m}) : Tensor::zeros({mx.rows, m});
    kernels::matmul(nx.value.data.data(), nw.value.data.data(), n.value.data.data(),
                    static_cast<int>(mx.rows), static_cast<int>(mx.cols), static_cast<int>(m));
    for (int64_t r = 0; r < mx.rows; ++r) {
        kernels::serial::add(n.value.data.data() + r * m, nb.value.data.data(),
                             n.value.data.data() + r * m, static_cast<size_t>(m));
    }
    return {push(std::move(n))};
}

NodeRef Graph::nonlin(NodeRef a, Nonlin nl) {
    const Node& na = cat(a);
    Node n;
    n.op = Op::Nonlin;
    n.nl = nl;
    n.parents = {a.idx};
    n.needs_grad = na.needs_grad;
    n.value = Tensor::zeros(na.value.shape);
    const double* in = na.value.data.data();
    double* out = n.value.data.data();
    size_t cnt = n.value.data.size();
    switch (nl) {
        case Nonlin::Relu:
            for (size_t i = 0; i < cnt; ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
            break;
        case Nonlin::Tanh:
            for (size_t i = 0; i < cnt; ++i) out[i] = std::tanh(in[i]);
            break;
        case Nonlin::Sigmoid:
            for (size_t i = 0; i < cnt; ++i) out[i] = 1.0 / (1.0 + std::exp(-in[i]));
            break;
        case Nonlin::Silu:
            for (size_t i = 0; i < cnt; ++i) out[i] = in[i] / (1.0 + std::exp(-in[i]));
            break;
    }
    return {push(std::move(n))};
}

NodeRef Graph::sum(NodeRef a) {
    const Node& na = cat(a);
    Node n;
    n.op = Op::Sum;
    n.parents = {a.idx};
    n.needs_grad = na.needs_grad;
    n.value = Tensor::scalar(0);
    n.value.data[0] = kernels::sum(na.value.data.data(), na.value.data.size());
    return {push(std::move(n))};
}

NodeRef Graph::mean(NodeRef a) {
    const Node& na = cat(a);
    Node n;
    n.op = Op::Mean;
    n.parents = {a.idx};
    n.needs_grad = na.needs_grad;
    n.value = Tensor::scalar(0);
    n.value.data[0] = kernels::sum(na.value.data.data(), na.value.data.size()) /
                      static_cast<double>(na.value.numel());
    return {push(std::move(n))};
}

NodeRef Graph::softmax_xent(NodeRef logits, std::vector<int> targets) {
    const Node& nl = cat(logits);
    Mat m = as_rows(nl.value);
    if (static_cast<int64_t>(targets.size()) != m.rows) {
        throw ShapeError("node #" + std::to_string(nodes_.size()) +
                         " (softmax_xent): need one target per row, got " +
                         std::to_string(targets.size()) + " for " + std::to_string(m.rows));
    }
    for (int t : targets) {
        if (t < 0 || t >= m.cols) {
            throw ContractError("softmax_xent: target index " + std::to_string(t) + " outside [0," +
                                std::to_string(m.cols - 1) + "]");
        }
    }
    Node n;
    n.op = Op::SoftmaxXent;
    n.parents = {logits.idx};
    n.needs_grad = nl.needs_grad;
    n.targets = std::move(targets);
    n.aux.resize(nl.value.data.size());
    softmax_rows(nl.value.data.data(), n.aux.data(), m.rows, m.cols);
    double total = 0.0;
    for (int64_t r = 0; r < m.rows; ++r) {
        const double* x = nl.value.data.data() + r * m.cols;
        double mx = x[0];
        for (int64_t j = 1; j < m.cols; ++j) mx = std::max(mx, x[j]);
        double z = 0.0;
        for (int64_t j = 0; j < m.cols; ++j) z += std::exp(x[j] - mx);
        total += mx + std::log(z) - x[n.targets[static_cast<size_t>(r)]];
    }
    n.value = Tensor::scalar(0);
    n.value.data[0] = total / static_cast<double>(m.rows);
    return {push(std::move(n))};
}

NodeRef Graph::sq_error(NodeRef a, NodeRef b) {
    const Node& na = cat(a);
    const Node& nb = cat(b);
    if (!na.value.same_shape(nb.value)) {
        throw ShapeError("node #" + std::to_string(nodes_.size()) + " (sq_error): shape mismatch " +
                         na.value.shape_str() + " vs " + nb.value.shape_str());
    }
    Node n;
    n.op = Op::SqError;
    n.parents = {a.idx, b.idx};
    n.needs_grad = na.needs_grad || nb.needs_grad;
    double s = 0.0;
    for (size_t i = 0; i < na.value.data.size(); ++i) {
        double d = na.value.data[i] - nb.value.data[i];
        s += d * d;
    }
    n.value = Tensor::scalar(0);
    n.value.data[0] = s;
    return {push(std::move(n))};
}

NodeRef Graph::concat(const std::vector<NodeRef>& parts, int axis) {
    if (parts.empty()) throw ContractError("concat: empty part list");
    if (axis != 0 && axis != 1) throw ContractError("concat: axis must be 0 or 1");
    const Node& first = cat(parts[0]);
    size_t rank = first.value.rank();
    if (rank != 1 && rank != 2) fail_shape(parts[0].idx, "concat expects rank-1 or rank-2 parts");
    if (rank == 1 && axis != 0) throw ContractError("concat: rank-1 parts require axis 0");

    Node n;
    n.op = Op::Concat;
    n.axis = axis;
    int64_t total = 0;
    for (NodeRef p : parts) {
        const Node& np = cat(p);
        if (np.value.rank() != rank) fail_shape(p.idx, "concat parts must share rank");
        if (rank == 2) {
            int64_t other = axis == 0 ? np.value.shape[1] : np.value.shape[0];
            int64_t ref = axis == 0 ? first.value.shape[1] : first.value.shape[0];
            if (other != ref) {
                throw ShapeError("node #" + std::to_string(nodes_.size()) +
                                 " (concat): incompatible part " + np.value.shape_str());
            }
        }
        total += rank == 1 ? np.value.shape[0] : np.value.shape[static_cast<size_t>(axis)];
        n.parents.push_back(p.idx);
        n.needs_grad = n.needs_grad || np.needs_grad;
    }
    if (rank == 1) {
        n.value = Tensor::zeros({total});
        int64_t off = 0;
        for (NodeRef p : parts) {
            const Node& np = cat(p);
            std::copy(np.value.data.begin(), np.value.data.end(), n.value.data.begin() + off);
            off += np.value.numel();
        }
    } else if (axis == 0) {
        n.value = Tensor::zeros({total, first.value.shape[1]});
        int64_t off = 0;
        for (NodeRef p : parts) {
            const Node& np = cat(p);
            std::copy(np.value.data.begin(), np.value.data.end(), n.value.data.begin() + off);
            off += np.value.numel();
        }
    } else {
        int64_t rows = first.value.shape[0];
        n.value = Tensor::zeros({rows, total});
        int64_t coloff = 0;
        for (NodeRef p : parts) {
            const Node& np = cat(p);
            int64_t cols = np.value.shape[1];
            for (int64_t r = 0; r < rows; ++r) {
                std::copy(np.value.data.begin() + r * cols, np.value.data.begin() + (r + 1) * cols,
                          n.value.data.begin() + r * total + coloff);
            }
            coloff += cols;
        }
    }
    return {push(std::move(n))};
}

NodeRef Graph::slice(NodeRef a, int axis, int64_t start, int64_t len) {
    const Node& na = cat(a);
    size_t rank = na.value.rank();
    if (rank != 1 && rank != 2) fail_shape(a.idx, "slice expects rank-1 or rank-2 input");
    if (axis != 0 && axis != 1) throw ContractError("slice: axis must be 0 or 1");
    if (rank == 1 && axis != 0) throw ContractError("slice: rank-1 input requires axis 0");
    int64_t extent = rank == 1 ? na.value.shape[0] : na.value.shape[static_cast<size_t>(axis)];
    if (len <= 0 || start < 0 || start + len > extent) {
        throw ContractError("slice: range [" + std::to_string(start) + "," +
                            std::to_string(start + len) + ") outside extent " + std::to_string(extent));
    }
    Node n;
    n.op = Op::Slice;
    n.axis = axis;
    n.start = start;
    n.len = len;
    n.parents = {a.idx};
    n.needs_grad = na.needs_grad;
    if (rank == 1) {
        n.value = Tensor::zeros({len});
        std::copy(na.value.data.begin() + start, na.value.data.begin() + start + len, n.value.data.begin());
    } else if (axis == 0) {
        int64_t cols = na.value.shape[1];
        n.value = Tensor::zeros({len, cols});
        std::copy(na.value.data.begin() + start * cols, na.value.data.begin() + (start + len) * cols,
                  n.value.data.begin());
    } else {
        int64_t rows = na.value.shape[0], cols = na.value.shape[1];
        n.value = Tensor::zeros({rows, len});
        for (int64_t r = 0; r < rows; ++r) {
            std::copy(na.value.data.begin() + r * cols + start,
                      na.value.data.begin() + r * cols + start + len, n.value.data.begin() + r * len);
        }
    }
    return {push(std::move(n))};
}

NodeRef Graph::broadcast(NodeRef a, std::vector<int64_t> shape) {
    const Node& na = cat(a);
    const Tensor& v = na.value;
    bool from_scalar = v.rank() == 0;
    bool from_vec = v.rank() == 1 && shape.size() == 2 && shape[1] == v.shape[0];
    bool from_col = v.rank() == 2 && v.shape[1] == 1 && shape.size() == 2 && shape[0] == v.shape[0];
    if (!from_scalar && !from_vec && !from_col) {
        throw ShapeError("node #" + std::to_string(nodes_.size()) + " (broadcast): cannot expand " +
                         v.shape_str());
    }
    Node n;
    n.op = Op::Broadcast;
    n.parents = {a.idx};
    n.needs_grad = na.needs_grad;
    n.value = Tensor::zeros(shape);
    if (from_scalar) {
        std::fill(n.value.data.begin(), n.value.data.end(), v.data[0]);
    } else if (from_vec) {
        int64_t rows = shape[0], cols = shape[1];
        for (int64_t r = 0; r < rows; ++r) {
            std::copy(v.data.begin(), v.data.end(), n.value.data.begin() + r * cols);
        }
    } else {
        int64_t rows = shape[0], cols = shape[1];
        for (int64_t r = 0; r < rows; ++r) {
            std::fill(n.value.data.begin() + r * cols, n.value.data.begin() + (r + 1) * cols, v.data[r]);
        }
    }
    return {push(std::move(n))};
}

NodeRef Graph::reshape(NodeRef a, std::vector<int64_t> shape) {
    const Node& na = cat(a);
    if (shape_numel(shape) != na.value.numel()) {
        throw ShapeError("node #" + std::to_string(nodes_.size()) + " (reshape): count mismatch from " +
                         na.value.shape_str());
    }
    Node n;
    n.op = Op::Reshape;
    n.parents = {a.idx};
    n.needs_grad = na.needs_grad;
    n.value = na.value.reshaped(std::move(shape));
    return {push(std::move(n))};
}

NodeRef Graph::im2col(NodeRef a, const Im2colAttrs& attrs) {
    const Node& na = cat(a);
    Im2colAttrs ic = attrs;
    int64_t plane = static_cast<int64_t>(ic.h) * ic.w * ic.c;
    if (na.value.rank() != 2 || na.value.shape[1] != plane) {
        throw ShapeError("node #" + std::to_string(nodes_.size()) + " (im2col): input " +
                         na.value.shape_str() + " does not match h*w*c=" + std::to_string(plane));
    }
    ic.oh = (ic.h + 2 * ic.pad - ic.kh) / ic.stride + 1;
    ic.ow = (ic.w + 2 * ic.pad - ic.kw) / ic.stride + 1;
    if (ic.oh <= 0 || ic.ow <= 0) {
        throw ShapeError("node #" + std::to_string(nodes_.size()) + " (im2col): empty output grid");
    }
    int64_t batch = na.value.shape[0];
    int64_t out_cols = static_cast<int64_t>(ic.kh) * ic.kw * ic.c;
    Node n;
    n.op = Op::Im2col;
    n.ic = ic;
    n.parents = {a.idx};
    n.needs_grad = na.needs_grad;
    n.value = Tensor::zeros({batch * ic.oh * ic.ow, out_cols});
    const double* in = na.value.data.data();
    double* out = n.value.data.data();
    for (int64_t b = 0; b < batch; ++b) {
        const double* img = in + b * plane;
        for (int oy = 0; oy < ic.oh; ++oy) {
            for (int ox = 0; ox < ic.ow; ++ox) {
                double* row = out + ((b * ic.oh + oy) * ic.ow + ox) * out_cols;
                int y0 = oy * ic.stride - ic.pad;
                int x0 = ox * ic.stride - ic.pad;
                int64_t col = 0;
                for (int ky = 0; ky < ic.kh; ++ky) {
                    for (int kx = 0; kx < ic.kw; ++kx) {
                        int y = y0 + ky, x = x0 + kx;
                        bool inside = y >= 0 && y < ic.h && x >= 0 && x < ic.w;
                        for (int ch = 0; ch < ic.c; ++ch, ++col) {
                            row[col] = inside ? img[(static_cast<int64_t>(y) * ic.w + x) * ic.c + ch] : 0.0;
                        }
                    }
                }
            }
        }
    }
    return {push(std::move(n))};
}

NodeRef Graph::stop_grad(NodeRef a) {
    const Node& na = cat(a);
    Node n;
    n.op = Op::StopGrad;
    n.parents = {a.idx};
    n.needs_grad = false;
    n.value = na.value;
    return {push(std::move(n))};
}

const Tensor& Graph::value(NodeRef r) const { return cat(r).value; }

std::vector<double>& Graph::touch(int idx) {
    Node& n = nodes_[static_cast<size_t>(idx)];
    if (!n.touched) {
        n.grad.assign(n.value.data.size(), 0.0);
        n.touched = true;
    }
    return n.grad;
}

void Graph::backward(NodeRef seed) {
    Node& s = at(seed);
    if (s.value.numel() != 1) {
        throw ContractError("backward: seed " + node_label(s, seed.idx) + " is not scalar, shape " +
                            s.value.shape_str());
    }
    for (Node& n : nodes_) n.touched = false;
    touch(seed.idx)[0] = 1.0;

    for (int i = seed.idx; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (!n.touched || !n.needs_grad) continue;
        if (n.op == Op::Input || n.op == Op::Constant) continue;
        const std::vector<double>& g = n.grad;
        switch (n.op) {
            case Op::Add: {
                const Node& pa = nodes_[static_cast<size_t>(n.parents[0])];
                const Node& pb = nodes_[static_cast<size_t>(n.parents[1])];
                if (pa.needs_grad) {
                    kernels::serial::add(touch(n.parents[0]).data(), g.data(), touch(n.parents[0]).data(), g.size());
                }
                if (pb.needs_grad) {
                    kernels::serial::add(touch(n.parents[1]).data(), g.data(), touch(n.parents[1]).data(), g.size());
                }
                break;
            }
            case Op::Sub: {
                const Node& pa = nodes_[static_cast<size_t>(n.parents[0])];
                const Node& pb = nodes_[static_cast<size_t>(n.parents[1])];
                if (pa.needs_grad) {
                    kernels::serial::add(touch(n.parents[0]).data(), g.data(), touch(n.parents[0]).data(), g.size());
                }
                if (pb.needs_grad) {
                    kernels::serial::axpy(-1.0, g.data(), touch(n.parents[1]).data(), g.size());
                }
                break;
            }
            case Op::Mul: {
                const Node& pa = nodes_[static_cast<size_t>(n.parents[0])];
                const Node& pb = nodes_[static_cast<size_t>(n.parents[1])];
                if (pa.needs_grad) {
                    std::vector<double>& da = touch(n.parents[0]);
                    for (size_t j = 0; j < g.size(); ++j) da[j] += g[j] * pb.value.data[j];
                }
                if (pb.needs_grad) {
                    std::vector<double>& db = touch(n.parents[1]);
                    for (size_t j = 0; j < g.size(); ++j) db[j] += g[j] * pa.value.data[j];
                }
                break;
            }
            case Op::Scale: {
                if (nodes_[static_cast<size_t>(n.parents[0])].needs_grad) {
                    kernels::serial::axpy(n.c, g.data(), touch(n.parents[0]).data(), g.size());
                }
                break;
            }
            case Op::Matmul: {
                const Node& pa = nodes_[static_cast<size_t>(n.parents[0])];
                const Node& pb = nodes_[static_cast<size_t>(n.parents[1])];
                int m = static_cast<int>(pa.value.shape[0]);
                int k = static_cast<int>(pa.value.shape[1]);
                int p = static_cast<int>(pb.value.shape[1]);
                if (pa.needs_grad) {
                    std::vector<double> tmp(static_cast<size_t>(m) * k);
                    kernels::matmul_nt(g.data(), pb.value.data.data(), tmp.data(), m, p, k);
                    kernels::serial::add(touch(n.parents[0]).data(), tmp.data(), touch(n.parents[0]).data(), tmp.size());
                }
                if (pb.needs_grad) {
                    std::vector<double> tmp(static_cast<size_t>(k) * p);
                    kernels::matmul_tn(pa.value.data.data(), g.data(), tmp.data(), k, m, p);
                    kernels::serial::add(touch(n.parents[1]).data(), tmp.data(), touch(n.parents[1]).data(), tmp.size());
                }
                break;
            }
            case Op::Affine: {
                const Node& px = nodes_[static_cast<size_t>(n.parents[0])];
                const Node& pw = nodes_[static_cast<size_t>(n.parents[1])];
                const Node& pb = nodes_[static_cast<size_t>(n.parents[2])];
                Mat mx = as_rows(px.value);
                int rows = static_cast<int>(mx.rows);
                int in_dim = static_cast<int>(mx.cols);
                int out_dim = static_cast<int>(pw.value.shape[1]);
                if (px.needs_grad) {
                    std::vector<double> tmp(static_cast<size_t>(rows) * in_dim);
                    kernels::matmul_nt(g.data(), pw.value.data.data(), tmp.data(), rows, out_dim, in_dim);
                    kernels::serial::add(touch(n.parents[0]).data(), tmp.data(), touch(n.parents[0]).data(), tmp.size());
                }
                if (pw.needs_grad) {
                    std::vector<double> tmp(static_cast<size_t>(in_dim) * out_dim);
                    kernels::matmul_tn(px.value.data.data(), g.data(), tmp.data(), in_dim, rows, out_dim);
                    kernels::serial::add(touch(n.parents[1]).data(), tmp.data(), touch(n.parents[1]).data(), tmp.size());
                }
                if (pb.needs_grad) {
                    std::vector<double>& db = touch(n.parents[2]);
                    for (int r = 0; r < rows; ++r) {
                        kernels::serial::add(db.data(), g.data() + static_cast<size_t>(r) * out_dim, db.data(),
                                             static_cast<size_t>(out_dim));
                    }
                }
                break;
            }
            case Op::Nonlin: {
                const Node& pa = nodes_[static_cast<size_t>(n.parents[0])];
                if (!pa.needs_grad) break;
                std::vector<double>& da = touch(n.parents[0]);
                const double* x = pa.value.data.data();
                const double* y = n.value.data.data();
                switch (n.nl) {
                    case Nonlin::Relu:
                        // relu'(0) = 0 by convention
                        for (size_t j = 0; j < g.size(); ++j) da[j] += x[j] > 0.0 ? g[j] : 0.0;
                        break;
                    case Nonlin::Tanh:
                        for (size_t j = 0; j < g.size(); ++j) da[j] += g[j] * (1.0 - y[j] * y[j]);
                        break;
                    case Nonlin::Sigmoid:
                        for (size_t j = 0; j < g.size(); ++j) da[j] += g[j] * y[j] * (1.0 - y[j]);
                        break;
                    case Nonlin::Silu:
                        for (size_t j = 0; j < g.size(); ++j) {
                            double s = 1.0 / (1.0 + std::exp(-x[j]));
                            da[j] += g[j] * s * (1.0 + x[j] * (1.0 - s));
                        }
                        break;
                }
                break;
            }
            case Op::Sum: {
                if (nodes_[static_cast<size_t>(n.parents[0])].needs_grad) {
                    std::vector<double>& da = touch(n.parents[0]);
                    double gv = g[0];
                    for (double& v : da) v += gv;
                }
                break;
            }
            case Op::Mean: {
                const Node& pa = nodes_[static_cast<size_t>(n.parents[0])];
                if (pa.needs_grad) {
                    std::vector<double>& da = touch(n.parents[0]);
                    double gv = g[0] / static_cast<double>(pa.value.numel());
                    for (double& v : da) v += gv;
                }
                break;
            }
            case Op::SoftmaxXent: {
                const Node& pa = nodes_[static_cast<size_t>(n.parents[0])];
                if (!pa.needs_grad) break;
                Mat m = as_rows(pa.value);
                std::vector<double>& da = touch(n.parents[0]);
                double gv = g[0] / static_cast<double>(m.rows);
                for (int64_t r = 0; r < m.rows; ++r) {
                    const double* p = n.aux.data() + r * m.cols;
                    double* drow = da.data() + r * m.cols;
                    int t = n.targets[static_cast<size_t>(r)];
                    for (int64_t j = 0; j < m.cols; ++j) {
                        drow[j] += gv * (p[j] - (j == t ? 1.0 : 0.0));
                    }
                }
                break;
            }
            case Op::SqError: {
                const Node& pa = nodes_[static_cast<size_t>(n.parents[0])];
                const Node& pb = nodes_[static_cast<size_t>(n.parents[1])];
                double gv = 2.0 * g[0];
                if (pa.needs_grad) {
                    std::vector<double>& da = touch(n.parents[0]);
                    for (size_t j = 0; j < da.size(); ++j) {
                        da[j] += gv * (pa.value.data[j] - pb.value.data[j]);
                    }
                }
                if (pb.needs_grad) {
                    std::vector<double>& db = touch(n.parents[1]);
                    for (size_t j = 0; j < db.size(); ++j) {
                        db[j] -= gv * (pa.value.data[j] - pb.value.data[j]);
                    }
                }
                break;
            }
            case Op::Concat: {
                size_t rank = n.value.rank();
                if (rank == 1 || n.axis == 0) {
                    int64_t off = 0;
                    for (int pidx : n.parents) {
                        const Node& pp = nodes_[static_cast<size_t>(pidx)];
                        int64_t cnt = pp.value.numel();
                        if (pp.needs_grad) {
                            std::vector<double>& dp = touch(pidx);
                            for (int64_t j = 0; j < cnt; ++j) dp[static_cast<size_t>(j)] += g[static_cast<size_t>(off + j)];
                        }
                        off += cnt;
                    }
                } else {
                    int64_t rows = n.value.shape[0];
                    int64_t total = n.value.shape[1];
                    int64_t coloff = 0;
                    for (int pidx : n.parents) {
                        const Node& pp = nodes_[static_cast<size_t>(pidx)];
                        int64_t cols = pp.value.shape[1];
                        if (pp.needs_grad) {
                            std::vector<double>& dp = touch(pidx);
                            for (int64_t r = 0; r < rows; ++r) {
                                for (int64_t j = 0; j < cols; ++j) {
                                    dp[static_cast<size_t>(r * cols + j)] +=
                                        g[static_cast<size_t>(r * total + coloff + j)];
                                }
                            }
                        }
                        coloff += cols;
                    }
                }
                break;
            }
            case Op::Slice: {
                const Node& pa = nodes_[static_cast<size_t>(n.parents[0])];
                if (!pa.needs_grad) break;
                std::vector<double>& da = touch(n.parents[0]);
                if (pa.value.rank() == 1) {
                    for (int64_t j = 0; j < n.len; ++j) da[static_cast<size_t>(n.start + j)] += g[static_cast<size_t>(j)];
                } else if (n.axis == 0) {
                    int64_t cols = pa.value.shape[1];
                    for (int64_t j = 0; j < n.len * cols; ++j) {
                        da[static_cast<size_t>(n.start * cols + j)] += g[static_cast<size_t>(j)];
                    }
                } else {
                    int64_t rows = pa.value.shape[0], cols = pa.value.shape[1];
                    for (int64_t r = 0; r < rows; ++r) {
                        for (int64_t j = 0; j < n.len; ++j) {
                            da[static_cast<size_t>(r * cols + n.start + j)] += g[static_cast<size_t>(r * n.len + j)];
                        }
                    }
                }
                break;
            }
            case Op::Broadcast: {
                const Node& pa = nodes_[static_cast<size_t>(n.parents[0])];
                if (!pa.needs_grad) break;
                std::vector<double>& da = touch(n.parents[0]);
                const Tensor& v = pa.value;
                if (v.rank() == 0) {
                    da[0] += kernels::serial::sum(g.data(), g.size());
                } else if (v.rank() == 1) {
                    int64_t rows = n.value.shape[0], cols = n.value.shape[1];
                    for (int64_t r = 0; r < rows; ++r) {
                        kernels::serial::add(da.data(), g.data() + r * cols, da.data(), static_cast<size_t>(cols));
                    }
                } else {
                    int64_t rows = n.value.shape[0], cols = n.value.shape[1];
                    for (int64_t r = 0; r < rows; ++r) {
                        da[static_cast<size_t>(r)] +=
                            kernels::serial::sum(g.data() + r * cols, static_cast<size_t>(cols));
                    }
                }
                break;
            }
            case Op::Reshape: {
                if (nodes_[static_cast<size_t>(n.parents[0])].needs_grad) {
                    kernels::serial::add(touch(n.parents[0]).data(), g.data(), touch(n.parents[0]).data(), g.size());
                }
                break;
            }
            case Op::Im2col: {
                const Node& pa = nodes_[static_cast<size_t>(n.parents[0])];
                if (!pa.needs_grad) break;
                std::vector<double>& da = touch(n.parents[0]);
                const Im2colAttrs& ic = n.ic;
                int64_t plane = static_cast<int64_t>(ic.h) * ic.w * ic.c;
                int64_t batch = pa.value.shape[0];
                int64_t out_cols = static_cast<int64_t>(ic.kh) * ic.kw * ic.c;
                for (int64_t b = 0; b < batch; ++b) {
                    double* dimg = da.data() + b * plane;
                    for (int oy = 0; oy < ic.oh; ++oy) {
                        for (int ox = 0; ox < ic.ow; ++ox) {
                            const double* grow = g.data() + ((b * ic.oh + oy) * ic.ow + ox) * out_cols;
                            int y0 = oy * ic.stride - ic.pad;
                            int x0 = ox * ic.stride - ic.pad;
                            int64_t col = 0;
                            for (int ky = 0; ky < ic.kh; ++ky) {
                                for (int kx = 0; kx < ic.kw; ++kx) {
                                    int y = y0 + ky, x = x0 + kx;
                                    bool inside = y >= 0 && y < ic.h && x >= 0 && x < ic.w;
                                    if (inside) {
                                        for (int ch = 0; ch < ic.c; ++ch) {
                                            dimg[(static_cast<int64_t>(y) * ic.w + x) * ic.c + ch] += grow[col + ch];
                                        }
                                    }
                                    col += ic.c;
                                }
                            }
                        }
                    }
                }
                break;
            }
            case Op::StopGrad:
            case Op::Input:
            case Op::Constant:
                break;
        }
    }
}

Tensor Graph::grad_of(NodeRef r) const {
    const Node& n = cat(r);
    Tensor g;
    g.shape = n.value.shape;
    if (n.touched) {
        g.data = n.grad;
    } else {
        g.data.assign(n.value.data.size(), 0.0);
    }
    return g;
}

} // namespace scoreag
