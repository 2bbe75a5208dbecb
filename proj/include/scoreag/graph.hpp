#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scoreag/tensor.hpp"

namespace scoreag {

// Define-by-run reverse-mode autodiff. A Graph is built per forward call:
// adding a node evaluates it immediately; backward() then walks the tape in
// reverse topological order (node indices), visiting each node exactly once.
// A Graph instance belongs to one thread at a time.

enum class Op : uint8_t {
    Input,
    Constant,
    Add,
    Sub,
    Mul,
    Scale,
    Matmul,
    Affine,
    Nonlin,
    Sum,
    Mean,
    SoftmaxXent,
    SqError,
    Concat,
    Slice,
    Broadcast,
    Reshape,
    Im2col,
    StopGrad,
};

enum class Nonlin : uint8_t { Relu, Tanh, Sigmoid, Silu };

const char* op_name(Op op);
Nonlin nonlin_from_string(const std::string& s);
std::string nonlin_to_string(Nonlin n);

struct NodeRef {
    int idx = -1;
    bool valid() const { return idx >= 0; }
};

struct Im2colAttrs {
    int h = 0, w = 0, c = 0;   // input image layout (rows are b, layout y,x,c)
    int kh = 0, kw = 0;        // kernel window
    int stride = 1, pad = 0;
    int oh = 0, ow = 0;        // derived output grid
};

struct Node {
    Op op = Op::Constant;
    Nonlin nl = Nonlin::Relu;
    std::vector<int> parents;
    Tensor value;
    std::vector<double> grad; // lazily allocated during backward
    bool touched = false;
    bool needs_grad = false;
    std::string name;
    double c = 0.0;              // Scale factor
    int axis = 0;                // Concat / Slice
    int64_t start = 0, len = 0;  // Slice
    std::vector<int> targets;    // SoftmaxXent (0-based column index per row)
    std::vector<double> aux;     // cached softmax
    Im2colAttrs ic;
};

class Graph {
public:
    NodeRef input(const std::string& name, Tensor value, bool requires_grad);
    NodeRef constant(Tensor value, const std::string& name = "");

    NodeRef add(NodeRef a, NodeRef b);
    NodeRef sub(NodeRef a, NodeRef b);
    NodeRef mul(NodeRef a, NodeRef b);
    NodeRef scale(NodeRef a, double c);
    NodeRef matmul(NodeRef a, NodeRef b);
    /// x:(B,n) or (n,), w:(n,m), b:(m,) -> (B,m) / (m,)
    NodeRef affine(NodeRef x, NodeRef w, NodeRef b);
    NodeRef nonlin(NodeRef a, Nonlin nl);
    NodeRef relu(NodeRef a) { return nonlin(a, Nonlin::Relu); }
    NodeRef silu(NodeRef a) { return nonlin(a, Nonlin::Silu); }
    NodeRef sum(NodeRef a);
    NodeRef mean(NodeRef a);
    /// logits:(B,K) or (K,). Mean cross-entropy over rows, stable log-softmax.
    NodeRef softmax_xent(NodeRef logits, std::vector<int> targets);
    /// Scalar sum of squared differences.
    NodeRef sq_error(NodeRef a, NodeRef b);
    NodeRef concat(const std::vector<NodeRef>& parts, int axis);
    NodeRef slice(NodeRef a, int axis, int64_t start, int64_t len);
    /// scalar -> any shape; (d,) -> (B,d); (B,1) -> (B,d)
    NodeRef broadcast(NodeRef a, std::vector<int64_t> shape);
    NodeRef reshape(NodeRef a, std::vector<int64_t> shape);
    NodeRef im2col(NodeRef a, const Im2colAttrs& attrs);
    NodeRef stop_grad(NodeRef a);

    const Tensor& value(NodeRef r) const;
    /// Seed must be scalar. Resets all adjoints, then accumulates.
    void backward(NodeRef seed);
    /// Adjoint of a node after backward(); zeros if the node was unreachable.
    Tensor grad_of(NodeRef r) const;

    size_t size() const { return nodes_.size(); }
    const Node& node(int idx) const { return nodes_[static_cast<size_t>(idx)]; }

private:
    std::vector<Node> nodes_;

    int push(Node&& n);
    Node& at(NodeRef r);
    const Node& cat(NodeRef r) const;
    void check_finite(int idx) const;
    std::vector<double>& touch(int idx);
    [[noreturn]] void fail_shape(int idx, const std::string& msg) const;
};

/// Row-wise numerically stable softmax (used by SoftmaxXent and classify).
void softmax_rows(const double* in, double* out, int64_t rows, int64_t cols);

} // namespace scoreag
