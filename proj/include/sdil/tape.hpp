#pragma once

#include <functional>
#include <span>
#include <vector>

#include "sdil/tensor.hpp"

namespace sdil::diff {

class Tape;

// Handle to a node on a tape. Only valid for the tape that produced it.
struct Var {
    int idx = -1;
    bool valid() const { return idx >= 0; }
};

// Reverse-mode computation graph. Nodes are appended in evaluation order
// (which is therefore topological); backward() visits them exactly once in
// reverse. Every forward op validates output finiteness and throws
// NumericError on NaN/Inf. Single-threaded by construction: one tape must
// not be shared across threads, independent tapes are safe.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // ---- graph inputs ----
    Var leaf(Parameter& p);                         // learnable leaf
    Var input(Tensor t, bool requires_grad = false); // data / constants

    // ---- elementwise & structural ops ----
    Var affine(Var x, Var w, Var b);   // x(B,in) * w(in,out) + b(out)
    Var matmul(Var a, Var b);          // (B,K) * (K,d)
    Var add(Var a, Var b);             // same shape
    Var mul(Var a, Var b);             // same shape, elementwise
    Var scale(Var x, double c);
    Var neg(Var x) { return scale(x, -1.0); }
    Var tanh_op(Var x);
    Var relu(Var x);
    Var softplus(Var x);
    Var log_floor(Var x, double floor); // log(max(x, floor))
    Var sqrt_op(Var x);
    Var clamp_min(Var x, double floor);
    Var reciprocal(Var x);
    Var concat_cols(std::span<const Var> parts);
    Var softmax_rows(Var x);
    Var log_softmax_rows(Var x);

    // ---- distances / matching ----
    // Squared distance per row between equal-shaped matrices -> shape {B}.
    Var sqdist_rows(Var a, Var b);
    // Euclidean distance of every row of z (B,d) to every row of p (K,d),
    // floored at `floor` -> (B,K).
    Var pairwise_dist(Var z, Var p, double floor);
    // x / rowsum(x), rows must have positive sums.
    Var row_normalize(Var x);

    // Straight-through hard selection: forward emits one-hot(argmax) per
    // row, backward passes the gradient to the soft input untouched.
    Var st_hard(Var soft);

    // ---- reductions & fused losses (64-bit accumulation) ----
    Var mean_all(Var x);
    // mean_b [logsumexp(row_b) - row_b[label_b]]
    Var cross_entropy_mean(Var logits, std::vector<int> labels);
    // mean_b x[b, label_b]
    Var pick_mean(Var x, std::vector<int> labels);
    // mean_b log(max(x[b, label_b], floor))
    Var log_pick_mean(Var x, std::vector<int> labels, double floor);
    // mean_i softplus(sign * x_i)
    Var softplus_mean(Var x, double sign);

    // ---- values / gradients ----
    const Tensor& value(Var v) const { return nodes_[v.idx].value; }
    // 64-bit value for scalars produced by reductions (falls back to the
    // stored 32-bit value for other nodes).
    double value64(Var v) const;

    // Reverse pass from a scalar loss. Accumulates into Parameter::grad of
    // every trainable leaf; per-node grads stay readable via grad().
    void backward(Var loss);
    const Tensor& grad(Var v) const;

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        double v64 = 0.0;
        bool has64 = false;
        bool needs_grad = false;
        Parameter* param = nullptr;
        std::function<void(Tape&, int)> backprop; // nullptr for inputs
    };

    std::vector<Node> nodes_;

    int push(Node n, const char* op_name);
    Node& node(Var v) { return nodes_[v.idx]; }
    const Node& node(Var v) const { return nodes_[v.idx]; }
    Tensor& grad_buf(int idx);
    void check_var(Var v) const;

    friend struct TapeOps;
};

} // namespace sdil::diff
