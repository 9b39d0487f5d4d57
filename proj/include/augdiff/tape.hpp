#pragma once

#include <cstdint>
#include <vector>

#include "augdiff/tensor.hpp"

namespace augdiff {

// Reverse-mode autodiff over a fixed op set. Values are computed eagerly as
// ops are recorded, so callers can inspect intermediates (e.g. to pick argmax
// indices for gather_rows masks) while building the graph. A tape is
// single-writer: one forward/backward pass owns it exclusively.
class Tape {
public:
    enum class Op : uint8_t {
        Input,
        Param,
        MatMul,
        Add,
        Mul,
        Scale,
        Tanh,
        Sigmoid,
        Relu,
        SoftmaxRows,
        Sum,
        Mean,
        ConcatCols,
        GatherRows,
        SqErrMean,
        Nll,
    };

    // Leaves. Both validate finiteness; param additionally marks the node as
    // a gradient target.
    int input(Tensor value);
    int param(Tensor value);

    // C = op_a(A) * op_b(B) with optional transposes (GEMM semantics).
    int matmul(int a, int b, bool trans_a = false, bool trans_b = false);

    // Same-shape addition, or row broadcast when b is 1 x n.
    int add(int a, int b);
    int mul(int a, int b);  // elementwise, same shape
    int scale(int a, double c);

    int tanh(int a);
    int sigmoid(int a);
    int relu(int a);

    // Numerically stable row softmax (row max subtracted). Rows must be
    // non-empty.
    int softmax_rows(int a);

    int sum(int a);   // 1 x 1
    int mean(int a);  // 1 x 1

    int concat_cols(int a, int b);

    // Selects rows of a; gradient scatter-adds back.
    int gather_rows(int a, std::vector<size_t> indices);

    // mean over all entries of (a - b)^2
    int sq_err_mean(int a, int b);

    // -log(probs[label]) for a 1 x C probability row, probs clamped at 1e-12
    int nll(int probs, int label);

    const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
    size_t size() const { return nodes_.size(); }

    // Gradients of a scalar loss w.r.t. every node. Unreached nodes get zero
    // gradients. One reverse sweep; each node visited exactly once.
    std::vector<Tensor> backward(int loss_id) const;

    // Convenience: gradients for a parameter id list, in order.
    std::vector<Tensor> gradients(int loss_id, const std::vector<int>& param_ids) const;

private:
    struct Node {
        Op op;
        int a = -1;
        int b = -1;
        bool trans_a = false;
        bool trans_b = false;
        double factor = 0.0;          // Scale
        int label = 0;                // Nll
        std::vector<size_t> indices;  // GatherRows
        Tensor value;
    };

    int push(Node n);
    const Tensor& val(int id) const { return nodes_[static_cast<size_t>(id)].value; }
    void check_id(int id) const;

    std::vector<Node> nodes_;
};

// C (+)= op_a(A) * op_b(B); standalone dense GEMM used by the tape and by
// inference paths.
void gemm(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b,
          Tensor& out, bool accumulate = false);

}  // namespace augdiff
