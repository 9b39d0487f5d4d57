#include "augdiff/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "augdiff/common.hpp"

namespace augdiff {

namespace {

constexpr double kLogClamp = 1e-12;

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

void gemm(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b,
          Tensor& out, bool accumulate) {
    const size_t m = trans_a ? a.cols() : a.rows();
    const size_t k = trans_a ? a.rows() : a.cols();
    const size_t kb = trans_b ? b.cols() : b.rows();
    const size_t n = trans_b ? b.rows() : b.cols();
    require(k == kb, "gemm: inner dimensions do not match");
    if (out.rows() != m || out.cols() != n) {
        out = Tensor(m, n);
    } else if (!accumulate) {
        for (size_t i = 0; i < out.numel(); ++i) out[i] = 0.0;
    }

    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();

    if (!trans_a && !trans_b) {
        // ikj: streams rows of B, vectorizes the j loop
        for (size_t i = 0; i < m; ++i) {
            double* orow = po + i * n;
            for (size_t kk = 0; kk < k; ++kk) {
                const double av = pa[i * k + kk];
                if (av == 0.0) continue;
                const double* brow = pb + kk * n;
                for (size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
            }
        }
    } else if (!trans_a && trans_b) {
        // row-by-row dot products
        for (size_t i = 0; i < m; ++i) {
            const double* arow = pa + i * k;
            double* orow = po + i * n;
            for (size_t j = 0; j < n; ++j) {
                const double* brow = pb + j * k;
                double acc = 0.0;
                for (size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
                orow[j] += acc;
            }
        }
    } else if (trans_a && !trans_b) {
        for (size_t kk = 0; kk < k; ++kk) {
            const double* arow = pa + kk * m;
            const double* brow = pb + kk * n;
            for (size_t i = 0; i < m; ++i) {
                const double av = arow[i];
                if (av == 0.0) continue;
                double* orow = po + i * n;
                for (size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
            }
        }
    } else {
        for (size_t i = 0; i < m; ++i) {
            double* orow = po + i * n;
            for (size_t kk = 0; kk < k; ++kk) {
                const double av = pa[kk * m + i];
                if (av == 0.0) continue;
                const double* bcol = pb;  // b is n x k, walk column kk
                for (size_t j = 0; j < n; ++j) orow[j] += av * bcol[j * k + kk];
            }
        }
    }
}

int Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

void Tape::check_id(int id) const {
    if (id < 0 || static_cast<size_t>(id) >= nodes_.size()) {
        throw std::invalid_argument("Tape: node id out of range");
    }
}

int Tape::input(Tensor value) {
    if (!value.all_finite()) throw numeric_error("Tape::input: non-finite value");
    Node n;
    n.op = Op::Input;
    n.value = std::move(value);
    return push(std::move(n));
}

int Tape::param(Tensor value) {
    if (!value.all_finite()) throw numeric_error("Tape::param: non-finite value");
    Node n;
    n.op = Op::Param;
    n.value = std::move(value);
    return push(std::move(n));
}

int Tape::matmul(int a, int b, bool trans_a, bool trans_b) {
    check_id(a);
    check_id(b);
    Node n;
    n.op = Op::MatMul;
    n.a = a;
    n.b = b;
    n.trans_a = trans_a;
    n.trans_b = trans_b;
    gemm(val(a), trans_a, val(b), trans_b, n.value);
    return push(std::move(n));
}

int Tape::add(int a, int b) {
    check_id(a);
    check_id(b);
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    if (ta.same_shape(tb)) {
        n.value = ta;
        for (size_t i = 0; i < tb.numel(); ++i) n.value[i] += tb[i];
    } else if (tb.rows() == 1 && tb.cols() == ta.cols()) {
        n.value = ta;
        for (size_t r = 0; r < ta.rows(); ++r) {
            for (size_t c = 0; c < ta.cols(); ++c) n.value.at(r, c) += tb[c];
        }
    } else {
        throw std::invalid_argument("Tape::add: shapes incompatible");
    }
    return push(std::move(n));
}

int Tape::mul(int a, int b) {
    check_id(a);
    check_id(b);
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require(ta.same_shape(tb), "Tape::mul: shape mismatch");
    Node n;
    n.op = Op::Mul;
    n.a = a;
    n.b = b;
    n.value = ta;
    for (size_t i = 0; i < tb.numel(); ++i) n.value[i] *= tb[i];
    return push(std::move(n));
}

int Tape::scale(int a, double c) {
    check_id(a);
    Node n;
    n.op = Op::Scale;
    n.a = a;
    n.factor = c;
    n.value = val(a);
    for (size_t i = 0; i < n.value.numel(); ++i) n.value[i] *= c;
    return push(std::move(n));
}

int Tape::tanh(int a) {
    check_id(a);
    Node n;
    n.op = Op::Tanh;
    n.a = a;
    n.value = val(a);
    for (size_t i = 0; i < n.value.numel(); ++i) n.value[i] = std::tanh(n.value[i]);
    return push(std::move(n));
}

int Tape::sigmoid(int a) {
    check_id(a);
    Node n;
    n.op = Op::Sigmoid;
    n.a = a;
    n.value = val(a);
    for (size_t i = 0; i < n.value.numel(); ++i) {
        n.value[i] = 1.0 / (1.0 + std::exp(-n.value[i]));
    }
    return push(std::move(n));
}

int Tape::relu(int a) {
    check_id(a);
    Node n;
    n.op = Op::Relu;
    n.a = a;
    n.value = val(a);
    for (size_t i = 0; i < n.value.numel(); ++i) {
        if (n.value[i] < 0.0) n.value[i] = 0.0;
    }
    return push(std::move(n));
}

int Tape::softmax_rows(int a) {
    check_id(a);
    const Tensor& ta = val(a);
    require(ta.cols() >= 1 && ta.rows() >= 1, "Tape::softmax_rows: empty rows");
    Node n;
    n.op = Op::SoftmaxRows;
    n.a = a;
    n.value = ta;
    for (size_t r = 0; r < ta.rows(); ++r) {
        double mx = n.value.at(r, 0);
        for (size_t c = 1; c < ta.cols(); ++c) mx = std::max(mx, n.value.at(r, c));
        double denom = 0.0;
        for (size_t c = 0; c < ta.cols(); ++c) {
            double e = std::exp(n.value.at(r, c) - mx);
            n.value.at(r, c) = e;
            denom += e;
        }
        for (size_t c = 0; c < ta.cols(); ++c) n.value.at(r, c) /= denom;
    }
    return push(std::move(n));
}

int Tape::sum(int a) {
    check_id(a);
    Node n;
    n.op = Op::Sum;
    n.a = a;
    double s = 0.0;
    const Tensor& ta = val(a);
    for (size_t i = 0; i < ta.numel(); ++i) s += ta[i];
    n.value = Tensor::scalar(s);
    return push(std::move(n));
}

int Tape::mean(int a) {
    check_id(a);
    const Tensor& ta = val(a);
    require(ta.numel() > 0, "Tape::mean: empty tensor");
    Node n;
    n.op = Op::Mean;
    n.a = a;
    double s = 0.0;
    for (size_t i = 0; i < ta.numel(); ++i) s += ta[i];
    n.value = Tensor::scalar(s / static_cast<double>(ta.numel()));
    return push(std::move(n));
}

int Tape::concat_cols(int a, int b) {
    check_id(a);
    check_id(b);
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require(ta.rows() == tb.rows(), "Tape::concat_cols: row count mismatch");
    Node n;
    n.op = Op::ConcatCols;
    n.a = a;
    n.b = b;
    n.value = Tensor(ta.rows(), ta.cols() + tb.cols());
    for (size_t r = 0; r < ta.rows(); ++r) {
        for (size_t c = 0; c < ta.cols(); ++c) n.value.at(r, c) = ta.at(r, c);
        for (size_t c = 0; c < tb.cols(); ++c) n.value.at(r, ta.cols() + c) = tb.at(r, c);
    }
    return push(std::move(n));
}

int Tape::gather_rows(int a, std::vector<size_t> indices) {
    check_id(a);
    const Tensor& ta = val(a);
    for (size_t idx : indices) {
        require(idx < ta.rows(), "Tape::gather_rows: index out of range");
    }
    Node n;
    n.op = Op::GatherRows;
    n.a = a;
    n.value = Tensor(indices.size(), ta.cols());
    for (size_t r = 0; r < indices.size(); ++r) {
        for (size_t c = 0; c < ta.cols(); ++c) {
            n.value.at(r, c) = ta.at(indices[r], c);
        }
    }
    n.indices = std::move(indices);
    return push(std::move(n));
}

int Tape::sq_err_mean(int a, int b) {
    check_id(a);
    check_id(b);
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require(ta.same_shape(tb), "Tape::sq_err_mean: shape mismatch");
    require(ta.numel() > 0, "Tape::sq_err_mean: empty tensors");
    Node n;
    n.op = Op::SqErrMean;
    n.a = a;
    n.b = b;
    double s = 0.0;
    for (size_t i = 0; i < ta.numel(); ++i) {
        double d = ta[i] - tb[i];
        s += d * d;
    }
    n.value = Tensor::scalar(s / static_cast<double>(ta.numel()));
    return push(std::move(n));
}

int Tape::nll(int probs, int label) {
    check_id(probs);
    const Tensor& tp = val(probs);
    require(tp.rows() == 1, "Tape::nll: probs must be a 1 x C row");
    require(label >= 0 && static_cast<size_t>(label) < tp.cols(),
            "Tape::nll: label out of range");
    Node n;
    n.op = Op::Nll;
    n.a = probs;
    n.label = label;
    double p = std::max(tp[static_cast<size_t>(label)], kLogClamp);
    n.value = Tensor::scalar(-std::log(p));
    return push(std::move(n));
}

std::vector<Tensor> Tape::backward(int loss_id) const {
    check_id(loss_id);
    const Tensor& loss = val(loss_id);
    require(loss.numel() == 1, "Tape::backward: loss must be scalar");

    std::vector<Tensor> grads(nodes_.size());
    for (size_t i = 0; i < nodes_.size(); ++i) {
        grads[i] = Tensor(nodes_[i].value.rows(), nodes_[i].value.cols());
    }
    grads[static_cast<size_t>(loss_id)][0] = 1.0;

    for (int id = loss_id; id >= 0; --id) {
        const Node& n = nodes_[static_cast<size_t>(id)];
        const Tensor& g = grads[static_cast<size_t>(id)];
        switch (n.op) {
            case Op::Input:
            case Op::Param:
                break;
            case Op::MatMul: {
                // With A' = op_a(A), B' = op_b(B): dA' = G B'^T, dB' = A'^T G.
                const Tensor& A = val(n.a);
                const Tensor& B = val(n.b);
                Tensor& ga = grads[static_cast<size_t>(n.a)];
                Tensor& gb = grads[static_cast<size_t>(n.b)];
                if (!n.trans_a) {
                    gemm(g, false, B, !n.trans_b, ga, true);
                } else {
                    gemm(B, n.trans_b, g, true, ga, true);
                }
                if (!n.trans_b) {
                    gemm(A, !n.trans_a, g, false, gb, true);
                } else {
                    gemm(g, true, A, n.trans_a, gb, true);
                }
                break;
            }
            case Op::Add: {
                Tensor& ga = grads[static_cast<size_t>(n.a)];
                Tensor& gb = grads[static_cast<size_t>(n.b)];
                for (size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
                if (gb.same_shape(g)) {
                    for (size_t i = 0; i < g.numel(); ++i) gb[i] += g[i];
                } else {
                    // row broadcast: column sums
                    for (size_t r = 0; r < g.rows(); ++r) {
                        for (size_t c = 0; c < g.cols(); ++c) gb[c] += g.at(r, c);
                    }
                }
                break;
            }
            case Op::Mul: {
                const Tensor& A = val(n.a);
                const Tensor& B = val(n.b);
                Tensor& ga = grads[static_cast<size_t>(n.a)];
                Tensor& gb = grads[static_cast<size_t>(n.b)];
                for (size_t i = 0; i < g.numel(); ++i) {
                    ga[i] += g[i] * B[i];
                    gb[i] += g[i] * A[i];
                }
                break;
            }
            case Op::Scale: {
                Tensor& ga = grads[static_cast<size_t>(n.a)];
                for (size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * n.factor;
                break;
            }
            case Op::Tanh: {
                Tensor& ga = grads[static_cast<size_t>(n.a)];
                for (size_t i = 0; i < g.numel(); ++i) {
                    ga[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
                }
                break;
            }
            case Op::Sigmoid: {
                Tensor& ga = grads[static_cast<size_t>(n.a)];
                for (size_t i = 0; i < g.numel(); ++i) {
                    ga[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
                }
                break;
            }
            case Op::Relu: {
                const Tensor& A = val(n.a);
                Tensor& ga = grads[static_cast<size_t>(n.a)];
                for (size_t i = 0; i < g.numel(); ++i) {
                    if (A[i] > 0.0) ga[i] += g[i];
                }
                break;
            }
            case Op::SoftmaxRows: {
                // dx = y * (g - <g, y>) per row
                Tensor& ga = grads[static_cast<size_t>(n.a)];
                for (size_t r = 0; r < g.rows(); ++r) {
                    double dot = 0.0;
                    for (size_t c = 0; c < g.cols(); ++c) {
                        dot += g.at(r, c) * n.value.at(r, c);
                    }
                    for (size_t c = 0; c < g.cols(); ++c) {
                        ga.at(r, c) += n.value.at(r, c) * (g.at(r, c) - dot);
                    }
                }
                break;
            }
            case Op::Sum: {
                Tensor& ga = grads[static_cast<size_t>(n.a)];
                for (size_t i = 0; i < ga.numel(); ++i) ga[i] += g[0];
                break;
            }
            case Op::Mean: {
                Tensor& ga = grads[static_cast<size_t>(n.a)];
                double s = g[0] / static_cast<double>(ga.numel());
                for (size_t i = 0; i < ga.numel(); ++i) ga[i] += s;
                break;
            }
            case Op::ConcatCols: {
                Tensor& ga = grads[static_cast<size_t>(n.a)];
                Tensor& gb = grads[static_cast<size_t>(n.b)];
                for (size_t r = 0; r < g.rows(); ++r) {
                    for (size_t c = 0; c < ga.cols(); ++c) ga.at(r, c) += g.at(r, c);
                    for (size_t c = 0; c < gb.cols(); ++c) {
                        gb.at(r, c) += g.at(r, ga.cols() + c);
                    }
                }
                break;
            }
            case Op::GatherRows: {
                Tensor& ga = grads[static_cast<size_t>(n.a)];
                for (size_t r = 0; r < n.indices.size(); ++r) {
                    for (size_t c = 0; c < g.cols(); ++c) {
                        ga.at(n.indices[r], c) += g.at(r, c);
                    }
                }
                break;
            }
            case Op::SqErrMean: {
                const Tensor& A = val(n.a);
                const Tensor& B = val(n.b);
                Tensor& ga = grads[static_cast<size_t>(n.a)];
                Tensor& gb = grads[static_cast<size_t>(n.b)];
                double s = 2.0 * g[0] / static_cast<double>(A.numel());
                for (size_t i = 0; i < A.numel(); ++i) {
                    double d = s * (A[i] - B[i]);
                    ga[i] += d;
                    gb[i] -= d;
                }
                break;
            }
            case Op::Nll: {
                const Tensor& P = val(n.a);
                Tensor& ga = grads[static_cast<size_t>(n.a)];
                size_t lbl = static_cast<size_t>(n.label);
                if (P[lbl] > kLogClamp) {
                    ga[lbl] += -g[0] / P[lbl];
                }
                break;
            }
        }
    }
    return grads;
}

std::vector<Tensor> Tape::gradients(int loss_id, const std::vector<int>& param_ids) const {
    std::vector<Tensor> all = backward(loss_id);
    std::vector<Tensor> out;
    out.reserve(param_ids.size());
    for (int id : param_ids) {
        check_id(id);
        out.push_back(std::move(all[static_cast<size_t>(id)]));
    }
    return out;
}

}  // namespace augdiff
