#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "was/tensor.hpp"

namespace was {

// Reverse-mode tape over dense double tensors. A forward pass records one
// node per operation; backward() replays the records in reverse creation
// order, so gradient accumulation order is fixed and runs are bit-for-bit
// reproducible. Distribution inputs to log/KL are clamped below at kLogEps.
constexpr double kLogEps = 1e-12;

class Tape;

struct Var {
    Tape* tape = nullptr;
    int id = -1;
    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor& value() const;
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value, bool requires_grad = false) {
        nodes_.push_back(Node{std::move(value), Tensor{}, nullptr, requires_grad});
        return Var{this, static_cast<int>(nodes_.size()) - 1};
    }

    const Tensor& value(int id) const { return nodes_[id].value; }

    bool needs_grad(int id) const { return nodes_[id].needs_grad; }

    // Upstream-gradient accumulator, zero-initialized on first touch.
    Tensor& grad_buf(int id) {
        Node& n = nodes_[id];
        if (n.grad.numel() == 0) n.grad = Tensor::zeros(n.value.shape);
        return n.grad;
    }

    Var push(Tensor value, std::vector<int> parents,
             std::function<void(Tape&, const Tensor&)> back) {
        bool needs = false;
        for (int p : parents) needs = needs || nodes_[p].needs_grad;
        nodes_.push_back(Node{std::move(value), Tensor{}, needs ? std::move(back) : nullptr, needs});
        return Var{this, static_cast<int>(nodes_.size()) - 1};
    }

    void backward(Var loss) {
        if (loss.tape != this) throw config_error("backward: loss from a different tape");
        if (nodes_[loss.id].value.numel() != 1)
            throw config_error("backward: loss is not scalar, shape " + nodes_[loss.id].value.shape_str());
        grad_buf(loss.id).data[0] += 1.0;
        for (int id = loss.id; id >= 0; --id) {
            Node& n = nodes_[id];
            if (n.back && n.grad.numel() != 0) n.back(*this, n.grad);
        }
    }

    // Gradient of a leaf/intermediate after backward(); zeros if the node
    // never participated in the loss.
    const Tensor& grad(Var v) {
        if (v.tape != this) throw config_error("grad: var from a different tape");
        return grad_buf(v.id);
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Tape&, const Tensor&)> back;
        bool needs_grad = false;
    };
    std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

namespace detail {
inline Tape& same_tape(Var a, Var b, const char* op) {
    if (a.tape != b.tape) throw config_error(std::string(op) + ": vars from different tapes");
    return *a.tape;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise / linear algebra

inline Var matmul(Var a, Var b) {
    Tape& t = detail::same_tape(a, b, "matmul");
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    check_rank2(A, "matmul");
    check_rank2(B, "matmul");
    if (A.shape[1] != B.shape[0])
        throw config_error("matmul: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
    const int n = A.shape[0], k = A.shape[1], m = B.shape[1];
    Tensor C = Tensor::zeros({n, m});
    for (int i = 0; i < n; ++i)
        for (int l = 0; l < k; ++l) {
            const double av = A.at(i, l);
            if (av == 0.0) continue;
            for (int j = 0; j < m; ++j) C.at(i, j) += av * B.at(l, j);
        }
    int aid = a.id, bid = b.id;
    return t.push(std::move(C), {aid, bid}, [aid, bid, n, k, m](Tape& tp, const Tensor& g) {
        const Tensor& A = tp.value(aid);
        const Tensor& B = tp.value(bid);
        if (tp.needs_grad(aid)) {
            Tensor& ga = tp.grad_buf(aid);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j) {
                    const double gv = g.at(i, j);
                    if (gv == 0.0) continue;
                    for (int l = 0; l < k; ++l) ga.at(i, l) += gv * B.at(l, j);
                }
        }
        if (tp.needs_grad(bid)) {
            Tensor& gb = tp.grad_buf(bid);
            for (int i = 0; i < n; ++i)
                for (int l = 0; l < k; ++l) {
                    const double av = A.at(i, l);
                    if (av == 0.0) continue;
                    for (int j = 0; j < m; ++j) gb.at(l, j) += av * g.at(i, j);
                }
        }
    });
}

inline Var transpose(Var a) {
    Tape& t = *a.tape;
    const Tensor& A = a.value();
    check_rank2(A, "transpose");
    const int n = A.shape[0], m = A.shape[1];
    Tensor C = Tensor::zeros({m, n});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) C.at(j, i) = A.at(i, j);
    int aid = a.id;
    return t.push(std::move(C), {aid}, [aid, n, m](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad_buf(aid);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) ga.at(i, j) += g.at(j, i);
    });
}

inline Var add(Var a, Var b) {
    Tape& t = detail::same_tape(a, b, "add");
    check_same_shape(a.value(), b.value(), "add");
    Tensor C = a.value();
    for (std::size_t i = 0; i < C.numel(); ++i) C[i] += b.value()[i];
    int aid = a.id, bid = b.id;
    return t.push(std::move(C), {aid, bid}, [aid, bid](Tape& tp, const Tensor& g) {
        if (tp.needs_grad(aid)) {
            Tensor& ga = tp.grad_buf(aid);
            for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
        }
        if (tp.needs_grad(bid)) {
            Tensor& gb = tp.grad_buf(bid);
            for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i];
        }
    });
}

inline Var sub(Var a, Var b) {
    Tape& t = detail::same_tape(a, b, "sub");
    check_same_shape(a.value(), b.value(), "sub");
    Tensor C = a.value();
    for (std::size_t i = 0; i < C.numel(); ++i) C[i] -= b.value()[i];
    int aid = a.id, bid = b.id;
    return t.push(std::move(C), {aid, bid}, [aid, bid](Tape& tp, const Tensor& g) {
        if (tp.needs_grad(aid)) {
            Tensor& ga = tp.grad_buf(aid);
            for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
        }
        if (tp.needs_grad(bid)) {
            Tensor& gb = tp.grad_buf(bid);
            for (std::size_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
        }
    });
}

inline Var mul(Var a, Var b) {
    Tape& t = detail::same_tape(a, b, "mul");
    check_same_shape(a.value(), b.value(), "mul");
    Tensor C = a.value();
    for (std::size_t i = 0; i < C.numel(); ++i) C[i] *= b.value()[i];
    int aid = a.id, bid = b.id;
    return t.push(std::move(C), {aid, bid}, [aid, bid](Tape& tp, const Tensor& g) {
        const Tensor& A = tp.value(aid);
        const Tensor& B = tp.value(bid);
        if (tp.needs_grad(aid)) {
            Tensor& ga = tp.grad_buf(aid);
            for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * B[i];
        }
        if (tp.needs_grad(bid)) {
            Tensor& gb = tp.grad_buf(bid);
            for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * A[i];
        }
    });
}

inline Var scale(Var a, double s) {
    Tensor C = a.value();
    for (double& v : C.data) v *= s;
    int aid = a.id;
    return a.tape->push(std::move(C), {aid}, [aid, s](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad_buf(aid);
        for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += s * g[i];
    });
}

inline Var affine(Var a, double mul_c, double add_c) {
    Tensor C = a.value();
    for (double& v : C.data) v = mul_c * v + add_c;
    int aid = a.id;
    return a.tape->push(std::move(C), {aid}, [aid, mul_c](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad_buf(aid);
        for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += mul_c * g[i];
    });
}

// out[i,c] = a[i,c] + b[c]  (bias broadcast along rows)
inline Var add_bias(Var a, Var b) {
    Tape& t = detail::same_tape(a, b, "add_bias");
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    check_rank2(A, "add_bias");
    if (B.rank() != 1 || B.shape[0] != A.shape[1])
        throw config_error("add_bias: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
    const int n = A.shape[0], c = A.shape[1];
    Tensor C = A;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) C.at(i, j) += B[j];
    int aid = a.id, bid = b.id;
    return t.push(std::move(C), {aid, bid}, [aid, bid, n, c](Tape& tp, const Tensor& g) {
        if (tp.needs_grad(aid)) {
            Tensor& ga = tp.grad_buf(aid);
            for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
        }
        if (tp.needs_grad(bid)) {
            Tensor& gb = tp.grad_buf(bid);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < c; ++j) gb[j] += g.at(i, j);
        }
    });
}

// out[k,c] = a[k,c] * v[c]  (column-wise scaling by a rank-1 vector)
inline Var scale_cols(Var a, Var v) {
    Tape& t = detail::same_tape(a, v, "scale_cols");
    const Tensor& A = a.value();
    const Tensor& V = v.value();
    check_rank2(A, "scale_cols");
    if (V.rank() != 1 || V.shape[0] != A.shape[1])
        throw config_error("scale_cols: shape mismatch " + A.shape_str() + " vs " + V.shape_str());
    const int n = A.shape[0], c = A.shape[1];
    Tensor C = A;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) C.at(i, j) *= V[j];
    int aid = a.id, vid = v.id;
    return t.push(std::move(C), {aid, vid}, [aid, vid, n, c](Tape& tp, const Tensor& g) {
        const Tensor& A = tp.value(aid);
        const Tensor& V = tp.value(vid);
        if (tp.needs_grad(aid)) {
            Tensor& ga = tp.grad_buf(aid);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < c; ++j) ga.at(i, j) += g.at(i, j) * V[j];
        }
        if (tp.needs_grad(vid)) {
            Tensor& gv = tp.grad_buf(vid);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < c; ++j) gv[j] += g.at(i, j) * A.at(i, j);
        }
    });
}

// ---------------------------------------------------------------------------
// nonlinearities

inline Var relu(Var a) {
    Tensor C = a.value();
    for (double& v : C.data) v = v > 0.0 ? v : 0.0;
    int aid = a.id;
    return a.tape->push(std::move(C), {aid}, [aid](Tape& tp, const Tensor& g) {
        const Tensor& A = tp.value(aid);
        Tensor& ga = tp.grad_buf(aid);
        for (std::size_t i = 0; i < g.numel(); ++i)
            if (A[i] > 0.0) ga[i] += g[i];
    });
}

inline Var sigmoid(Var a) {
    Tensor C = a.value();
    for (double& v : C.data) v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    int aid = a.id;
    // a node's own index is known before push, so backward can read its output
    const int oid = static_cast<int>(a.tape->size());
    return a.tape->push(std::move(C), {aid}, [aid, oid](Tape& tp, const Tensor& g) {
        const Tensor& Y = tp.value(oid);
        Tensor& ga = tp.grad_buf(aid);
        for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * Y[i] * (1.0 - Y[i]);
    });
}

inline Var vexp(Var a) {
    Tensor C = a.value();
    for (double& v : C.data) v = std::exp(v);
    int aid = a.id;
    const int oid = static_cast<int>(a.tape->size());
    return a.tape->push(std::move(C), {aid}, [aid, oid](Tape& tp, const Tensor& g) {
        const Tensor& Y = tp.value(oid);
        Tensor& ga = tp.grad_buf(aid);
        for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * Y[i];
    });
}

// ---------------------------------------------------------------------------
// row-wise reductions / normalizations

inline Var row_softmax(Var a) {
    const Tensor& A = a.value();
    check_rank2(A, "row_softmax");
    const int n = A.shape[0], c = A.shape[1];
    Tensor Y = Tensor::zeros({n, c});
    for (int i = 0; i < n; ++i) {
        double mx = A.at(i, 0);
        for (int j = 1; j < c; ++j) mx = std::max(mx, A.at(i, j));
        double s = 0.0;
        for (int j = 0; j < c; ++j) {
            double e = std::exp(A.at(i, j) - mx);
            Y.at(i, j) = e;
            s += e;
        }
        for (int j = 0; j < c; ++j) Y.at(i, j) /= s;
    }
    int aid = a.id;
    const int oid = static_cast<int>(a.tape->size());
    return a.tape->push(std::move(Y), {aid}, [aid, oid, n, c](Tape& tp, const Tensor& g) {
        const Tensor& Y = tp.value(oid);
        Tensor& ga = tp.grad_buf(aid);
        for (int i = 0; i < n; ++i) {
            double dot = 0.0;
            for (int j = 0; j < c; ++j) dot += g.at(i, j) * Y.at(i, j);
            for (int j = 0; j < c; ++j) ga.at(i, j) += Y.at(i, j) * (g.at(i, j) - dot);
        }
    });
}

inline Var row_log_softmax(Var a) {
    const Tensor& A = a.value();
    check_rank2(A, "row_log_softmax");
    const int n = A.shape[0], c = A.shape[1];
    Tensor Y = Tensor::zeros({n, c});
    for (int i = 0; i < n; ++i) {
        double mx = A.at(i, 0);
        for (int j = 1; j < c; ++j) mx = std::max(mx, A.at(i, j));
        double s = 0.0;
        for (int j = 0; j < c; ++j) s += std::exp(A.at(i, j) - mx);
        const double lse = mx + std::log(s);
        for (int j = 0; j < c; ++j) Y.at(i, j) = A.at(i, j) - lse;
    }
    int aid = a.id;
    const int oid = static_cast<int>(a.tape->size());
    return a.tape->push(std::move(Y), {aid}, [aid, oid, n, c](Tape& tp, const Tensor& g) {
        const Tensor& Y = tp.value(oid);
        Tensor& ga = tp.grad_buf(aid);
        for (int i = 0; i < n; ++i) {
            double gsum = 0.0;
            for (int j = 0; j < c; ++j) gsum += g.at(i, j);
            for (int j = 0; j < c; ++j) ga.at(i, j) += g.at(i, j) - std::exp(Y.at(i, j)) * gsum;
        }
    });
}

// rows divided by their sums
inline Var row_normalize(Var a) {
    const Tensor& A = a.value();
    check_rank2(A, "row_normalize");
    const int n = A.shape[0], c = A.shape[1];
    Tensor Y = A;
    std::vector<double> sums(n);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < c; ++j) s += A.at(i, j);
        if (s == 0.0) throw config_error("row_normalize: zero row sum at row " + std::to_string(i));
        sums[i] = s;
        for (int j = 0; j < c; ++j) Y.at(i, j) /= s;
    }
    int aid = a.id;
    const int oid = static_cast<int>(a.tape->size());
    return a.tape->push(std::move(Y), {aid}, [aid, oid, n, c, sums](Tape& tp, const Tensor& g) {
        const Tensor& Y = tp.value(oid);
        Tensor& ga = tp.grad_buf(aid);
        for (int i = 0; i < n; ++i) {
            double dot = 0.0;
            for (int j = 0; j < c; ++j) dot += g.at(i, j) * Y.at(i, j);
            for (int j = 0; j < c; ++j) ga.at(i, j) += (g.at(i, j) - dot) / sums[i];
        }
    });
}

inline Var row_sum(Var a) {
    const Tensor& A = a.value();
    check_rank2(A, "row_sum");
    const int n = A.shape[0], c = A.shape[1];
    Tensor Y = Tensor::zeros({n, 1});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) Y.at(i, 0) += A.at(i, j);
    int aid = a.id;
    return a.tape->push(std::move(Y), {aid}, [aid, n, c](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad_buf(aid);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < c; ++j) ga.at(i, j) += g.at(i, 0);
    });
}

// out[i,j] = a[i,j] / d[i,0]
inline Var div_colvec(Var a, Var d) {
    Tape& t = detail::same_tape(a, d, "div_colvec");
    const Tensor& A = a.value();
    const Tensor& D = d.value();
    check_rank2(A, "div_colvec");
    if (D.rank() != 2 || D.shape[0] != A.shape[0] || D.shape[1] != 1)
        throw config_error("div_colvec: shape mismatch " + A.shape_str() + " vs " + D.shape_str());
    const int n = A.shape[0], c = A.shape[1];
    Tensor Y = A;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) Y.at(i, j) /= D.at(i, 0);
    int aid = a.id, did = d.id;
    const int oid = static_cast<int>(t.size());
    return t.push(std::move(Y), {aid, did}, [aid, did, oid, n, c](Tape& tp, const Tensor& g) {
        const Tensor& D = tp.value(did);
        const Tensor& Y = tp.value(oid);
        if (tp.needs_grad(aid)) {
            Tensor& ga = tp.grad_buf(aid);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < c; ++j) ga.at(i, j) += g.at(i, j) / D.at(i, 0);
        }
        if (tp.needs_grad(did)) {
            Tensor& gd = tp.grad_buf(did);
            for (int i = 0; i < n; ++i) {
                double dot = 0.0;
                for (int j = 0; j < c; ++j) dot += g.at(i, j) * Y.at(i, j);
                gd.at(i, 0) -= dot / D.at(i, 0);
            }
        }
    });
}

// each row divided by its maximum entry (first index wins ties); the maximum
// entry maps to exactly 1 and is treated as constant in backward
inline Var div_rowmax(Var a) {
    const Tensor& A = a.value();
    check_rank2(A, "div_rowmax");
    const int n = A.shape[0], c = A.shape[1];
    Tensor Y = A;
    std::vector<int> arg(n);
    for (int i = 0; i < n; ++i) {
        int am = 0;
        for (int j = 1; j < c; ++j)
            if (A.at(i, j) > A.at(i, am)) am = j;
        arg[i] = am;
        const double m = A.at(i, am);
        if (m <= 0.0) throw config_error("div_rowmax: non-positive row maximum at row " + std::to_string(i));
        for (int j = 0; j < c; ++j) Y.at(i, j) /= m;
        Y.at(i, am) = 1.0;
    }
    int aid = a.id;
    const int oid = static_cast<int>(a.tape->size());
    return a.tape->push(std::move(Y), {aid}, [aid, oid, n, c, arg](Tape& tp, const Tensor& g) {
        const Tensor& A = tp.value(aid);
        const Tensor& Y = tp.value(oid);
        Tensor& ga = tp.grad_buf(aid);
        for (int i = 0; i < n; ++i) {
            const int am = arg[i];
            const double m = A.at(i, am);
            double acc = 0.0;
            for (int j = 0; j < c; ++j) {
                if (j == am) continue;
                ga.at(i, j) += g.at(i, j) / m;
                acc += g.at(i, j) * Y.at(i, j);
            }
            ga.at(i, am) -= acc / m;
        }
    });
}

inline Var mean_rows(Var a) {
    const Tensor& A = a.value();
    check_rank2(A, "mean_rows");
    const int n = A.shape[0], c = A.shape[1];
    Tensor Y = Tensor::zeros({1, c});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) Y.at(0, j) += A.at(i, j);
    for (int j = 0; j < c; ++j) Y.at(0, j) /= n;
    int aid = a.id;
    return a.tape->push(std::move(Y), {aid}, [aid, n, c](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad_buf(aid);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < c; ++j) ga.at(i, j) += g.at(0, j) / n;
    });
}

inline Var sum_all(Var a) {
    double s = 0.0;
    for (double v : a.value().data) s += v;
    int aid = a.id;
    return a.tape->push(Tensor::scalar(s), {aid}, [aid](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad_buf(aid);
        for (double& v : ga.data) v += g[0];
    });
}

inline Var mean_all(Var a) {
    const double inv = 1.0 / static_cast<double>(a.value().numel());
    double s = 0.0;
    for (double v : a.value().data) s += v;
    int aid = a.id;
    return a.tape->push(Tensor::scalar(s * inv), {aid}, [aid, inv](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad_buf(aid);
        for (double& v : ga.data) v += g[0] * inv;
    });
}

// ---------------------------------------------------------------------------
// indexing

inline Var gather_rows(Var a, std::vector<int> idx) {
    const Tensor& A = a.value();
    check_rank2(A, "gather_rows");
    const int c = A.shape[1];
    Tensor Y = Tensor::zeros({static_cast<int>(idx.size()), c});
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] < 0 || idx[r] >= A.shape[0])
            throw config_error("gather_rows: index " + std::to_string(idx[r]) + " out of range");
        for (int j = 0; j < c; ++j) Y.at(static_cast<int>(r), j) = A.at(idx[r], j);
    }
    int aid = a.id;
    return a.tape->push(std::move(Y), {aid}, [aid, idx, c](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad_buf(aid);
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (int j = 0; j < c; ++j) ga.at(idx[r], j) += g.at(static_cast<int>(r), j);
    });
}

inline Var concat_cols(Var a, Var b) {
    Tape& t = detail::same_tape(a, b, "concat_cols");
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    check_rank2(A, "concat_cols");
    check_rank2(B, "concat_cols");
    if (A.shape[0] != B.shape[0])
        throw config_error("concat_cols: row mismatch " + A.shape_str() + " vs " + B.shape_str());
    const int n = A.shape[0], ca = A.shape[1], cb = B.shape[1];
    Tensor Y = Tensor::zeros({n, ca + cb});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < ca; ++j) Y.at(i, j) = A.at(i, j);
        for (int j = 0; j < cb; ++j) Y.at(i, ca + j) = B.at(i, j);
    }
    int aid = a.id, bid = b.id;
    return t.push(std::move(Y), {aid, bid}, [aid, bid, n, ca, cb](Tape& tp, const Tensor& g) {
        if (tp.needs_grad(aid)) {
            Tensor& ga = tp.grad_buf(aid);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < ca; ++j) ga.at(i, j) += g.at(i, j);
        }
        if (tp.needs_grad(bid)) {
            Tensor& gb = tp.grad_buf(bid);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < cb; ++j) gb.at(i, j) += g.at(i, ca + j);
        }
    });
}

// ---------------------------------------------------------------------------
// losses

// mean over masked rows of cross-entropy between softmax(logits) and labels
inline Var masked_cross_entropy(Var logits, const std::vector<int>& labels, const std::vector<char>& mask) {
    const Tensor& Z = logits.value();
    check_rank2(Z, "masked_cross_entropy");
    const int n = Z.shape[0], c = Z.shape[1];
    if (static_cast<int>(labels.size()) != n || static_cast<int>(mask.size()) != n)
        throw config_error("masked_cross_entropy: labels/mask length does not match " + Z.shape_str());
    int count = 0;
    for (char m : mask) count += m ? 1 : 0;
    if (count == 0) throw config_error("masked_cross_entropy: empty mask");
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        double mx = Z.at(i, 0);
        for (int j = 1; j < c; ++j) mx = std::max(mx, Z.at(i, j));
        double s = 0.0;
        for (int j = 0; j < c; ++j) s += std::exp(Z.at(i, j) - mx);
        loss += mx + std::log(s) - Z.at(i, labels[i]);
    }
    loss /= count;
    int zid = logits.id;
    return logits.tape->push(Tensor::scalar(loss), {zid},
                             [zid, labels, mask, n, c, count](Tape& tp, const Tensor& g) {
                                 const Tensor& Z = tp.value(zid);
                                 Tensor& gz = tp.grad_buf(zid);
                                 const double gs = g[0] / count;
                                 for (int i = 0; i < n; ++i) {
                                     if (!mask[i]) continue;
                                     double mx = Z.at(i, 0);
                                     for (int j = 1; j < c; ++j) mx = std::max(mx, Z.at(i, j));
                                     double s = 0.0;
                                     for (int j = 0; j < c; ++j) s += std::exp(Z.at(i, j) - mx);
                                     for (int j = 0; j < c; ++j) {
                                         double p = std::exp(Z.at(i, j) - mx) / s;
                                         gz.at(i, j) += gs * (p - (j == labels[i] ? 1.0 : 0.0));
                                     }
                                 }
                             });
}

// mean over masked rows of -log(probs[i, labels[i]]); probs clamped at kLogEps
inline Var nll_from_probs(Var probs, const std::vector<int>& labels, const std::vector<char>& mask) {
    const Tensor& P = probs.value();
    check_rank2(P, "nll_from_probs");
    const int n = P.shape[0];
    if (static_cast<int>(labels.size()) != n || static_cast<int>(mask.size()) != n)
        throw config_error("nll_from_probs: labels/mask length does not match " + P.shape_str());
    int count = 0;
    for (char m : mask) count += m ? 1 : 0;
    if (count == 0) throw config_error("nll_from_probs: empty mask");
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        loss -= std::log(std::max(P.at(i, labels[i]), kLogEps));
    }
    loss /= count;
    int pid = probs.id;
    return probs.tape->push(Tensor::scalar(loss), {pid},
                            [pid, labels, mask, n, count](Tape& tp, const Tensor& g) {
                                const Tensor& P = tp.value(pid);
                                Tensor& gp = tp.grad_buf(pid);
                                const double gs = g[0] / count;
                                for (int i = 0; i < n; ++i) {
                                    if (!mask[i]) continue;
                                    const double p = P.at(i, labels[i]);
                                    if (p >= kLogEps) gp.at(i, labels[i]) -= gs / p;
                                }
                            });
}

// mean over rows of KL(p||q); both sides clamped at kLogEps before log
inline Var kl_divergence(Var p, Var q) {
    Tape& t = detail::same_tape(p, q, "kl_divergence");
    const Tensor& P = p.value();
    const Tensor& Q = q.value();
    check_same_shape(P, Q, "kl_divergence");
    check_rank2(P, "kl_divergence");
    const int n = P.shape[0], c = P.shape[1];
    double loss = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) {
            const double pv = std::max(P.at(i, j), kLogEps);
            const double qv = std::max(Q.at(i, j), kLogEps);
            loss += pv * (std::log(pv) - std::log(qv));
        }
    loss /= n;
    int pid = p.id, qid = q.id;
    return t.push(Tensor::scalar(loss), {pid, qid}, [pid, qid, n, c](Tape& tp, const Tensor& g) {
        const Tensor& P = tp.value(pid);
        const Tensor& Q = tp.value(qid);
        const double gs = g[0] / n;
        if (tp.needs_grad(pid)) {
            Tensor& gp = tp.grad_buf(pid);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < c; ++j) {
                    const double pv = P.at(i, j);
                    if (pv < kLogEps) continue;
                    const double qv = std::max(Q.at(i, j), kLogEps);
                    gp.at(i, j) += gs * (std::log(pv) - std::log(qv) + 1.0);
                }
        }
        if (tp.needs_grad(qid)) {
            Tensor& gq = tp.grad_buf(qid);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < c; ++j) {
                    const double qv = Q.at(i, j);
                    if (qv < kLogEps) continue;
                    const double pv = std::max(P.at(i, j), kLogEps);
                    gq.at(i, j) -= gs * pv / qv;
                }
        }
    });
}

// numerically stable mean binary cross-entropy on logits; targets constant
inline Var bce_with_logits(Var logits, const Tensor& targets) {
    const Tensor& Z = logits.value();
    check_same_shape(Z, targets, "bce_with_logits");
    const std::size_t n = Z.numel();
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double z = Z[i], tgt = targets[i];
        loss += std::max(z, 0.0) - z * tgt + std::log1p(std::exp(-std::abs(z)));
    }
    loss /= static_cast<double>(n);
    int zid = logits.id;
    return logits.tape->push(Tensor::scalar(loss), {zid}, [zid, targets, n](Tape& tp, const Tensor& g) {
        const Tensor& Z = tp.value(zid);
        Tensor& gz = tp.grad_buf(zid);
        const double gs = g[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double z = Z[i];
            const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
            gz[i] += gs * (s - targets[i]);
        }
    });
}

// mean squared error against a constant target
inline Var mse_const(Var pred, const Tensor& target) {
    const Tensor& P = pred.value();
    check_same_shape(P, target, "mse_const");
    const std::size_t n = P.numel();
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = P[i] - target[i];
        loss += d * d;
    }
    loss /= static_cast<double>(n);
    int pid = pred.id;
    return pred.tape->push(Tensor::scalar(loss), {pid}, [pid, target, n](Tape& tp, const Tensor& g) {
        const Tensor& P = tp.value(pid);
        Tensor& gp = tp.grad_buf(pid);
        const double gs = 2.0 * g[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) gp[i] += gs * (P[i] - target[i]);
    });
}

// ---------------------------------------------------------------------------
// distillation-specific ops

// out[i,c] = sum_k W[i,k] * dists[k][i,c]; the teacher stack is constant
inline Var mix_rows(Var w, std::vector<Tensor> dists) {
    const Tensor& W = w.value();
    check_rank2(W, "mix_rows");
    const int n = W.shape[0], k = W.shape[1];
    if (static_cast<int>(dists.size()) != k)
        throw config_error("mix_rows: weight cols " + std::to_string(k) + " vs " +
                           std::to_string(dists.size()) + " distributions");
    for (const Tensor& d : dists)
        if (d.rank() != 2 || d.shape[0] != n)
            throw config_error("mix_rows: distribution shape " + d.shape_str() + " does not match n=" + std::to_string(n));
    const int c = dists[0].shape[1];
    Tensor Y = Tensor::zeros({n, c});
    for (int t = 0; t < k; ++t)
        for (int i = 0; i < n; ++i) {
            const double wv = W.at(i, t);
            if (wv == 0.0) continue;
            for (int j = 0; j < c; ++j) Y.at(i, j) += wv * dists[t].at(i, j);
        }
    int wid = w.id;
    return w.tape->push(std::move(Y), {wid}, [wid, dists, n, k, c](Tape& tp, const Tensor& g) {
        Tensor& gw = tp.grad_buf(wid);
        for (int t = 0; t < k; ++t)
            for (int i = 0; i < n; ++i) {
                double dot = 0.0;
                for (int j = 0; j < c; ++j) dot += g.at(i, j) * dists[t].at(i, j);
                gw.at(i, t) += dot;
            }
    });
}

// Hard Bernoulli draw per entry: 1 iff log(p) + noise >= 0, which under
// Gumbel(0,1) noise selects with probability 1 - exp(-p). With fallback on,
// a row that sampled all zeros gets its largest-p entry (lowest index wins)
// forced to 1 so every row keeps at least one selection.
inline Tensor gate_sample(const Tensor& p, const Tensor& noise, bool fallback) {
    check_same_shape(p, noise, "gate_sample");
    Tensor y = Tensor::zeros(p.shape);
    for (std::size_t i = 0; i < p.numel(); ++i) {
        const double lp = std::log(std::max(p[i], kLogEps));
        y[i] = (lp + noise[i] >= 0.0) ? 1.0 : 0.0;
    }
    if (fallback) {
        check_rank2(p, "gate_sample");
        const int n = p.shape[0], k = p.shape[1];
        for (int i = 0; i < n; ++i) {
            double sum = 0.0;
            for (int j = 0; j < k; ++j) sum += y.at(i, j);
            if (sum > 0.0) continue;
            int am = 0;
            for (int j = 1; j < k; ++j)
                if (p.at(i, j) > p.at(i, am)) am = j;
            y.at(i, am) = 1.0;
        }
    }
    return y;
}

// Binary Gumbel gate: forward is gate_sample, backward follows the sigmoid
// relaxation (straight-through), so upstream gradient reaches the sampling
// probabilities even though the forward output is hard 0/1.
inline Var gumbel_gate(Var kappa_norm, const Tensor& noise, double tau, bool fallback = false) {
    if (tau <= 0.0) throw config_error("gumbel_gate: tau must be positive");
    const Tensor& P = kappa_norm.value();
    Tensor Y = gate_sample(P, noise, fallback);
    int pid = kappa_norm.id;
    return kappa_norm.tape->push(std::move(Y), {pid}, [pid, noise, tau](Tape& tp, const Tensor& g) {
        const Tensor& P = tp.value(pid);
        Tensor& gp = tp.grad_buf(pid);
        for (std::size_t i = 0; i < g.numel(); ++i) {
            const double p = std::max(P[i], kLogEps);
            const double z = (std::log(p) + noise[i]) / tau;
            const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
            gp[i] += g[i] * s * (1.0 - s) / (tau * p);
        }
    });
}

}  // namespace was
