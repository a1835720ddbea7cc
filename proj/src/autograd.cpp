#include "slicesim/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace slicesim::ad {

namespace {

enum BinOp { kAdd, kSub, kMul, kDiv };

// How b maps onto the shape of a.
enum class Bcast { Same, Row, Col, Scalar };

Bcast broadcast_kind(const Matrix& a, const Matrix& b) {
    if (a.rows == b.rows && a.cols == b.cols) return Bcast::Same;
    if (b.rows == 1 && b.cols == 1) return Bcast::Scalar;
    if (b.rows == 1 && b.cols == a.cols) return Bcast::Row;
    if (b.cols == 1 && b.rows == a.rows) return Bcast::Col;
    throw std::invalid_argument("autograd: incompatible shapes " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                                " and " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
}

inline std::size_t bidx(Bcast k, int r, int c, int cols_b) {
    switch (k) {
        case Bcast::Same: return static_cast<std::size_t>(r) * cols_b + c;
        case Bcast::Row: return static_cast<std::size_t>(c);
        case Bcast::Col: return static_cast<std::size_t>(r);
        case Bcast::Scalar: return 0;
    }
    return 0;
}

}  // namespace

Matrix::Matrix(int r, int c, std::vector<double> v) : rows(r), cols(c), data(std::move(v)) {
    if (data.size() != static_cast<std::size_t>(r) * c) throw std::invalid_argument("Matrix: data size mismatch");
}

Matrix softmax_rows(const Matrix& m) {
    Matrix out(m.rows, m.cols);
    for (int r = 0; r < m.rows; ++r) {
        auto in = m.row(r);
        auto o = out.row(r);
        const double mx = *std::max_element(in.begin(), in.end());
        double s = 0.0;
        for (int c = 0; c < m.cols; ++c) s += (o[c] = std::exp(in[c] - mx));
        for (int c = 0; c < m.cols; ++c) o[c] /= s;
    }
    return out;
}

Var Tape::push(Matrix value, std::function<void()> back) {
    Node n;
    n.value = std::move(value);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Matrix& Tape::g(int id) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad) {
        n.grad = Matrix(n.value.rows, n.value.cols);
        n.has_grad = true;
    }
    return n.grad;
}

const Matrix& Tape::grad(Var v) { return g(v.id); }

Var Tape::constant(Matrix m) {
    Var v = push(std::move(m));
    node(v).frozen = true;
    return v;
}

Var Tape::param(const double* value, double* grad, int rows, int cols) {
    Matrix m(rows, cols, std::vector<double>(value, value + static_cast<std::ptrdiff_t>(rows) * cols));
    Var v = push(std::move(m));
    node(v).ext_grad = grad;
    return v;
}

void Tape::backward(Var out) {
    if (value(out).size() != 1) throw std::invalid_argument("backward: output must be 1x1");
    for (auto& n : nodes_) {
        if (n.has_grad) std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
    }
    g(out.id).data[0] = 1.0;
    for (int i = out.id; i >= 0; --i) {
        auto& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.has_grad || n.frozen) continue;
        if (n.back) n.back();
        auto& m = nodes_[static_cast<std::size_t>(i)];
        if (m.ext_grad) {
            for (std::size_t k = 0; k < m.grad.size(); ++k) m.ext_grad[k] += m.grad.data[k];
        }
    }
}

Var Tape::matmul(Var a, Var b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    if (A.cols != B.rows) throw std::invalid_argument("matmul: inner dimension mismatch");
    Matrix C(A.rows, B.cols);
    for (int i = 0; i < A.rows; ++i) {
        double* crow = C.data.data() + static_cast<std::size_t>(i) * C.cols;
        for (int k = 0; k < A.cols; ++k) {
            const double aik = A(i, k);
            if (aik == 0.0) continue;
            const double* brow = B.data.data() + static_cast<std::size_t>(k) * B.cols;
            for (int j = 0; j < B.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    const int ia = a.id, ib = b.id;
    Var out = push(std::move(C));
    const int io = out.id;
    node(out).back = [this, ia, ib, io] {
        const Matrix& A = nodes_[static_cast<std::size_t>(ia)].value;
        const Matrix& B = nodes_[static_cast<std::size_t>(ib)].value;
        const Matrix& G = nodes_[static_cast<std::size_t>(io)].grad;
        if (!nodes_[static_cast<std::size_t>(ia)].frozen) {
            Matrix& gA = g(ia);
            // dA = G * B^T
            for (int i = 0; i < A.rows; ++i) {
                const double* grow = G.data.data() + static_cast<std::size_t>(i) * G.cols;
                double* garow = gA.data.data() + static_cast<std::size_t>(i) * gA.cols;
                for (int k = 0; k < A.cols; ++k) {
                    const double* brow = B.data.data() + static_cast<std::size_t>(k) * B.cols;
                    double acc = 0.0;
                    for (int j = 0; j < B.cols; ++j) acc += grow[j] * brow[j];
                    garow[k] += acc;
                }
            }
        }
        if (nodes_[static_cast<std::size_t>(ib)].frozen) return;
        Matrix& gB = g(ib);
        // dB = A^T * G
        for (int i = 0; i < A.rows; ++i)
            for (int k = 0; k < A.cols; ++k) {
                const double aik = A(i, k);
                if (aik == 0.0) continue;
                double* gbrow = gB.data.data() + static_cast<std::size_t>(k) * gB.cols;
                const double* grow = G.data.data() + static_cast<std::size_t>(i) * G.cols;
                for (int j = 0; j < B.cols; ++j) gbrow[j] += aik * grow[j];
            }
    };
    return out;
}

Var Tape::broadcast_binary(Var a, Var b, int kind) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    const Bcast bk = broadcast_kind(A, B);
    Matrix C(A.rows, A.cols);
    for (int r = 0; r < A.rows; ++r)
        for (int c = 0; c < A.cols; ++c) {
            const double x = A(r, c);
            const double y = B.data[bidx(bk, r, c, B.cols)];
            double z = 0.0;
            switch (kind) {
                case kAdd: z = x + y; break;
                case kSub: z = x - y; break;
                case kMul: z = x * y; break;
                case kDiv: z = x / y; break;
            }
            C(r, c) = z;
        }
    const int ia = a.id, ib = b.id;
    Var out = push(std::move(C));
    const int io = out.id;
    node(out).back = [this, ia, ib, io, bk, kind] {
        const Matrix& A = nodes_[static_cast<std::size_t>(ia)].value;
        const Matrix& B = nodes_[static_cast<std::size_t>(ib)].value;
        const Matrix& G = nodes_[static_cast<std::size_t>(io)].grad;
        Matrix& gA = g(ia);
        Matrix& gB = g(ib);
        for (int r = 0; r < A.rows; ++r)
            for (int c = 0; c < A.cols; ++c) {
                const double gr = G(r, c);
                const std::size_t j = bidx(bk, r, c, B.cols);
                const double x = A(r, c);
                const double y = B.data[j];
                switch (kind) {
                    case kAdd: gA(r, c) += gr; gB.data[j] += gr; break;
                    case kSub: gA(r, c) += gr; gB.data[j] -= gr; break;
                    case kMul: gA(r, c) += gr * y; gB.data[j] += gr * x; break;
                    case kDiv: gA(r, c) += gr / y; gB.data[j] -= gr * x / (y * y); break;
                }
            }
    };
    return out;
}

Var Tape::add(Var a, Var b) { return broadcast_binary(a, b, kAdd); }
Var Tape::sub(Var a, Var b) { return broadcast_binary(a, b, kSub); }
Var Tape::mul(Var a, Var b) { return broadcast_binary(a, b, kMul); }
Var Tape::div(Var a, Var b) { return broadcast_binary(a, b, kDiv); }

#define SLICESIM_UNARY(NAME, VALUE, DERIV)                                                        \
    Var Tape::NAME(Var a) {                                                                       \
        const Matrix& A = value(a);                                                               \
        Matrix C(A.rows, A.cols);                                                                 \
        for (std::size_t k = 0; k < A.size(); ++k) {                                              \
            const double x = A.data[k];                                                           \
            C.data[k] = (VALUE);                                                                  \
        }                                                                                         \
        const int ia = a.id;                                                                      \
        Var out = push(std::move(C));                                                             \
        const int io = out.id;                                                                    \
        node(out).back = [this, ia, io] {                                                         \
            const Matrix& A = nodes_[static_cast<std::size_t>(ia)].value;                         \
            const Matrix& Y = nodes_[static_cast<std::size_t>(io)].value;                         \
            const Matrix& G = nodes_[static_cast<std::size_t>(io)].grad;                          \
            Matrix& gA = g(ia);                                                                   \
            for (std::size_t k = 0; k < A.size(); ++k) {                                          \
                const double x = A.data[k];                                                       \
                const double y = Y.data[k];                                                       \
                (void)x;                                                                          \
                (void)y;                                                                          \
                gA.data[k] += G.data[k] * (DERIV);                                                \
            }                                                                                     \
        };                                                                                        \
        return out;                                                                               \
    }

SLICESIM_UNARY(tanh, std::tanh(x), 1.0 - y * y)
SLICESIM_UNARY(exp, std::exp(x), y)
SLICESIM_UNARY(log, std::log(std::max(x, 1e-300)), 1.0 / std::max(x, 1e-300))
SLICESIM_UNARY(sqrt, std::sqrt(std::max(x, 0.0)), 0.5 / std::max(y, 1e-150))
SLICESIM_UNARY(square, x * x, 2.0 * x)
SLICESIM_UNARY(abs, std::abs(x), (x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0)))

#undef SLICESIM_UNARY

Var Tape::scale(Var a, double k) {
    const Matrix& A = value(a);
    Matrix C = A;
    for (auto& v : C.data) v *= k;
    const int ia = a.id;
    Var out = push(std::move(C));
    const int io = out.id;
    node(out).back = [this, ia, io, k] {
        const Matrix& G = nodes_[static_cast<std::size_t>(io)].grad;
        Matrix& gA = g(ia);
        for (std::size_t i = 0; i < G.size(); ++i) gA.data[i] += k * G.data[i];
    };
    return out;
}

Var Tape::add_scalar(Var a, double k) {
    Matrix C = value(a);
    for (auto& v : C.data) v += k;
    const int ia = a.id;
    Var out = push(std::move(C));
    const int io = out.id;
    node(out).back = [this, ia, io] {
        const Matrix& G = nodes_[static_cast<std::size_t>(io)].grad;
        Matrix& gA = g(ia);
        for (std::size_t i = 0; i < G.size(); ++i) gA.data[i] += G.data[i];
    };
    return out;
}

Var Tape::clamp(Var a, double lo, double hi) {
    Matrix C = value(a);
    for (auto& v : C.data) v = std::clamp(v, lo, hi);
    const int ia = a.id;
    Var out = push(std::move(C));
    const int io = out.id;
    node(out).back = [this, ia, io, lo, hi] {
        const Matrix& A = nodes_[static_cast<std::size_t>(ia)].value;
        const Matrix& G = nodes_[static_cast<std::size_t>(io)].grad;
        Matrix& gA = g(ia);
        for (std::size_t i = 0; i < G.size(); ++i)
            if (A.data[i] > lo && A.data[i] < hi) gA.data[i] += G.data[i];
    };
    return out;
}

Var Tape::minimum(Var a, Var b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    if (A.rows != B.rows || A.cols != B.cols) throw std::invalid_argument("minimum: shape mismatch");
    Matrix C(A.rows, A.cols);
    for (std::size_t i = 0; i < A.size(); ++i) C.data[i] = std::min(A.data[i], B.data[i]);
    const int ia = a.id, ib = b.id;
    Var out = push(std::move(C));
    const int io = out.id;
    node(out).back = [this, ia, ib, io] {
        const Matrix& A = nodes_[static_cast<std::size_t>(ia)].value;
        const Matrix& B = nodes_[static_cast<std::size_t>(ib)].value;
        const Matrix& G = nodes_[static_cast<std::size_t>(io)].grad;
        Matrix& gA = g(ia);
        Matrix& gB = g(ib);
        for (std::size_t i = 0; i < G.size(); ++i) {
            if (A.data[i] <= B.data[i]) gA.data[i] += G.data[i];
            else gB.data[i] += G.data[i];
        }
    };
    return out;
}

Var Tape::softmax_rows(Var a) {
    Matrix C = ad::softmax_rows(value(a));
    const int ia = a.id;
    Var out = push(std::move(C));
    const int io = out.id;
    node(out).back = [this, ia, io] {
        const Matrix& Y = nodes_[static_cast<std::size_t>(io)].value;
        const Matrix& G = nodes_[static_cast<std::size_t>(io)].grad;
        Matrix& gA = g(ia);
        for (int r = 0; r < Y.rows; ++r) {
            double dot = 0.0;
            for (int c = 0; c < Y.cols; ++c) dot += G(r, c) * Y(r, c);
            for (int c = 0; c < Y.cols; ++c) gA(r, c) += Y(r, c) * (G(r, c) - dot);
        }
    };
    return out;
}

Var Tape::log_softmax_rows(Var a) {
    const Matrix& A = value(a);
    Matrix C(A.rows, A.cols);
    for (int r = 0; r < A.rows; ++r) {
        double mx = kMaskedLogit;
        for (int c = 0; c < A.cols; ++c)
            if (A(r, c) > kMaskedLogit) mx = std::max(mx, A(r, c));
        double s = 0.0;
        for (int c = 0; c < A.cols; ++c)
            if (A(r, c) > kMaskedLogit) s += std::exp(A(r, c) - mx);
        const double lse = mx + std::log(s);
        for (int c = 0; c < A.cols; ++c) C(r, c) = A(r, c) > kMaskedLogit ? A(r, c) - lse : kMaskedLogit;
    }
    const int ia = a.id;
    Var out = push(std::move(C));
    const int io = out.id;
    node(out).back = [this, ia, io] {
        const Matrix& A = nodes_[static_cast<std::size_t>(ia)].value;
        const Matrix& Y = nodes_[static_cast<std::size_t>(io)].value;
        const Matrix& G = nodes_[static_cast<std::size_t>(io)].grad;
        Matrix& gA = g(ia);
        for (int r = 0; r < Y.rows; ++r) {
            double gs = 0.0;
            for (int c = 0; c < Y.cols; ++c)
                if (A(r, c) > kMaskedLogit) gs += G(r, c);
            for (int c = 0; c < Y.cols; ++c)
                if (A(r, c) > kMaskedLogit) gA(r, c) += G(r, c) - std::exp(Y(r, c)) * gs;
        }
    };
    return out;
}

Var Tape::sum_rows(Var a) {
    const Matrix& A = value(a);
    Matrix C(A.rows, 1);
    for (int r = 0; r < A.rows; ++r) {
        double s = 0.0;
        for (double v : A.row(r)) s += v;
        C(r, 0) = s;
    }
    const int ia = a.id;
    Var out = push(std::move(C));
    const int io = out.id;
    node(out).back = [this, ia, io] {
        const Matrix& G = nodes_[static_cast<std::size_t>(io)].grad;
        Matrix& gA = g(ia);
        for (int r = 0; r < gA.rows; ++r)
            for (int c = 0; c < gA.cols; ++c) gA(r, c) += G(r, 0);
    };
    return out;
}

Var Tape::mean_rows(Var a) { return scale(sum_rows(a), 1.0 / value(a).cols); }

Var Tape::sum_cols(Var a) {
    const Matrix& A = value(a);
    Matrix C(1, A.cols);
    for (int r = 0; r < A.rows; ++r)
        for (int c = 0; c < A.cols; ++c) C(0, c) += A(r, c);
    const int ia = a.id;
    Var out = push(std::move(C));
    const int io = out.id;
    node(out).back = [this, ia, io] {
        const Matrix& G = nodes_[static_cast<std::size_t>(io)].grad;
        Matrix& gA = g(ia);
        for (int r = 0; r < gA.rows; ++r)
            for (int c = 0; c < gA.cols; ++c) gA(r, c) += G(0, c);
    };
    return out;
}

Var Tape::sum(Var a) {
    double s = 0.0;
    for (double v : value(a).data) s += v;
    const int ia = a.id;
    Var out = push(Matrix(1, 1, s));
    const int io = out.id;
    node(out).back = [this, ia, io] {
        const double G = nodes_[static_cast<std::size_t>(io)].grad.data[0];
        for (auto& v : g(ia).data) v += G;
    };
    return out;
}

Var Tape::mean(Var a) { return scale(sum(a), 1.0 / double(value(a).size())); }

Var Tape::hconcat(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("hconcat: no inputs");
    const int rows = value(parts[0]).rows;
    int cols = 0;
    for (Var p : parts) {
        if (value(p).rows != rows) throw std::invalid_argument("hconcat: row mismatch");
        cols += value(p).cols;
    }
    Matrix C(rows, cols);
    int off = 0;
    std::vector<std::pair<int, int>> meta;
    for (Var p : parts) {
        const Matrix& P = value(p);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < P.cols; ++c) C(r, off + c) = P(r, c);
        meta.emplace_back(p.id, off);
        off += P.cols;
    }
    Var out = push(std::move(C));
    const int io = out.id;
    node(out).back = [this, io, meta] {
        const Matrix& G = nodes_[static_cast<std::size_t>(io)].grad;
        for (auto [id, o] : meta) {
            Matrix& gp = g(id);
            for (int r = 0; r < gp.rows; ++r)
                for (int c = 0; c < gp.cols; ++c) gp(r, c) += G(r, o + c);
        }
    };
    return out;
}

Var Tape::vconcat(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("vconcat: no inputs");
    const int cols = value(parts[0]).cols;
    int rows = 0;
    for (Var p : parts) {
        if (value(p).cols != cols) throw std::invalid_argument("vconcat: column mismatch");
        rows += value(p).rows;
    }
    Matrix C(rows, cols);
    std::vector<std::pair<int, int>> meta;
    int off = 0;
    for (Var p : parts) {
        const Matrix& P = value(p);
        std::copy(P.data.begin(), P.data.end(), C.data.begin() + static_cast<std::ptrdiff_t>(off) * cols);
        meta.emplace_back(p.id, off);
        off += P.rows;
    }
    Var out = push(std::move(C));
    const int io = out.id;
    node(out).back = [this, io, meta, cols] {
        const Matrix& G = nodes_[static_cast<std::size_t>(io)].grad;
        for (auto [id, o] : meta) {
            Matrix& gp = g(id);
            for (std::size_t k = 0; k < gp.size(); ++k) gp.data[k] += G.data[static_cast<std::size_t>(o) * cols + k];
        }
    };
    return out;
}

Var Tape::slice_cols(Var a, int c0, int n) {
    const Matrix& A = value(a);
    if (c0 < 0 || n < 0 || c0 + n > A.cols) throw std::invalid_argument("slice_cols: out of range");
    Matrix C(A.rows, n);
    for (int r = 0; r < A.rows; ++r)
        for (int c = 0; c < n; ++c) C(r, c) = A(r, c0 + c);
    const int ia = a.id;
    Var out = push(std::move(C));
    const int io = out.id;
    node(out).back = [this, ia, io, c0, n] {
        const Matrix& G = nodes_[static_cast<std::size_t>(io)].grad;
        Matrix& gA = g(ia);
        for (int r = 0; r < G.rows; ++r)
            for (int c = 0; c < n; ++c) gA(r, c0 + c) += G(r, c);
    };
    return out;
}

Var Tape::gather_rows(Var a, const std::vector<int>& idx) {
    const Matrix& A = value(a);
    Matrix C(static_cast<int>(idx.size()), A.cols);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= A.rows) throw std::invalid_argument("gather_rows: index out of range");
        auto src = A.row(idx[i]);
        std::copy(src.begin(), src.end(), C.row(static_cast<int>(i)).begin());
    }
    const int ia = a.id;
    Var out = push(std::move(C));
    const int io = out.id;
    node(out).back = [this, ia, io, idx] {
        const Matrix& G = nodes_[static_cast<std::size_t>(io)].grad;
        Matrix& gA = g(ia);
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (int c = 0; c < G.cols; ++c) gA(idx[i], c) += G(static_cast<int>(i), c);
    };
    return out;
}

}  // namespace slicesim::ad
