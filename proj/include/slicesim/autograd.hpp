#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace slicesim::ad {

/// Dense row-major matrix of doubles.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}
    Matrix(int r, int c, std::vector<double> v);

    double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    std::span<double> row(int r) { return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
    std::span<const double> row(int r) const {
        return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
    }
    std::size_t size() const { return data.size(); }
};

/// Value entries below this are treated as masked logits by log_softmax_rows.
inline constexpr double kMaskedLogit = -1e30;

struct Var {
    int id = -1;
};

/// Reverse-mode tape. Nodes are appended in evaluation order; backward() walks them
/// in reverse. Parameter leaves read from and accumulate into caller-owned buffers.
class Tape {
public:
    Tape() { nodes_.reserve(256); }

    /// Leaf that never receives gradients.
    Var constant(Matrix m);
    /// Leaf whose gradient is readable through grad() after backward.
    Var input(Matrix m) { return push(std::move(m)); }
    Var scalar(double v) { return constant(Matrix(1, 1, v)); }
    /// Leaf bound to external storage. Gradients are added into `grad` (may be null).
    Var param(const double* value, double* grad, int rows, int cols);

    const Matrix& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
    double item(Var v) const { return value(v).data[0]; }
    /// Gradient of the last backward() target with respect to v (zero if untouched).
    const Matrix& grad(Var v);

    /// Seeds d(out)/d(out) = 1 for a 1x1 output and propagates.
    void backward(Var out);
    void clear() { nodes_.clear(); }
    std::size_t size() const { return nodes_.size(); }

    Var detach(Var a) { return constant(value(a)); }

    Var matmul(Var a, Var b);
    // Elementwise with broadcasting of b when b is 1xc, rx1, or 1x1.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    Var scale(Var a, double k);
    Var add_scalar(Var a, double k);
    Var neg(Var a) { return scale(a, -1.0); }

    Var tanh(Var a);
    Var exp(Var a);
    /// Natural log with the argument floored at 1e-300.
    Var log(Var a);
    /// sqrt with the argument floored at 0; derivative uses max(sqrt, 1e-150).
    Var sqrt(Var a);
    Var square(Var a);
    Var abs(Var a);
    Var clamp(Var a, double lo, double hi);
    Var minimum(Var a, Var b);

    Var softmax_rows(Var a);
    /// Row-wise log-softmax. Entries whose input equals kMaskedLogit stay at kMaskedLogit
    /// and get no gradient.
    Var log_softmax_rows(Var a);

    Var sum_rows(Var a);   // r x c -> r x 1
    Var sum_cols(Var a);   // r x c -> 1 x c
    Var sum(Var a);        // -> 1 x 1
    Var mean(Var a);       // -> 1 x 1
    Var mean_rows(Var a);  // r x c -> r x 1

    Var hconcat(const std::vector<Var>& parts);
    Var vconcat(const std::vector<Var>& parts);
    Var slice_cols(Var a, int c0, int n);
    Var gather_rows(Var a, const std::vector<int>& idx);

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool has_grad = false;
        bool frozen = false;
        double* ext_grad = nullptr;
        std::function<void()> back;
    };

    Var push(Matrix value, std::function<void()> back = {});
    Matrix& g(int id);  // grad buffer, allocated on demand
    Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }
    Var broadcast_binary(Var a, Var b, int kind);

    std::vector<Node> nodes_;
};

/// All-rows row-softmax of a plain matrix (outside the tape).
Matrix softmax_rows(const Matrix& m);

}  // namespace slicesim::ad
