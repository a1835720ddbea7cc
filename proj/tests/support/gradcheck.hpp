#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "slicesim/autograd.hpp"

namespace slicesim::testing {

/// Norm-wise relative error ||a - n|| / max(||a||, ||n||, tiny).
inline double relative_error(const std::vector<double>& a, const std::vector<double>& n) {
    double d = 0, na = 0, nn = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d += (a[i] - n[i]) * (a[i] - n[i]);
        na += a[i] * a[i];
        nn += n[i] * n[i];
    }
    return std::sqrt(d) / std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
}

using Graph = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

/// Compares the tape gradient of sum(f(inputs) .* R) (R fixed random) against central
/// differences over every input entry. Returns the worst relative error over inputs.
inline double check_graph(const Graph& f, std::vector<ad::Matrix> inputs, std::uint64_t seed, double h = 1e-6) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    ad::Matrix weights;
    auto eval = [&](const std::vector<ad::Matrix>& in, std::vector<ad::Matrix>* grads) {
        ad::Tape t;
        std::vector<ad::Var> vars;
        for (const auto& m : in) vars.push_back(t.input(m));
        ad::Var out = f(t, vars);
        if (weights.rows == 0) {
            weights = ad::Matrix(t.value(out).rows, t.value(out).cols);
            for (auto& v : weights.data) v = nd(rng);
        }
        ad::Var s = t.sum(t.mul(out, t.constant(weights)));
        const double v = t.item(s);
        if (grads) {
            t.backward(s);
            for (auto x : vars) grads->push_back(t.grad(x));
        }
        return v;
    };
    std::vector<ad::Matrix> analytic;
    eval(inputs, &analytic);
    double worst = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        std::vector<double> num(inputs[k].size());
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            const double x0 = inputs[k].data[i];
            inputs[k].data[i] = x0 + h;
            const double up = eval(inputs, nullptr);
            inputs[k].data[i] = x0 - h;
            const double dn = eval(inputs, nullptr);
            inputs[k].data[i] = x0;
            num[i] = (up - dn) / (2 * h);
        }
        worst = std::max(worst, relative_error(analytic[k].data, num));
    }
    return worst;
}

inline ad::Matrix random_matrix(int r, int c, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> nd(0.0, scale);
    ad::Matrix m(r, c);
    for (auto& v : m.data) v = nd(rng);
    return m;
}

/// Positive rows summing to one.
inline ad::Matrix random_simplex(int r, int c, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    ad::Matrix m(r, c);
    for (int i = 0; i < r; ++i) {
        double s = 0;
        for (int j = 0; j < c; ++j) s += (m(i, j) = u(rng));
        for (int j = 0; j < c; ++j) m(i, j) /= s;
    }
    return m;
}

}  // namespace slicesim::testing
