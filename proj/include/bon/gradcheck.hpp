#pragma once

#include "nn.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>

namespace bon {

using ScalarLoss = std::function<double(std::span<const double> output)>;

// Central differences of loss(net(x)) w.r.t. every parameter, eval mode.
// Test and verification use only; training never calls this.
inline GradVector finite_diff_grad(const MlpNetwork& net, const ScalarLoss& loss, std::span<const double> x,
                                   double eps = 1e-5) {
    if (!(eps > 0.0)) throw ConfigError("finite difference step must be positive");
    MlpNetwork probe = net;
    const Matrix in = to_column(x);
    auto eval = [&] {
        const double v = loss(forward(probe, in).output_column());
        if (!std::isfinite(v)) throw NumericError("loss is not finite under perturbation");
        return v;
    };
    GradVector g(net.params.size());
    for (std::size_t i = 0; i < probe.params.size(); ++i) {
        const double orig = probe.params[i];
        probe.params[i] = orig + eps;
        const double up = eval();
        probe.params[i] = orig - eps;
        const double down = eval();
        probe.params[i] = orig;
        g[i] = (up - down) / (2.0 * eps);
    }
    return g;
}

// ||a - b|| / max(||a||, ||b||, floor); the norm-wise comparison used by
// every gradient check.
inline double relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-12) {
    if (a.size() != b.size()) throw ShapeError("relative_error length mismatch");
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

} // namespace bon
