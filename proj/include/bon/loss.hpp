#pragma once

#include "error.hpp"

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace bon {

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

inline constexpr double kCrossEntropyFloor = 1e-12;

// -log(p[label] + 1e-12). The gradient is taken w.r.t. the logits that
// produced probs through a softmax: probs - onehot(label).
inline LossGrad cross_entropy(std::span<const double> probs, std::size_t label) {
    if (label >= probs.size())
        throw LabelError("label " + std::to_string(label) + " out of range for " + std::to_string(probs.size()) +
                         " classes");
    LossGrad out;
    out.loss = -std::log(probs[label] + kCrossEntropyFloor);
    out.grad.assign(probs.begin(), probs.end());
    out.grad[label] -= 1.0;
    return out;
}

// Mean over components: (1/d) sum (a_i - b_i)^2, gradient (2/d)(a - b) w.r.t. a.
inline LossGrad mse(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty())
        throw ShapeError("mse needs equal, nonzero lengths (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
    const double d = static_cast<double>(a.size());
    LossGrad out;
    out.grad.resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        out.loss += diff * diff;
        out.grad[i] = 2.0 * diff / d;
    }
    out.loss /= d;
    return out;
}

inline double mse_value(std::span<const double> a, std::span<const double> b) { return mse(a, b).loss; }

} // namespace bon
