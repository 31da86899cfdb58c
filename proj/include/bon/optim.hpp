#pragma once

#include "nn.hpp"

#include <span>
#include <vector>

namespace bon {

// params <- params - lr * grads. Refuses (and leaves params untouched) when
// any gradient entry is non-finite.
inline void sgd_step(std::span<double> params, const GradVector& grads, double lr) {
    if (params.size() != grads.size()) throw ShapeError("sgd_step: params and grads differ in length");
    if (!(lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
    if (!grads.all_finite()) throw NumericError("sgd_step: non-finite gradient, step refused");
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
}

// Heavy-ball variant: v <- momentum * v + grads; params <- params - lr * v.
// With momentum == 0 this is exactly sgd_step and velocity is left alone.
inline void sgd_step(std::span<double> params, const GradVector& grads, double lr, double momentum,
                     std::vector<double>& velocity) {
    if (momentum == 0.0) {
        sgd_step(params, grads, lr);
        return;
    }
    if (params.size() != grads.size()) throw ShapeError("sgd_step: params and grads differ in length");
    if (!grads.all_finite()) throw NumericError("sgd_step: non-finite gradient, step refused");
    if (velocity.size() != params.size()) velocity.assign(params.size(), 0.0);
    for (std::size_t i = 0; i < params.size(); ++i) {
        velocity[i] = momentum * velocity[i] + grads[i];
        params[i] -= lr * velocity[i];
    }
}

} // namespace bon
