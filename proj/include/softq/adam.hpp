#pragma once

#include <cmath>
#include <cstdint>

#include "softq/error.hpp"
#include "softq/mlp.hpp"

namespace softq {

/// Bias-corrected ADAM (Kingma & Ba) over an MlpParams-shaped parameter set.
struct AdamState {
    MlpParams first_moment;
    MlpParams second_moment;
    std::int64_t step = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    AdamState() = default;
    AdamState(const MlpParams& like, double lr)
        : first_moment(like.zeros_like()), second_moment(like.zeros_like()), learning_rate(lr) {}
};

/// Applies one descent step `params -= lr * m_hat / (sqrt(v_hat) + eps)` in place.
inline void adam_step(AdamState& state, MlpParams& params, const MlpParams& grads) {
    require(params.same_shape(grads), "adam_step: gradient shape does not match parameters");
    require(params.same_shape(state.first_moment) && params.same_shape(state.second_moment),
            "adam_step: optimizer state shape does not match parameters");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(state.beta1, t);
    const double correction2 = 1.0 - std::pow(state.beta2, t);
    const double b1 = state.beta1, b2 = state.beta2, lr = state.learning_rate, eps = state.epsilon;

    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
            m.array() = b1 * m.array() + (1.0 - b1) * g.array();
            v.array() = b2 * v.array() + (1.0 - b2) * g.array().square();
            p.array() -= lr * (m.array() / correction1) / ((v.array() / correction2).sqrt() + eps);
        };
        update(params.layers[i].weight, grads.layers[i].weight, state.first_moment.layers[i].weight,
               state.second_moment.layers[i].weight);
        update(params.layers[i].bias, grads.layers[i].bias, state.first_moment.layers[i].bias,
               state.second_moment.layers[i].bias);
    }
}

}  // namespace softq
