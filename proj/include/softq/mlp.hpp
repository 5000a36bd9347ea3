#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "softq/error.hpp"
#include "softq/random.hpp"

namespace softq {

/// Batches are stored one sample per row.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class OutputActivation { Identity, Tanh };

inline const char* to_string(OutputActivation act) {
    return act == OutputActivation::Tanh ? "tanh" : "identity";
}

struct DenseLayer {
    Matrix weight;  // out x in
    Vector bias;    // out
};

/// Fully connected ReLU network. Every layer except the last is followed by a
/// ReLU; the last one by `output`.
struct MlpParams {
    std::vector<DenseLayer> layers;
    OutputActivation output = OutputActivation::Identity;

    Eigen::Index input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }
    Eigen::Index output_dim() const { return layers.empty() ? 0 : layers.back().weight.rows(); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
        return n;
    }

    void validate() const {
        require(!layers.empty(), "mlp: no layers");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            require(layers[i].bias.size() == layers[i].weight.rows(), "mlp: bias size does not match layer output");
            if (i > 0)
                require(layers[i].weight.cols() == layers[i - 1].weight.rows(),
                        "mlp: layer " + std::to_string(i) + " input does not chain with previous output");
        }
    }

    bool same_shape(const MlpParams& other) const {
        if (layers.size() != other.layers.size()) return false;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (layers[i].weight.rows() != other.layers[i].weight.rows() ||
                layers[i].weight.cols() != other.layers[i].weight.cols() ||
                layers[i].bias.size() != other.layers[i].bias.size())
                return false;
        }
        return true;
    }

    MlpParams zeros_like() const {
        MlpParams out;
        out.output = output;
        for (const auto& l : layers)
            out.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
        return out;
    }

    bool all_finite() const {
        for (const auto& l : layers)
            if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
        return true;
    }

    /// Visits each weight/bias block as a flat span of doubles, in a fixed order.
    template <class F>
    void for_each_block(F&& f) {
        for (auto& l : layers) {
            f(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
            f(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
        }
    }
    template <class F>
    void for_each_block(F&& f) const {
        for (const auto& l : layers) {
            f(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
            f(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
        }
    }

    MlpParams& operator+=(const MlpParams& rhs) {
        for (std::size_t i = 0; i < layers.size(); ++i) {
            layers[i].weight += rhs.layers[i].weight;
            layers[i].bias += rhs.layers[i].bias;
        }
        return *this;
    }
    MlpParams& operator*=(double s) {
        for (auto& l : layers) {
            l.weight *= s;
            l.bias *= s;
        }
        return *this;
    }
};

inline bool operator==(const MlpParams& a, const MlpParams& b) {
    if (a.output != b.output || !a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i)
        if (a.layers[i].weight != b.layers[i].weight || a.layers[i].bias != b.layers[i].bias) return false;
    return true;
}

/// Hidden widths used by both the Q-function and the sampler.
inline const std::vector<int> kDefaultHidden{200, 200};

/// Weights and biases drawn uniformly from [-1/sqrt(fan_in), 1/sqrt(fan_in)].
inline MlpParams make_mlp(int input_dim, const std::vector<int>& hidden, int output_dim, OutputActivation output,
                          Rng& rng) {
    require(input_dim > 0 && output_dim > 0, "make_mlp: dimensions must be positive");
    MlpParams params;
    params.output = output;
    int fan_in = input_dim;
    auto add_layer = [&](int fan_out) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        params.layers.push_back({uniform(fan_out, fan_in, -bound, bound, rng), uniform(fan_out, 1, -bound, bound, rng)});
        fan_in = fan_out;
    };
    for (int width : hidden) {
        require(width > 0, "make_mlp: hidden width must be positive");
        add_layer(width);
    }
    add_layer(output_dim);
    return params;
}

/// Activations recorded during a forward pass, consumed by the backward pass.
struct MlpTape {
    Matrix input;
    std::vector<Matrix> pre;   // affine outputs, one per layer
    std::vector<Matrix> post;  // activated outputs, one per layer
};

namespace detail {

inline void check_input(const MlpParams& params, const Matrix& input) {
    require(!params.layers.empty(), "mlp_forward: empty network");
    require(input.cols() == params.input_dim(), "mlp_forward: input width " + std::to_string(input.cols()) +
                                                    " does not match network input " +
                                                    std::to_string(params.input_dim()));
}

inline void affine(const DenseLayer& layer, const Matrix& x, Matrix& z) {
    z.noalias() = x * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
}

inline void activate(bool last, OutputActivation output, const Matrix& z, Matrix& a) {
    if (!last)
        a = z.cwiseMax(0.0);
    else if (output == OutputActivation::Tanh)
        a = z.array().tanh().matrix();
    else
        a = z;
}

inline void check_finite([[maybe_unused]] const Matrix& out) {
#ifndef NDEBUG
    if (!out.allFinite()) throw NumericAbort("mlp_forward: non-finite activation");
#endif
}

}  // namespace detail

inline Matrix mlp_forward(const MlpParams& params, const Matrix& input, MlpTape& tape) {
    detail::check_input(params, input);
    const std::size_t n = params.layers.size();
    tape.input = input;
    tape.pre.resize(n);
    tape.post.resize(n);
    const Matrix* x = &tape.input;
    for (std::size_t i = 0; i < n; ++i) {
        detail::affine(params.layers[i], *x, tape.pre[i]);
        detail::activate(i + 1 == n, params.output, tape.pre[i], tape.post[i]);
        x = &tape.post[i];
    }
    detail::check_finite(tape.post.back());
    return tape.post.back();
}

inline Matrix mlp_forward(const MlpParams& params, const Matrix& input) {
    detail::check_input(params, input);
    const std::size_t n = params.layers.size();
    Matrix x = input;
    Matrix z;
    for (std::size_t i = 0; i < n; ++i) {
        detail::affine(params.layers[i], x, z);
        detail::activate(i + 1 == n, params.output, z, x);
    }
    detail::check_finite(x);
    return x;
}

struct MlpGradients {
    MlpParams params;  // empty when parameter gradients were not requested
    Matrix input;
};

/// Reverse pass: contracts the Jacobian of the recorded forward map with
/// `cotangent` (batch x out). Parameter gradients are summed over the batch.
/// Either half of the result can be skipped when the caller does not need it.
inline MlpGradients mlp_backward(const MlpParams& params, const MlpTape& tape, const Matrix& cotangent,
                                 bool want_param_grads = true, bool want_input_grads = true) {
    const std::size_t n = params.layers.size();
    require(tape.pre.size() == n && tape.post.size() == n, "mlp_backward: tape does not belong to this network");
    require(cotangent.rows() == tape.input.rows() && cotangent.cols() == params.output_dim(),
            "mlp_backward: cotangent shape does not match network output");

    MlpGradients grads;
    if (want_param_grads) {
        grads.params.output = params.output;
        grads.params.layers.resize(n);
    }

    Matrix delta;
    if (params.output == OutputActivation::Tanh)
        delta = (cotangent.array() * (1.0 - tape.post.back().array().square())).matrix();
    else
        delta = cotangent;

    for (std::size_t k = n; k-- > 0;) {
        const Matrix& x = k == 0 ? tape.input : tape.post[k - 1];
        if (want_param_grads) {
            grads.params.layers[k].weight.noalias() = delta.transpose() * x;
            grads.params.layers[k].bias = delta.colwise().sum().transpose();
        }
        if (k == 0 && !want_input_grads) break;
        Matrix upstream;
        upstream.noalias() = delta * params.layers[k].weight;
        if (k == 0) {
            grads.input = std::move(upstream);
        } else {
            // ReLU subgradient at exactly zero is zero.
            delta = (tape.pre[k - 1].array() > 0.0).select(upstream, 0.0);
        }
    }
    return grads;
}

inline MlpGradients mlp_backward(const MlpParams& params, const Matrix& input, const Matrix& cotangent,
                                 bool want_param_grads = true, bool want_input_grads = true) {
    MlpTape tape;
    mlp_forward(params, input, tape);
    return mlp_backward(params, tape, cotangent, want_param_grads, want_input_grads);
}

/// Forward-mode product: returns J(input) * tangent row by row, where J is the
/// Jacobian of the network output with respect to its input.
inline Matrix mlp_jvp(const MlpParams& params, const MlpTape& tape, const Matrix& tangent) {
    require(tangent.rows() == tape.input.rows() && tangent.cols() == params.input_dim(),
            "mlp_jvp: tangent shape does not match network input");
    const std::size_t n = params.layers.size();
    Matrix t = tangent;
    for (std::size_t i = 0; i < n; ++i) {
        Matrix dz;
        dz.noalias() = t * params.layers[i].weight.transpose();
        if (i + 1 < n)
            t = (tape.pre[i].array() > 0.0).select(dz, 0.0);
        else if (params.output == OutputActivation::Tanh)
            t = (dz.array() * (1.0 - tape.post[i].array().square())).matrix();
        else
            t = std::move(dz);
    }
    return t;
}

}  // namespace softq
