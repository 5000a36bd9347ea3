#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "softq/error.hpp"
#include "softq/mlp.hpp"
#include "softq/random.hpp"

namespace softq {

/// Smallest bandwidth returned when all particles coincide.
inline constexpr double kBandwidthFloor = 1e-6;

/// Median heuristic: h = med / (2 ln(M + 1)) where med is the median of the
/// squared pairwise distances between the M particles (rows).
inline double median_bandwidth(const Matrix& actions) {
    const Eigen::Index m = actions.rows();
    require(m >= 2, "median_bandwidth: need at least two particles");
    std::vector<double> sq;
    sq.reserve(static_cast<std::size_t>(m * (m - 1) / 2));
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = i + 1; j < m; ++j) sq.push_back((actions.row(i) - actions.row(j)).squaredNorm());
    const std::size_t n = sq.size();
    const auto mid = sq.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(sq.begin(), mid, sq.end());
    double med = *mid;
    if (n % 2 == 0) med = 0.5 * (med + *std::max_element(sq.begin(), mid));
    if (med <= 0.0) return kBandwidthFloor;
    return std::max(med / (2.0 * std::log(static_cast<double>(m) + 1.0)), kBandwidthFloor);
}

struct KernelValue {
    double value;
    Vector grad_a;  // gradient with respect to the first argument
};

/// RBF kernel exp(-|a - b|^2 / h) and its gradient in `a`.
inline KernelValue rbf_kernel(const Vector& a, const Vector& b, double h) {
    require(h > 0.0, "rbf_kernel: bandwidth must be positive");
    require(a.size() == b.size(), "rbf_kernel: dimension mismatch");
    const Vector diff = a - b;
    const double value = std::exp(-diff.squaredNorm() / h);
    return {value, (-2.0 / h) * value * diff};
}

/// Everything needed for one Stein update at a single conditioning state.
struct SvgdBatch {
    Vector state;
    Matrix actions;        // M x d, particles that carry the Q-gradient and repulsion
    Matrix tilde_actions;  // K x d, particles the direction is evaluated at
    Matrix q_grads;        // M x d, grad_a Q(s, a) at each of `actions`
    double bandwidth = 1.0;
    double alpha = 1.0;

    void validate() const {
        require(actions.rows() >= 1 && tilde_actions.rows() >= 1, "svgd: need at least one particle of each kind");
        require(actions.cols() == tilde_actions.cols(), "svgd: particle dimensions differ");
        require(q_grads.rows() == actions.rows() && q_grads.cols() == actions.cols(),
                "svgd: q_grads shape must match actions");
        require(bandwidth > 0.0, "svgd: bandwidth must be positive");
        require(alpha >= 0.0, "svgd: alpha must be non-negative");
    }
};

/// Empirical Stein direction evaluated at each tilde particle:
///   (1/M) sum_i [ k(a_i, t_j) gradQ(a_i) + alpha * grad_{a_i} k(a_i, t_j) ].
inline Matrix stein_direction(const SvgdBatch& batch) {
    batch.validate();
    const Matrix& a = batch.actions;
    const Matrix& t = batch.tilde_actions;
    const double h = batch.bandwidth;
    const double m = static_cast<double>(a.rows());

    // Squared distances via |a|^2 + |t|^2 - 2 a.t, clamped at zero against rounding.
    Matrix sq = (-2.0 * a * t.transpose());
    sq.colwise() += a.rowwise().squaredNorm();
    sq.rowwise() += t.rowwise().squaredNorm().transpose();
    const Matrix kernel = (-sq.array().max(0.0) / h).exp().matrix();  // M x K

    Matrix direction = kernel.transpose() * batch.q_grads;  // K x d
    if (batch.alpha != 0.0) {
        // sum_i grad_{a_i} k(a_i, t_j) = -(2/h) (sum_i k_ij a_i - (sum_i k_ij) t_j)
        Matrix repulsion = kernel.transpose() * a;
        repulsion -= (t.array().colwise() * kernel.colwise().sum().transpose().array()).matrix();
        direction += (-2.0 / h * batch.alpha) * repulsion;
    }
    return direction / m;
}

inline constexpr double kSamplerOutputInitScale = 0.01;

/// Amortized sampler a = f(xi; s): input is [state, noise], tanh output keeps
/// actions inside (-1, 1)^d. Noise has the same dimension as the action.
struct SamplerNetwork {
    MlpParams params;
    int state_dim = 0;
    int action_dim = 0;

    int noise_dim() const { return action_dim; }

    /// Output layer weights and biases start scaled by kSamplerOutputInitScale.
    static SamplerNetwork create(int state_dim, int action_dim, Rng& rng,
                                 const std::vector<int>& hidden = kDefaultHidden) {
        MlpParams params = make_mlp(state_dim + action_dim, hidden, action_dim, OutputActivation::Tanh, rng);
        params.layers.back().weight *= kSamplerOutputInitScale;
        params.layers.back().bias *= kSamplerOutputInitScale;
        return {std::move(params), state_dim, action_dim};
    }

    static SamplerNetwork from_params(MlpParams params, int state_dim) {
        params.validate();
        require(params.input_dim() > state_dim, "sampler: network input narrower than the state");
        const int action_dim = static_cast<int>(params.output_dim());
        require(params.input_dim() == state_dim + action_dim, "sampler: input must be state plus action-sized noise");
        return {std::move(params), state_dim, action_dim};
    }

    /// Stacks `states` (one row per sample) next to `noise`.
    Matrix input(const Matrix& states, const Matrix& noise) const {
        require(states.cols() == state_dim && noise.cols() == action_dim && states.rows() == noise.rows(),
                "sampler: state/noise batch shape mismatch");
        Matrix in(states.rows(), state_dim + action_dim);
        in << states, noise;
        return in;
    }

    Matrix act(const Matrix& states, const Matrix& noise) const { return mlp_forward(params, input(states, noise)); }
};

/// Repeats each row of `rows` `times` times consecutively.
inline Matrix repeat_rows(const Matrix& rows, Eigen::Index times) {
    Matrix out(rows.rows() * times, rows.cols());
    for (Eigen::Index r = 0; r < rows.rows(); ++r) out.middleRows(r * times, times).rowwise() = rows.row(r);
    return out;
}

/// n i.i.d. draws a = f(xi; s) with xi ~ N(0, I).
inline Matrix sample_actions(const SamplerNetwork& net, const Vector& state, Eigen::Index n, Rng& rng) {
    require(n >= 1, "sample_actions: n must be at least 1");
    require(state.size() == net.state_dim, "sample_actions: state dimension mismatch");
    const Matrix noise = standard_normal(n, net.action_dim, rng);
    return net.act(repeat_rows(state.transpose(), n), noise);
}

inline double standard_normal_log_density(const Eigen::Ref<const Vector>& xi) {
    return -0.5 * static_cast<double>(xi.size()) * std::log(2.0 * std::numbers::pi) - 0.5 * xi.squaredNorm();
}

/// Below this |det| the change-of-variables density is reported unavailable.
inline constexpr double kSingularJacobian = 1e-12;

struct SampledDensity {
    Matrix actions;                               // n x d
    std::vector<std::optional<double>> log_density;  // per row; nullopt when the Jacobian is singular
};

/// Pushes `noise` through the sampler and returns log p_xi(xi) - log|det da/dxi|
/// for every row, using d forward-mode passes for the noise Jacobian.
inline SampledDensity sampler_log_densities(const SamplerNetwork& net, const Matrix& states, const Matrix& noise) {
    MlpTape tape;
    SampledDensity out;
    out.actions = mlp_forward(net.params, net.input(states, noise), tape);
    const Eigen::Index n = noise.rows();
    const int d = net.action_dim;
    std::vector<Matrix> columns;
    columns.reserve(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) {
        Matrix tangent = Matrix::Zero(n, net.state_dim + d);
        tangent.col(net.state_dim + k).setOnes();
        columns.push_back(mlp_jvp(net.params, tape, tangent));  // n x d: d a / d xi_k
    }
    out.log_density.resize(static_cast<std::size_t>(n));
    Matrix jac(d, d);
    for (Eigen::Index r = 0; r < n; ++r) {
        for (int k = 0; k < d; ++k) jac.col(k) = columns[static_cast<std::size_t>(k)].row(r).transpose();
        const double det = std::abs(jac.determinant());
        if (!(det >= kSingularJacobian) || !std::isfinite(det)) continue;
        out.log_density[static_cast<std::size_t>(r)] = standard_normal_log_density(noise.row(r).transpose()) - std::log(det);
    }
    return out;
}

/// Density of a = f(noise; state) under the sampler, or nullopt if the
/// Jacobian is (numerically) singular.
inline std::optional<double> action_log_density(const SamplerNetwork& net, const Vector& state, const Vector& noise) {
    require(noise.size() == net.action_dim, "action_log_density: noise must have action dimension");
    require(state.size() == net.state_dim, "action_log_density: state dimension mismatch");
    return sampler_log_densities(net, state.transpose(), noise.transpose()).log_density.front();
}

struct AmortizedOptions {
    int particles = 32;          // M
    int tilde_particles = 32;    // K
    double alpha = 1.0;
    bool share_noise = false;    // evaluate the direction at the same particles (requires M == K)
    double fallback_bandwidth = 1.0;  // used when M < 2 and the median is undefined
};

/// Ascent direction for the sampler parameters, averaged over the state batch:
///   (1 / (B K)) sum_s sum_j stein(t_j)^T d f(xi~_j; s) / d phi.
/// `q_action_grad(states, actions)` must return grad_a Q row by row.
template <class QActionGrad>
MlpParams amortized_policy_gradient(const SamplerNetwork& net, const Matrix& states, QActionGrad&& q_action_grad,
                                    const AmortizedOptions& opts, Rng& rng) {
    require(opts.particles >= 1 && opts.tilde_particles >= 1, "amortized_policy_gradient: M and K must be >= 1");
    require(!opts.share_noise || opts.particles == opts.tilde_particles,
            "amortized_policy_gradient: shared noise needs M == K");
    require(states.cols() == net.state_dim && states.rows() >= 1, "amortized_policy_gradient: bad state batch");
    const Eigen::Index b = states.rows();
    const Eigen::Index m = opts.particles;
    const Eigen::Index k = opts.tilde_particles;
    const int d = net.action_dim;

    const Matrix noise = standard_normal(b * m, d, rng);
    const Matrix tilde_noise = opts.share_noise ? noise : standard_normal(b * k, d, rng);

    const Matrix states_m = repeat_rows(states, m);
    const Matrix states_k = opts.share_noise ? states_m : repeat_rows(states, k);

    MlpTape tape;
    const Matrix tilde = mlp_forward(net.params, net.input(states_k, tilde_noise), tape);
    const Matrix actions = opts.share_noise ? tilde : net.act(states_m, noise);
    const Matrix q_grads = q_action_grad(states_m, actions);
    require(q_grads.rows() == actions.rows() && q_grads.cols() == d,
            "amortized_policy_gradient: Q action-gradient has wrong shape");

    Matrix cotangent(b * k, d);
    for (Eigen::Index s = 0; s < b; ++s) {
        SvgdBatch batch;
        batch.state = states.row(s).transpose();
        batch.actions = actions.middleRows(s * m, m);
        batch.tilde_actions = tilde.middleRows(s * k, k);
        batch.q_grads = q_grads.middleRows(s * m, m);
        batch.alpha = opts.alpha;
        batch.bandwidth = m >= 2 ? median_bandwidth(batch.actions) : opts.fallback_bandwidth;
        cotangent.middleRows(s * k, k) = stein_direction(batch);
    }
    cotangent /= static_cast<double>(b * k);
    return mlp_backward(net.params, tape, cotangent, /*want_param_grads=*/true, /*want_input_grads=*/false).params;
}

}  // namespace softq
