#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "softq/error.hpp"
#include "softq/mlp.hpp"
#include "softq/random.hpp"
#include "softq/svgd.hpp"

namespace softq {

struct Transition {
    Vector state;
    Vector action;
    double reward = 0.0;
    Vector next_state;
    bool terminal = false;
};

struct Minibatch {
    Matrix states;
    Matrix actions;
    Vector rewards;
    Matrix next_states;
    Vector terminals;  // 1.0 for terminal transitions, else 0.0

    Eigen::Index size() const { return states.rows(); }
};

/// Fixed-capacity ring of transitions; the oldest entry is overwritten first.
class ReplayBuffer {
public:
    static constexpr std::size_t kDefaultCapacity = 1'000'000;

    explicit ReplayBuffer(std::size_t capacity = kDefaultCapacity) : capacity_(capacity) {
        require(capacity_ >= 1, "replay buffer: capacity must be positive");
    }

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return storage_.size(); }
    bool empty() const { return storage_.empty(); }

    void push(Transition t) {
        require(std::isfinite(t.reward), "replay buffer: reward must be finite");
        if (storage_.size() < capacity_) {
            storage_.push_back(std::move(t));
        } else {
            storage_[next_] = std::move(t);
        }
        next_ = (next_ + 1) % capacity_;
    }

    /// Entries from oldest to newest.
    std::vector<Transition> contents() const {
        if (storage_.size() < capacity_) return storage_;
        std::vector<Transition> out;
        out.reserve(capacity_);
        for (std::size_t i = 0; i < capacity_; ++i) out.push_back(storage_[(next_ + i) % capacity_]);
        return out;
    }

    /// Uniform sampling with replacement.
    Minibatch sample(std::size_t n, Rng& rng) const {
        require(!storage_.empty(), "replay buffer: cannot sample from an empty buffer");
        require(n >= 1, "replay buffer: minibatch size must be positive");
        std::uniform_int_distribution<std::size_t> pick(0, storage_.size() - 1);
        const auto& first = storage_.front();
        Minibatch mb;
        const auto rows = static_cast<Eigen::Index>(n);
        mb.states.resize(rows, first.state.size());
        mb.actions.resize(rows, first.action.size());
        mb.rewards.resize(rows);
        mb.next_states.resize(rows, first.next_state.size());
        mb.terminals.resize(rows);
        for (Eigen::Index r = 0; r < rows; ++r) {
            const Transition& t = storage_[pick(rng)];
            mb.states.row(r) = t.state.transpose();
            mb.actions.row(r) = t.action.transpose();
            mb.rewards(r) = t.reward;
            mb.next_states.row(r) = t.next_state.transpose();
            mb.terminals(r) = t.terminal ? 1.0 : 0.0;
        }
        return mb;
    }

private:
    std::size_t capacity_;
    std::vector<Transition> storage_;
    std::size_t next_ = 0;
};

/// Axis-aligned action box.
struct ActionBox {
    Vector low;
    Vector high;

    static ActionBox symmetric(int dim, double bound = 1.0) {
        return {Vector::Constant(dim, -bound), Vector::Constant(dim, bound)};
    }
    int dim() const { return static_cast<int>(low.size()); }
    double log_volume() const { return (high - low).array().log().sum(); }
    Vector clip(const Vector& a) const { return a.cwiseMax(low).cwiseMin(high); }
    Matrix sample(Eigen::Index n, Rng& rng) const {
        Matrix out = uniform(n, dim(), 0.0, 1.0, rng);
        for (int k = 0; k < dim(); ++k) out.col(k) = low(k) + (high(k) - low(k)) * out.col(k).array();
        return out;
    }
};

/// Soft Q-function approximator Q(s, a): input [state, action], scalar output.
struct QNetwork {
    MlpParams params;
    int state_dim = 0;
    int action_dim = 0;

    static QNetwork create(int state_dim, int action_dim, Rng& rng, const std::vector<int>& hidden = kDefaultHidden) {
        return {make_mlp(state_dim + action_dim, hidden, 1, OutputActivation::Identity, rng), state_dim, action_dim};
    }

    Matrix input(const Matrix& states, const Matrix& actions) const {
        require(states.cols() == state_dim && actions.cols() == action_dim && states.rows() == actions.rows(),
                "q network: state/action batch shape mismatch");
        Matrix in(states.rows(), state_dim + action_dim);
        in << states, actions;
        return in;
    }

    Vector values(const Matrix& states, const Matrix& actions) const {
        return mlp_forward(params, input(states, actions)).col(0);
    }

    /// grad_a Q(s, a) for each row.
    Matrix action_gradients(const Matrix& states, const Matrix& actions) const {
        MlpTape tape;
        mlp_forward(params, input(states, actions), tape);
        const Matrix ones = Matrix::Ones(states.rows(), 1);
        const MlpGradients g = mlp_backward(params, tape, ones, /*want_param_grads=*/false);
        return g.input.rightCols(action_dim);
    }
};

enum class Proposal { Uniform, Sampler };

struct SoftValueStats {
    std::int64_t uniform_fallbacks = 0;  // states whose sampler density was unavailable
};

namespace detail {
/// alpha * (logsumexp(x) - log n), max-shifted.
inline double scaled_log_mean_exp(const Eigen::Ref<const Vector>& x, double alpha) {
    const double top = x.maxCoeff();
    const double sum = (x.array() - top).exp().sum();
    return alpha * (top + std::log(sum) - std::log(static_cast<double>(x.size())));
}
}  // namespace detail

/// Importance-sampled soft value per state (one row of `states` each):
///   V(s) = alpha log[(1/k) sum_k exp(Q(s, a_k) / alpha) / q(a_k)],  a_k ~ q.
/// With the sampler proposal, a state whose change-of-variables density is
/// unavailable for any draw falls back to the uniform proposal.
/// `q_values(states, actions)` returns Q row by row.
template <class QValues>
Vector estimate_soft_value(const QValues& q_values, const Matrix& states, Proposal proposal,
                           const SamplerNetwork* sampler, const ActionBox& box, double alpha, int k_v, Rng& rng,
                           SoftValueStats* stats = nullptr) {
    require(k_v >= 1, "estimate_soft_value: k_v must be at least 1");
    require(alpha > 0.0, "estimate_soft_value: alpha must be positive");
    require(states.rows() >= 1, "estimate_soft_value: no states");
    const Eigen::Index b = states.rows();
    const Eigen::Index k = k_v;
    const Matrix states_rep = repeat_rows(states, k);
    Vector out(b);

    std::vector<Eigen::Index> uniform_states;
    if (proposal == Proposal::Sampler) {
        require(sampler != nullptr, "estimate_soft_value: sampler proposal needs a sampler network");
        require(sampler->action_dim == box.dim(), "estimate_soft_value: sampler and action box dimensions differ");
        const Matrix noise = standard_normal(b * k, box.dim(), rng);
        const SampledDensity drawn = sampler_log_densities(*sampler, states_rep, noise);
        const Vector qv = q_values(states_rep, drawn.actions);
        for (Eigen::Index s = 0; s < b; ++s) {
            Vector terms(k);
            bool ok = true;
            for (Eigen::Index j = 0; j < k && ok; ++j) {
                const auto& logq = drawn.log_density[static_cast<std::size_t>(s * k + j)];
                if (!logq) {
                    ok = false;
                } else {
                    terms(j) = qv(s * k + j) / alpha - *logq;
                }
            }
            if (ok) {
                out(s) = detail::scaled_log_mean_exp(terms, alpha);
            } else {
                uniform_states.push_back(s);
            }
        }
        if (stats) stats->uniform_fallbacks += static_cast<std::int64_t>(uniform_states.size());
    } else {
        for (Eigen::Index s = 0; s < b; ++s) uniform_states.push_back(s);
    }

    if (!uniform_states.empty()) {
        const auto n = static_cast<Eigen::Index>(uniform_states.size());
        Matrix sub_states(n * k, states.cols());
        for (Eigen::Index i = 0; i < n; ++i)
            sub_states.middleRows(i * k, k).rowwise() = states.row(uniform_states[static_cast<std::size_t>(i)]);
        const Matrix actions = box.sample(n * k, rng);
        const Vector qv = q_values(sub_states, actions);
        const double log_vol = box.log_volume();
        for (Eigen::Index i = 0; i < n; ++i) {
            const Vector terms = (qv.segment(i * k, k).array() / alpha + log_vol).matrix();
            out(uniform_states[static_cast<std::size_t>(i)]) = detail::scaled_log_mean_exp(terms, alpha);
        }
    }
    return out;
}

inline Vector estimate_soft_value(const QNetwork& q, const Matrix& states, Proposal proposal,
                                  const SamplerNetwork* sampler, const ActionBox& box, double alpha, int k_v, Rng& rng,
                                  SoftValueStats* stats = nullptr) {
    require(box.dim() == q.action_dim, "estimate_soft_value: action box dimension mismatch");
    auto values = [&q](const Matrix& s, const Matrix& a) { return q.values(s, a); };
    return estimate_soft_value(values, states, proposal, sampler, box, alpha, k_v, rng, stats);
}

struct SoftValueSettings {
    double gamma = 0.99;
    double alpha = 1.0;
    int k_v = 50;
    Proposal proposal = Proposal::Uniform;
    const SamplerNetwork* sampler = nullptr;
    ActionBox box;
};

struct QLossResult {
    double loss = 0.0;
    MlpParams grads;
    Vector targets;
    double mean_soft_value = 0.0;
};

/// Squared soft Bellman error against frozen targets
///   y = r + gamma (1 - terminal) V_target(s'),  loss = mean 1/2 (y - Q(s, a))^2,
/// with gradients through Q(s, a) only.
inline QLossResult q_loss_and_grad(const QNetwork& q, const QNetwork& target, const Minibatch& batch,
                                   const SoftValueSettings& settings, Rng& rng, SoftValueStats* stats = nullptr) {
    require(batch.size() >= 1, "q_loss_and_grad: empty minibatch");
    const Vector next_v = estimate_soft_value(target, batch.next_states, settings.proposal, settings.sampler,
                                              settings.box, settings.alpha, settings.k_v, rng, stats);
    QLossResult out;
    out.targets = batch.rewards.array() + settings.gamma * (1.0 - batch.terminals.array()) * next_v.array();
    out.mean_soft_value = next_v.mean();

    MlpTape tape;
    const Vector pred = mlp_forward(q.params, q.input(batch.states, batch.actions), tape).col(0);
    const Vector err = pred - out.targets;
    const double n = static_cast<double>(batch.size());
    out.loss = 0.5 * err.squaredNorm() / n;
    const Matrix cotangent = err / n;
    out.grads = mlp_backward(q.params, tape, cotangent, /*want_param_grads=*/true, /*want_input_grads=*/false).params;
    return out;
}

/// Ornstein-Uhlenbeck process with unit timestep: x <- x - theta x + sigma N(0, I).
struct OuNoise {
    Vector state;
    double theta = 0.15;
    double sigma = 0.3;

    OuNoise() = default;
    OuNoise(int dim, double theta_, double sigma_) : state(Vector::Zero(dim)), theta(theta_), sigma(sigma_) {}

    void reset() { state.setZero(); }

    const Vector& step(Rng& rng) {
        std::normal_distribution<double> normal(0.0, 1.0);
        for (Eigen::Index i = 0; i < state.size(); ++i) state(i) += -theta * state(i) + sigma * normal(rng);
        return state;
    }
};

struct EpisodeStats {
    double total_return = 0.0;
    double discounted_return = 0.0;
    int length = 0;
};

struct CollectorStreams {
    Rng env;
    Rng noise;
};

/// Runs the environment one step at a time, resetting at episode ends, and
/// appends every transition to the replay buffer. `Env` needs reset(Rng&),
/// step(action) -> {state, reward, done, goal_reached}, state_dim() and action_dim().
template <class Env>
class ExperienceCollector {
public:
    ExperienceCollector(Env& env, ActionBox box, double gamma) : env_(env), box_(std::move(box)), gamma_(gamma) {}

    /// One environment step. With `uniform_actions` the action ignores the
    /// sampler and is drawn uniformly from the box.
    Transition collect_step(const SamplerNetwork& sampler, OuNoise& noise, ReplayBuffer& buffer,
                            CollectorStreams& streams, bool uniform_actions) {
        if (!in_episode_) {
            state_ = env_.reset(streams.env);
            noise.reset();
            current_ = {};
            discount_ = 1.0;
            in_episode_ = true;
        }
        Vector action;
        if (uniform_actions) {
            action = box_.sample(1, streams.noise).row(0).transpose();
        } else {
            const Matrix xi = standard_normal(1, sampler.action_dim, streams.noise);
            const Vector mean_action = sampler.act(state_.transpose(), xi).row(0).transpose();
            action = box_.clip(mean_action + noise.step(streams.noise));
        }
        const auto result = env_.step(action);
        Transition t{state_, action, result.reward, Vector(result.state), result.goal_reached};
        buffer.push(t);

        current_.total_return += result.reward;
        current_.discounted_return += discount_ * result.reward;
        discount_ *= gamma_;
        ++current_.length;
        state_ = result.state;
        if (result.done) {
            finished_.push_back(current_);
            in_episode_ = false;
        }
        return t;
    }

    bool in_episode() const { return in_episode_; }

    /// Episodes completed since the last call.
    std::vector<EpisodeStats> take_finished() { return std::exchange(finished_, {}); }

private:
    Env& env_;
    ActionBox box_;
    double gamma_;
    Vector state_;
    bool in_episode_ = false;
    EpisodeStats current_;
    double discount_ = 1.0;
    std::vector<EpisodeStats> finished_;
};

}  // namespace softq
