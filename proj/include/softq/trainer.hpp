#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "softq/adam.hpp"
#include "softq/checkpoint.hpp"
#include "softq/error.hpp"
#include "softq/random.hpp"
#include "softq/soft_q.hpp"
#include "softq/svgd.hpp"

namespace softq {

struct TrainConfig {
    double q_lr = 1e-3;
    double policy_lr = 1e-4;
    int batch_size = 64;
    int min_pool = 10'000;
    int epoch_length = 10'000;
    int n_epochs = 100;
    double gamma = 0.99;
    double alpha = 1.0;
    int particles = 32;        // M
    int tilde_particles = 32;  // K
    int value_particles = 50;  // K_V
    int target_update_interval = 1000;
    double ou_theta = 0.15;
    double ou_sigma = 0.3;
    int proposal_switch_epoch = 10;
    bool svgd_enabled = true;
    std::uint64_t seed = 0;
    std::int64_t replay_capacity = 1'000'000;
    int checkpoint_interval = 10;
    std::vector<int> hidden = kDefaultHidden;
    bool log_wall_clock = false;

    void validate() const {
        require(q_lr > 0.0 && policy_lr > 0.0, "learning rates must be positive");
        require(batch_size >= 1, "batch_size must be at least 1");
        require(min_pool >= 1, "min_pool must be at least 1");
        require(epoch_length >= 1, "epoch_length must be at least 1");
        require(n_epochs >= 0, "n_epochs must be non-negative");
        require(gamma > 0.0 && gamma < 1.0, "gamma must lie strictly inside (0, 1)");
        require(alpha > 0.0, "alpha must be positive");
        require(particles >= 1 && tilde_particles >= 1 && value_particles >= 1, "particle counts must be positive");
        require(target_update_interval >= 1, "target_update_interval must be at least 1");
        require(ou_theta >= 0.0 && ou_sigma >= 0.0, "OU parameters must be non-negative");
        require(proposal_switch_epoch >= 0, "proposal_switch_epoch must be non-negative");
        require(replay_capacity >= 1, "replay_capacity must be positive");
        require(checkpoint_interval >= 1, "checkpoint_interval must be at least 1");
        require(!hidden.empty(), "hidden must list at least one width");
        for (int h : hidden) require(h >= 1, "hidden widths must be positive");
    }
};

inline bool operator==(const TrainConfig& a, const TrainConfig& b) {
    return a.q_lr == b.q_lr && a.policy_lr == b.policy_lr && a.batch_size == b.batch_size &&
           a.min_pool == b.min_pool && a.epoch_length == b.epoch_length && a.n_epochs == b.n_epochs &&
           a.gamma == b.gamma && a.alpha == b.alpha && a.particles == b.particles &&
           a.tilde_particles == b.tilde_particles && a.value_particles == b.value_particles &&
           a.target_update_interval == b.target_update_interval && a.ou_theta == b.ou_theta &&
           a.ou_sigma == b.ou_sigma && a.proposal_switch_epoch == b.proposal_switch_epoch &&
           a.svgd_enabled == b.svgd_enabled && a.seed == b.seed && a.replay_capacity == b.replay_capacity &&
           a.checkpoint_interval == b.checkpoint_interval && a.hidden == b.hidden &&
           a.log_wall_clock == b.log_wall_clock;
}

struct MetricsRow {
    int epoch = 0;
    double mean_return = std::numeric_limits<double>::quiet_NaN();
    double mean_discounted_return = std::numeric_limits<double>::quiet_NaN();
    double q_loss = std::numeric_limits<double>::quiet_NaN();
    double mean_soft_value = std::numeric_limits<double>::quiet_NaN();
    double seconds = 0.0;
    std::int64_t uniform_fallbacks = 0;
};

/// Networks of a run. The policy target is copied alongside the Q target but
/// nothing reads it; it is kept so checkpoints carry the full parameter set.
struct AgentState {
    QNetwork q;
    QNetwork q_target;
    SamplerNetwork policy;
    SamplerNetwork policy_target;

    Checkpoint snapshot(std::int64_t epoch) const {
        Checkpoint c;
        c.epoch = epoch;
        c.nets.emplace("q", q.params);
        c.nets.emplace("q_target", q_target.params);
        c.nets.emplace("policy", policy.params);
        c.nets.emplace("policy_target", policy_target.params);
        return c;
    }
};

/// Raised when a parameter goes non-finite; carries the last finite state.
class TrainingDiverged : public NumericAbort {
public:
    TrainingDiverged(const std::string& what, Checkpoint last_good, std::int64_t step)
        : NumericAbort(what), last_good_state(std::move(last_good)), step(step) {}
    Checkpoint last_good_state;
    std::int64_t step;
};

struct TrainResult {
    std::vector<Checkpoint> checkpoints;
    std::vector<MetricsRow> metrics;
};

/// Called after each epoch (and once for the initial checkpoint with an empty row
/// pointer). Checkpoint pointer is non-null when a checkpoint was taken.
using EpochObserver = std::function<void(const MetricsRow*, const Checkpoint*)>;

/// Soft Q-learning: collect one transition per step, then (once the pool holds
/// min_pool samples) one Q update on the soft Bellman error and one sampler
/// update along the amortized Stein direction. Targets are hard-copied every
/// target_update_interval environment steps.
template <class Env>
TrainResult train(const TrainConfig& config, Env& env, const EpochObserver& observer = {}) {
    config.validate();
    const int ds = env.state_dim();
    const int da = env.action_dim();
    const ActionBox box = ActionBox::symmetric(da);

    Rng init_rng = substream(config.seed, "init");
    CollectorStreams streams{substream(config.seed, "env"), substream(config.seed, "noise")};
    Rng minibatch_rng = substream(config.seed, "minibatch");
    Rng value_rng = substream(config.seed, "value");
    Rng svgd_rng = substream(config.seed, "svgd");

    AgentState agent;
    agent.q = QNetwork::create(ds, da, init_rng, config.hidden);
    agent.policy = SamplerNetwork::create(ds, da, init_rng, config.hidden);
    agent.q_target = agent.q;
    agent.policy_target = agent.policy;

    AdamState q_opt(agent.q.params, config.q_lr);
    AdamState policy_opt(agent.policy.params, config.policy_lr);
    ReplayBuffer buffer(static_cast<std::size_t>(config.replay_capacity));
    OuNoise noise(da, config.ou_theta, config.ou_sigma);
    ExperienceCollector<Env> collector(env, box, config.gamma);

    AmortizedOptions amortized;
    if (config.svgd_enabled) {
        amortized = {config.particles, config.tilde_particles, config.alpha, false, 1.0};
    } else {
        // MAP mode: one shared particle per state, so the kernel is 1 and its gradient vanishes.
        amortized = {1, 1, 0.0, true, 1.0};
    }
    auto q_action_grad = [&agent](const Matrix& s, const Matrix& a) { return agent.q.action_gradients(s, a); };

    TrainResult result;
    result.checkpoints.push_back(agent.snapshot(0));
    if (observer) observer(nullptr, &result.checkpoints.back());

    const auto start = std::chrono::steady_clock::now();
    std::int64_t total_steps = 0;
    Checkpoint last_good = result.checkpoints.back();

    for (int epoch = 1; epoch <= config.n_epochs; ++epoch) {
        double loss_sum = 0.0, value_sum = 0.0;
        std::int64_t updates = 0;
        SoftValueStats value_stats;
        SoftValueSettings settings{config.gamma, config.alpha, config.value_particles,
                                   epoch > config.proposal_switch_epoch ? Proposal::Sampler : Proposal::Uniform,
                                   &agent.policy, box};

        for (int t = 0; t < config.epoch_length; ++t) {
            const bool warmup = buffer.size() < static_cast<std::size_t>(config.min_pool);
            collector.collect_step(agent.policy, noise, buffer, streams, warmup);
            ++total_steps;

            if (buffer.size() >= static_cast<std::size_t>(config.min_pool)) {
                const Minibatch batch = buffer.sample(static_cast<std::size_t>(config.batch_size), minibatch_rng);
                const QLossResult q_update =
                    q_loss_and_grad(agent.q, agent.q_target, batch, settings, value_rng, &value_stats);
                adam_step(q_opt, agent.q.params, q_update.grads);

                MlpParams policy_grad =
                    amortized_policy_gradient(agent.policy, batch.states, q_action_grad, amortized, svgd_rng);
                policy_grad *= -1.0;  // ADAM descends; the Stein direction is an ascent direction
                adam_step(policy_opt, agent.policy.params, policy_grad);

                if (!std::isfinite(q_update.loss) || !agent.q.params.all_finite() || !agent.policy.params.all_finite())
                    throw TrainingDiverged("non-finite parameters at step " + std::to_string(total_steps) +
                                               " (epoch " + std::to_string(epoch) + ")",
                                           last_good, total_steps);
                loss_sum += q_update.loss;
                value_sum += q_update.mean_soft_value;
                ++updates;
            }

            if (total_steps % config.target_update_interval == 0) {
                agent.q_target = agent.q;
                agent.policy_target = agent.policy;
            }
        }

        MetricsRow row;
        row.epoch = epoch;
        const auto episodes = collector.take_finished();
        if (!episodes.empty()) {
            double ret = 0.0, disc = 0.0;
            for (const auto& e : episodes) {
                ret += e.total_return;
                disc += e.discounted_return;
            }
            row.mean_return = ret / static_cast<double>(episodes.size());
            row.mean_discounted_return = disc / static_cast<double>(episodes.size());
        }
        if (updates > 0) {
            row.q_loss = loss_sum / static_cast<double>(updates);
            row.mean_soft_value = value_sum / static_cast<double>(updates);
        }
        row.uniform_fallbacks = value_stats.uniform_fallbacks;
        if (config.log_wall_clock)
            row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.metrics.push_back(row);

        last_good = agent.snapshot(epoch);
        const bool take = epoch % config.checkpoint_interval == 0 || epoch == config.n_epochs;
        if (take) result.checkpoints.push_back(last_good);
        if (observer) observer(&result.metrics.back(), take ? &result.checkpoints.back() : nullptr);
    }
    return result;
}

}  // namespace softq
