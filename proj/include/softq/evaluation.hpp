#pragma once

#include <array>
#include <ostream>
#include <vector>

#include "softq/multigoal.hpp"
#include "softq/random.hpp"
#include "softq/svgd.hpp"

namespace softq {

struct TrajectoryRow {
    int episode = 0;
    int step = 0;
    double x = 0.0, y = 0.0;
    double ax = 0.0, ay = 0.0;
    double reward = 0.0;
};

struct GoalOccupancy {
    int rollouts = 0;
    std::array<int, 4> counts{};  // rollouts whose final position is nearest to each goal

    double fraction(int goal) const {
        return rollouts == 0 ? 0.0 : static_cast<double>(counts[static_cast<std::size_t>(goal)]) / rollouts;
    }
};

struct EvaluationResult {
    std::vector<TrajectoryRow> trajectory;
    GoalOccupancy occupancy;
};

/// Rolls out the sampler without exploration noise. Row `step` holds the
/// position before the action; a final row per episode records the end
/// position with zero action and reward.
inline EvaluationResult evaluate_multigoal(const SamplerNetwork& sampler, MultiGoalEnv env, int n_rollouts, Rng& rng) {
    require(n_rollouts >= 0, "evaluate: rollout count must be non-negative");
    require(sampler.state_dim == MultiGoalEnv::kStateDim && sampler.action_dim == MultiGoalEnv::kActionDim,
            "evaluate: sampler does not match the multi-goal environment");
    EvaluationResult out;
    out.occupancy.rollouts = n_rollouts;
    for (int ep = 0; ep < n_rollouts; ++ep) {
        Vector state = env.reset(rng);
        for (int step = 0;; ++step) {
            const Vector action = sample_actions(sampler, state, 1, rng).row(0).transpose();
            const StepResult r = env.step(action);
            out.trajectory.push_back({ep, step, state(0), state(1), action(0), action(1), r.reward});
            state = r.state;
            if (r.done) {
                out.trajectory.push_back({ep, step + 1, state(0), state(1), 0.0, 0.0, 0.0});
                break;
            }
        }
        ++out.occupancy.counts[static_cast<std::size_t>(env.nearest_goal(env.position()))];
    }
    return out;
}

inline void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRow>& rows) {
    out.precision(10);
    out << "episode,step,x,y,ax,ay,reward\n";
    for (const auto& r : rows)
        out << r.episode << ',' << r.step << ',' << r.x << ',' << r.y << ',' << r.ax << ',' << r.ay << ',' << r.reward
            << '\n';
}

}  // namespace softq
