#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Dense>

#include "softq/error.hpp"
#include "softq/random.hpp"

namespace softq {

/// Constants of the 2D multi-goal point mass. All of them are free choices:
/// four symmetric goals and a Gaussian-mixture reward are the only fixed shape.
struct MultiGoalParams {
    double goal_distance = 5.0;   // goals at (+-d, 0) and (0, +-d)
    double goal_reward = 10.0;    // peak weight w of each Gaussian bump
    double goal_sigma = 1.0;      // Gaussian width sigma_g
    double action_cost = 0.01;    // c in -c |a|^2
    double capture_radius = 0.5;  // episode ends within this distance of a goal; 0 disables
    int horizon = 20;             // T
    double reset_noise = 0.1;     // std of the start-position jitter; 0 starts exactly at the origin
};

struct StepResult {
    Eigen::Vector2d state;
    double reward = 0.0;
    bool done = false;         // episode is over (goal captured or horizon reached)
    bool goal_reached = false;  // true terminal: no bootstrapping past this transition
};

class MultiGoalEnv {
public:
    static constexpr int kStateDim = 2;
    static constexpr int kActionDim = 2;

    explicit MultiGoalEnv(MultiGoalParams params = {}) : params_(params) {
        require(params_.horizon >= 1, "multigoal: horizon must be at least 1");
        require(params_.goal_sigma > 0.0, "multigoal: goal_sigma must be positive");
        require(params_.capture_radius >= 0.0 && params_.reset_noise >= 0.0 && params_.action_cost >= 0.0,
                "multigoal: negative radius, noise or cost");
        const double d = params_.goal_distance;
        goals_ = {Eigen::Vector2d(d, 0.0), Eigen::Vector2d(-d, 0.0), Eigen::Vector2d(0.0, d), Eigen::Vector2d(0.0, -d)};
    }

    const MultiGoalParams& params() const { return params_; }
    const std::array<Eigen::Vector2d, 4>& goals() const { return goals_; }
    const Eigen::Vector2d& position() const { return position_; }
    int steps() const { return steps_; }
    bool active() const { return active_; }
    int state_dim() const { return kStateDim; }
    int action_dim() const { return kActionDim; }
    int horizon() const { return params_.horizon; }

    Eigen::VectorXd reset(Rng& rng) {
        position_.setZero();
        if (params_.reset_noise > 0.0) {
            std::normal_distribution<double> jitter(0.0, params_.reset_noise);
            position_.x() = jitter(rng);
            position_.y() = jitter(rng);
        }
        steps_ = 0;
        active_ = true;
        return position_;
    }

    /// Places the agent at an arbitrary position with a fresh step counter.
    void set_position(const Eigen::Vector2d& p) {
        position_ = p;
        steps_ = 0;
        active_ = true;
    }

    double reward_at(const Eigen::Vector2d& position, const Eigen::Vector2d& action) const {
        double r = 0.0;
        const double denom = 2.0 * params_.goal_sigma * params_.goal_sigma;
        for (const auto& g : goals_) r += params_.goal_reward * std::exp(-(position - g).squaredNorm() / denom);
        return r - params_.action_cost * action.squaredNorm();
    }

    double nearest_goal_distance(const Eigen::Vector2d& p) const {
        return (p - goals_[static_cast<std::size_t>(nearest_goal(p))]).norm();
    }

    int nearest_goal(const Eigen::Vector2d& p) const {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int g = 0; g < 4; ++g) {
            const double d = (p - goals_[static_cast<std::size_t>(g)]).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = g;
            }
        }
        return best;
    }

    StepResult step(const Eigen::VectorXd& action) {
        if (!active_) throw ContractViolation("multigoal: step called on a finished episode; reset first");
        require(action.size() == kActionDim, "multigoal: action must be 2-dimensional");
        const Eigen::Vector2d a = action.cwiseMax(-1.0).cwiseMin(1.0);
        position_ += a;
        ++steps_;
        StepResult out;
        out.state = position_;
        out.reward = reward_at(position_, a);
        out.goal_reached = params_.capture_radius > 0.0 && nearest_goal_distance(position_) < params_.capture_radius;
        out.done = out.goal_reached || steps_ >= params_.horizon;
        active_ = !out.done;
        return out;
    }

private:
    MultiGoalParams params_;
    std::array<Eigen::Vector2d, 4> goals_;
    Eigen::Vector2d position_ = Eigen::Vector2d::Zero();
    int steps_ = 0;
    bool active_ = false;
};

}  // namespace softq
