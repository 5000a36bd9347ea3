#pragma once

#include <cstdint>
#include <random>

#include "softq/error.hpp"
#include "softq/random.hpp"
#include "softq/tabular.hpp"

namespace softq {

struct MdpGenSpec {
    int n_states = 3;
    int n_actions = 2;
    double sparsity = 0.0;  // probability that a transition entry is forced to zero
    double reward_low = -1.0;
    double reward_high = 1.0;
    double gamma = 0.9;
    std::uint64_t seed = 0;
};

/// Random MDP with normalized-exponential (flat Dirichlet) transition rows and
/// uniform rewards. Every row keeps at least one nonzero entry.
inline tabular::TabularMdp generate_random_mdp(const MdpGenSpec& spec) {
    require(spec.n_states >= 1 && spec.n_actions >= 1, "generate_random_mdp: need at least one state and action");
    require(spec.sparsity >= 0.0 && spec.sparsity < 1.0, "generate_random_mdp: sparsity must be in [0, 1)");
    require(spec.reward_low <= spec.reward_high, "generate_random_mdp: empty reward range");
    Rng rng = substream(spec.seed, "mdp");
    std::exponential_distribution<double> weight(1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> reward(spec.reward_low, spec.reward_high);
    std::uniform_int_distribution<int> pick(0, spec.n_states - 1);

    tabular::TabularMdp mdp;
    mdp.n_states = spec.n_states;
    mdp.n_actions = spec.n_actions;
    mdp.gamma = spec.gamma;
    mdp.transition.resize(static_cast<Eigen::Index>(spec.n_states) * spec.n_actions, spec.n_states);
    mdp.reward.resize(spec.n_states, spec.n_actions);
    for (Eigen::Index r = 0; r < mdp.transition.rows(); ++r) {
        for (int c = 0; c < spec.n_states; ++c)
            mdp.transition(r, c) = unit(rng) < spec.sparsity ? 0.0 : weight(rng) + 1e-12;
        if (mdp.transition.row(r).sum() == 0.0) mdp.transition(r, pick(rng)) = 1.0;
        mdp.transition.row(r) /= mdp.transition.row(r).sum();
    }
    for (int s = 0; s < spec.n_states; ++s)
        for (int a = 0; a < spec.n_actions; ++a) mdp.reward(s, a) = reward(rng);
    mdp.validate();
    return mdp;
}

}  // namespace softq
