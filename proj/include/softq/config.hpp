#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <yaml-cpp/yaml.h>

#include "softq/error.hpp"
#include "softq/multigoal.hpp"
#include "softq/trainer.hpp"

namespace softq {

inline constexpr int kConfigVersion = 1;

/// Bad config file; `line` is 1-based, 0 when no position is known.
class ConfigError : public InvalidInput {
public:
    ConfigError(const std::string& message, int line)
        : InvalidInput(line > 0 ? "line " + std::to_string(line) + ": " + message : message), line(line) {}
    int line;
};

/// Everything a run needs: training hyperparameters, environment, outputs.
struct RunConfig {
    TrainConfig train;
    std::string env_name = "multigoal";
    MultiGoalParams multigoal;
    std::string output_dir = "runs/default";
    int eval_rollouts = 100;

    void validate() const {
        if (env_name != "multigoal") throw ConfigError("unknown environment '" + env_name + "'", 0);
        try {
            train.validate();
            MultiGoalEnv probe(multigoal);
        } catch (const InvalidInput& e) {
            throw ConfigError(e.what(), 0);
        }
        if (eval_rollouts < 0) throw ConfigError("eval_rollouts must be non-negative", 0);
        if (output_dir.empty()) throw ConfigError("output_dir must not be empty", 0);
    }
};

inline bool operator==(const RunConfig& a, const RunConfig& b) {
    const auto& x = a.multigoal;
    const auto& y = b.multigoal;
    return a.train == b.train && a.env_name == b.env_name && a.output_dir == b.output_dir &&
           a.eval_rollouts == b.eval_rollouts && x.goal_distance == y.goal_distance &&
           x.goal_reward == y.goal_reward && x.goal_sigma == y.goal_sigma && x.action_cost == y.action_cost &&
           x.capture_radius == y.capture_radius && x.horizon == y.horizon && x.reset_noise == y.reset_noise;
}

namespace detail {

inline int line_of(const YAML::Node& node) { return node.Mark().line >= 0 ? node.Mark().line + 1 : 0; }

/// Reads the keys of one mapping, rejecting anything it was not asked about.
class MappingReader {
public:
    MappingReader(const YAML::Node& node, std::string where) : node_(node), where_(std::move(where)) {
        if (!node_.IsMap()) throw ConfigError(where_ + " must be a mapping", line_of(node_));
    }

    template <class T>
    void read(const std::string& key, T& into) {
        seen_.insert(key);
        const YAML::Node value = node_[key];
        if (!value) return;
        try {
            into = value.as<T>();
        } catch (const YAML::Exception&) {
            throw ConfigError("bad value for '" + qualified(key) + "'", line_of(value));
        }
    }

    YAML::Node child(const std::string& key) {
        seen_.insert(key);
        return node_[key];
    }

    void reject_unknown() const {
        for (const auto& kv : node_) {
            const auto key = kv.first.as<std::string>();
            if (!seen_.count(key)) throw ConfigError("unknown key '" + qualified(key) + "'", line_of(kv.first));
        }
    }

private:
    std::string qualified(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }
    const YAML::Node& node_;
    std::string where_;
    std::set<std::string> seen_;
};

}  // namespace detail

inline RunConfig parse_run_config(const std::string& text) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(e.msg, e.mark.line + 1);
    }
    if (!root || root.IsNull()) throw ConfigError("empty config", 0);
    RunConfig cfg;
    detail::MappingReader top(root, "");

    const YAML::Node version = top.child("version");
    if (!version) throw ConfigError("missing 'version'", 1);
    int v = 0;
    try {
        v = version.as<int>();
    } catch (const YAML::Exception&) {
        throw ConfigError("version must be an integer", detail::line_of(version));
    }
    if (v != kConfigVersion)
        throw ConfigError("unsupported config version " + std::to_string(v), detail::line_of(version));

    top.read("output_dir", cfg.output_dir);
    top.read("eval_rollouts", cfg.eval_rollouts);

    if (const YAML::Node env = top.child("env")) {
        detail::MappingReader r(env, "env");
        r.read("name", cfg.env_name);
        auto& m = cfg.multigoal;
        r.read("goal_distance", m.goal_distance);
        r.read("goal_reward", m.goal_reward);
        r.read("goal_sigma", m.goal_sigma);
        r.read("action_cost", m.action_cost);
        r.read("capture_radius", m.capture_radius);
        r.read("horizon", m.horizon);
        r.read("reset_noise", m.reset_noise);
        r.reject_unknown();
    }

    if (const YAML::Node train = top.child("train")) {
        detail::MappingReader r(train, "train");
        auto& t = cfg.train;
        r.read("q_lr", t.q_lr);
        r.read("policy_lr", t.policy_lr);
        r.read("batch_size", t.batch_size);
        r.read("min_pool", t.min_pool);
        r.read("epoch_length", t.epoch_length);
        r.read("n_epochs", t.n_epochs);
        r.read("gamma", t.gamma);
        r.read("alpha", t.alpha);
        r.read("particles", t.particles);
        r.read("tilde_particles", t.tilde_particles);
        r.read("value_particles", t.value_particles);
        r.read("target_update_interval", t.target_update_interval);
        r.read("ou_theta", t.ou_theta);
        r.read("ou_sigma", t.ou_sigma);
        r.read("proposal_switch_epoch", t.proposal_switch_epoch);
        r.read("svgd_enabled", t.svgd_enabled);
        r.read("seed", t.seed);
        r.read("replay_capacity", t.replay_capacity);
        r.read("checkpoint_interval", t.checkpoint_interval);
        r.read("hidden", t.hidden);
        r.read("log_wall_clock", t.log_wall_clock);
        r.reject_unknown();
    }
    top.reject_unknown();
    cfg.validate();
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'", 0);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

inline std::string serialize_run_config(const RunConfig& cfg) {
    YAML::Emitter out;
    out.SetDoublePrecision(17);
    out << YAML::BeginMap;
    out << YAML::Key << "version" << YAML::Value << kConfigVersion;
    out << YAML::Key << "output_dir" << YAML::Value << cfg.output_dir;
    out << YAML::Key << "eval_rollouts" << YAML::Value << cfg.eval_rollouts;

    const auto& m = cfg.multigoal;
    out << YAML::Key << "env" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "name" << YAML::Value << cfg.env_name;
    out << YAML::Key << "goal_distance" << YAML::Value << m.goal_distance;
    out << YAML::Key << "goal_reward" << YAML::Value << m.goal_reward;
    out << YAML::Key << "goal_sigma" << YAML::Value << m.goal_sigma;
    out << YAML::Key << "action_cost" << YAML::Value << m.action_cost;
    out << YAML::Key << "capture_radius" << YAML::Value << m.capture_radius;
    out << YAML::Key << "horizon" << YAML::Value << m.horizon;
    out << YAML::Key << "reset_noise" << YAML::Value << m.reset_noise;
    out << YAML::EndMap;

    const auto& t = cfg.train;
    out << YAML::Key << "train" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "q_lr" << YAML::Value << t.q_lr;
    out << YAML::Key << "policy_lr" << YAML::Value << t.policy_lr;
    out << YAML::Key << "batch_size" << YAML::Value << t.batch_size;
    out << YAML::Key << "min_pool" << YAML::Value << t.min_pool;
    out << YAML::Key << "epoch_length" << YAML::Value << t.epoch_length;
    out << YAML::Key << "n_epochs" << YAML::Value << t.n_epochs;
    out << YAML::Key << "gamma" << YAML::Value << t.gamma;
    out << YAML::Key << "alpha" << YAML::Value << t.alpha;
    out << YAML::Key << "particles" << YAML::Value << t.particles;
    out << YAML::Key << "tilde_particles" << YAML::Value << t.tilde_particles;
    out << YAML::Key << "value_particles" << YAML::Value << t.value_particles;
    out << YAML::Key << "target_update_interval" << YAML::Value << t.target_update_interval;
    out << YAML::Key << "ou_theta" << YAML::Value << t.ou_theta;
    out << YAML::Key << "ou_sigma" << YAML::Value << t.ou_sigma;
    out << YAML::Key << "proposal_switch_epoch" << YAML::Value << t.proposal_switch_epoch;
    out << YAML::Key << "svgd_enabled" << YAML::Value << t.svgd_enabled;
    out << YAML::Key << "seed" << YAML::Value << t.seed;
    out << YAML::Key << "replay_capacity" << YAML::Value << t.replay_capacity;
    out << YAML::Key << "checkpoint_interval" << YAML::Value << t.checkpoint_interval;
    out << YAML::Key << "hidden" << YAML::Value << YAML::Flow << t.hidden;
    out << YAML::Key << "log_wall_clock" << YAML::Value << t.log_wall_clock;
    out << YAML::EndMap;
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

}  // namespace softq
