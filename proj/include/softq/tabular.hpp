#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "softq/error.hpp"

namespace softq::tabular {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Finite discounted MDP. `transition` stacks one probability row per
/// (state, action) pair: row s * n_actions + a holds p(. | s, a).
struct TabularMdp {
    int n_states = 0;
    int n_actions = 0;
    Matrix transition;  // (S*A) x S
    Matrix reward;      // S x A
    double gamma = 0.9;

    Eigen::Index row(int s, int a) const { return static_cast<Eigen::Index>(s) * n_actions + a; }
    double p(int s, int a, int next) const { return transition(row(s, a), next); }

    void validate() const {
        require(n_states > 0 && n_actions > 0, "mdp: state and action counts must be positive");
        require(transition.rows() == static_cast<Eigen::Index>(n_states) * n_actions && transition.cols() == n_states,
                "mdp: transition tensor has wrong shape");
        require(reward.rows() == n_states && reward.cols() == n_actions, "mdp: reward matrix has wrong shape");
        require(reward.allFinite(), "mdp: rewards must be finite");
        require(gamma > 0.0 && gamma < 1.0, "mdp: gamma must lie strictly inside (0, 1)");
        for (Eigen::Index r = 0; r < transition.rows(); ++r) {
            require(transition.row(r).minCoeff() >= 0.0, "mdp: negative transition probability in row " +
                                                             std::to_string(r));
            require(std::abs(transition.row(r).sum() - 1.0) <= 1e-12,
                    "mdp: transition row " + std::to_string(r) + " does not sum to 1");
        }
    }
};

struct SoftSolution {
    Matrix q;       // S x A
    Vector v;       // S
    Matrix policy;  // S x A
    double alpha = 1.0;
    int iterations = 0;
    double residual = std::numeric_limits<double>::infinity();

    bool converged(double tol) const { return residual <= tol; }
};

/// alpha * log sum_a exp(q_a / alpha), max-shifted so nothing overflows.
inline double soft_value_discrete(const Eigen::Ref<const Vector>& q_row, double alpha) {
    require(q_row.size() > 0, "soft_value_discrete: empty action row");
    require(q_row.allFinite(), "soft_value_discrete: non-finite Q entry");
    require(alpha > 0.0, "soft_value_discrete: alpha must be positive");
    const double top = q_row.maxCoeff();
    const double sum = ((q_row.array() - top) / alpha).exp().sum();
    return top + alpha * std::log(sum);
}

inline Vector soft_values(const Matrix& q, double alpha) {
    Vector v(q.rows());
    for (Eigen::Index s = 0; s < q.rows(); ++s) v(s) = soft_value_discrete(q.row(s).transpose(), alpha);
    return v;
}

namespace detail {
inline void check_q(const TabularMdp& mdp, const Matrix& q, const char* who) {
    require(q.rows() == mdp.n_states && q.cols() == mdp.n_actions, std::string(who) + ": Q shape does not match MDP");
    require(q.allFinite(), std::string(who) + ": Q must be finite");
}

/// r + gamma * P v reshaped to S x A.
inline Matrix backup_from_values(const TabularMdp& mdp, const Vector& v) {
    const Vector expected = mdp.transition * v;
    Matrix out(mdp.n_states, mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) out(s, a) = mdp.reward(s, a) + mdp.gamma * expected(mdp.row(s, a));
    return out;
}
}  // namespace detail

/// Soft Bellman operator: (TQ)(s,a) = r(s,a) + gamma * E_{s'} softmax_alpha Q(s', .).
inline Matrix soft_bellman_backup(const TabularMdp& mdp, const Matrix& q, double alpha) {
    detail::check_q(mdp, q, "soft_bellman_backup");
    return detail::backup_from_values(mdp, soft_values(q, alpha));
}

/// Boltzmann policy exp((q - v) / alpha). `v` must agree with `q` under
/// soft_value_discrete to 1e-6 (relative for |v| > 1); rows are renormalized.
inline Matrix maxent_policy_from_q(const Matrix& q, const Vector& v, double alpha) {
    require(alpha > 0.0, "maxent_policy_from_q: alpha must be positive");
    require(v.size() == q.rows(), "maxent_policy_from_q: value vector length does not match Q rows");
    Matrix policy(q.rows(), q.cols());
    for (Eigen::Index s = 0; s < q.rows(); ++s) {
        const double exact = soft_value_discrete(q.row(s).transpose(), alpha);
        require(std::abs(exact - v(s)) <= 1e-6 * std::max(1.0, std::abs(exact)),
                "maxent_policy_from_q: v is inconsistent with q at state " + std::to_string(s));
        policy.row(s) = ((q.row(s).array() - exact) / alpha).exp().matrix();
        policy.row(s) /= policy.row(s).sum();
    }
    return policy;
}

/// Fixed-point iteration of the soft Bellman operator from `initial` (zero by
/// default) until the sup-norm change drops to `tol` or `max_iter` is hit.
/// A non-converged result keeps `residual > tol`; the caller decides what to do.
inline SoftSolution soft_value_iteration(const TabularMdp& mdp, double alpha, double tol, int max_iter,
                                         std::optional<Matrix> initial = std::nullopt) {
    mdp.validate();
    require(alpha > 0.0, "soft_value_iteration: alpha must be positive");
    require(tol > 0.0, "soft_value_iteration: tol must be positive");
    require(max_iter >= 1, "soft_value_iteration: max_iter must be at least 1");
    SoftSolution sol;
    sol.alpha = alpha;
    sol.q = initial ? std::move(*initial) : Matrix::Zero(mdp.n_states, mdp.n_actions);
    detail::check_q(mdp, sol.q, "soft_value_iteration");
    for (int it = 1; it <= max_iter; ++it) {
        Matrix next = soft_bellman_backup(mdp, sol.q, alpha);
        sol.residual = (next - sol.q).cwiseAbs().maxCoeff();
        sol.q = std::move(next);
        sol.iterations = it;
        if (sol.residual <= tol) break;
    }
    sol.v = soft_values(sol.q, alpha);
    sol.policy = maxent_policy_from_q(sol.q, sol.v, alpha);
    return sol;
}

/// Shannon entropy of each row, with 0 log 0 = 0.
inline Vector row_entropies(const Matrix& policy) {
    Vector h(policy.rows());
    for (Eigen::Index s = 0; s < policy.rows(); ++s) {
        double acc = 0.0;
        for (Eigen::Index a = 0; a < policy.cols(); ++a) {
            const double p = policy(s, a);
            if (p > 0.0) acc -= p * std::log(p);
        }
        h(s) = acc;
    }
    return h;
}

inline void check_policy(const TabularMdp& mdp, const Matrix& policy) {
    require(policy.rows() == mdp.n_states && policy.cols() == mdp.n_actions,
            "policy shape does not match MDP");
    for (Eigen::Index s = 0; s < policy.rows(); ++s) {
        require(policy.row(s).minCoeff() >= 0.0, "policy has a negative probability");
        require(std::abs(policy.row(s).sum() - 1.0) <= 1e-9, "policy row does not sum to 1");
    }
}

/// Soft Q of a fixed policy: fixed point of
///   Q(s,a) = r(s,a) + gamma E_{s'}[ alpha H(pi(.|s')) + sum_a' pi(a'|s') Q(s',a') ].
/// Iterates until the contraction bound guarantees |Q - Q_pi|_inf <= tol.
inline Matrix evaluate_policy_soft(const TabularMdp& mdp, const Matrix& policy, double alpha, double tol) {
    mdp.validate();
    check_policy(mdp, policy);
    require(tol > 0.0, "evaluate_policy_soft: tol must be positive");
    const Vector bonus = alpha * row_entropies(policy);
    const double stop = tol * (1.0 - mdp.gamma) / mdp.gamma;
    Matrix q = Matrix::Zero(mdp.n_states, mdp.n_actions);
    for (;;) {
        const Vector v = bonus + (policy.cwiseProduct(q)).rowwise().sum();
        Matrix next = detail::backup_from_values(mdp, v);
        const double change = (next - q).cwiseAbs().maxCoeff();
        q = std::move(next);
        if (change <= stop) return q;
    }
}

/// Boltzmann improvement pi~(.|s) proportional to exp(Q_pi(s, .) / alpha).
inline Matrix boltzmann_improvement(const Matrix& q_pi, double alpha) {
    return maxent_policy_from_q(q_pi, soft_values(q_pi, alpha), alpha);
}

/// Standard (hard) value iteration, used as the alpha -> 0 reference.
inline Matrix hard_value_iteration(const TabularMdp& mdp, double tol, int max_iter) {
    mdp.validate();
    Matrix q = Matrix::Zero(mdp.n_states, mdp.n_actions);
    for (int it = 0; it < max_iter; ++it) {
        Matrix next = detail::backup_from_values(mdp, q.rowwise().maxCoeff());
        const double change = (next - q).cwiseAbs().maxCoeff();
        q = std::move(next);
        if (change <= tol) break;
    }
    return q;
}

struct GradientPair {
    Vector policy_gradient;  // entropy-regularized policy gradient (ascent)
    Vector bellman_gradient;  // negative soft Bellman-error gradient (descent direction)
};

/// Single-state bandit with a softmax policy over per-action energies (alpha = 1).
/// Returns the two update directions that should coincide up to a positive scale:
///   (a) E_pi[grad log pi (Q_hat + b)] + grad H(pi), baseline b = log-partition + 1;
///   (b) -grad of 1/2 E_pi[(A_hat + V_theta - Q_theta)^2] with Q_theta = energies and
///       the advantage target A_hat = Q_hat - V_theta held constant.
/// Q_hat is the exact soft Q of the current policy; all expectations are exact sums.
inline GradientPair pg_softq_gradient_pair(const TabularMdp& bandit, const Vector& energies) {
    bandit.validate();
    require(bandit.n_states == 1, "pg_softq_gradient_pair: bandit must have exactly one state");
    require(energies.size() == bandit.n_actions, "pg_softq_gradient_pair: one energy per action required");
    require(energies.allFinite(), "pg_softq_gradient_pair: energies must be finite");
    const Eigen::Index n = energies.size();

    const double log_partition = soft_value_discrete(energies, 1.0);
    const Vector pi = (energies.array() - log_partition).exp().matrix();
    const Matrix pi_row = pi.transpose();
    const Vector q_hat = evaluate_policy_soft(bandit, pi_row, 1.0, 1e-13).row(0).transpose();

    // (a) likelihood-ratio form plus the analytic entropy gradient.
    // grad_phi log pi(a) = e_a - pi.
    const double baseline = log_partition + 1.0;
    Vector score_term = Vector::Zero(n);
    for (Eigen::Index a = 0; a < n; ++a) {
        Vector grad_log = -pi;
        grad_log(a) += 1.0;
        score_term += pi(a) * (q_hat(a) + baseline) * grad_log;
    }
    const Vector log_pi = pi.array().log().matrix();
    const double entropy = -pi.dot(log_pi);
    const Vector entropy_grad = (-(pi.array() * (log_pi.array() + entropy))).matrix();

    // (b) Bellman-error form: (grad Q - grad V)(Q_target - Q).
    Vector bellman = Vector::Zero(n);
    for (Eigen::Index a = 0; a < n; ++a) {
        Vector grad_q_minus_v = -pi;  // grad_theta V = softmax(theta)
        grad_q_minus_v(a) += 1.0;
        const double advantage_target = q_hat(a) - log_partition;
        const double target = advantage_target + log_partition;
        bellman += pi(a) * (target - energies(a)) * grad_q_minus_v;
    }
    return {score_term + entropy_grad, bellman};
}

// ---------------------------------------------------------------------------
// Plain-text MDP file:
//   softq-mdp 1
//   states <S> actions <A> gamma <g>
//   reward
//   <S rows of A values>
//   transition
//   <S*A rows of S probabilities, ordered (s, a) with a fastest>

inline void write_mdp(std::ostream& out, const TabularMdp& mdp) {
    mdp.validate();
    out.precision(std::numeric_limits<double>::max_digits10);
    out << "softq-mdp 1\n";
    out << "states " << mdp.n_states << " actions " << mdp.n_actions << " gamma " << mdp.gamma << "\n";
    auto dump = [&](const Matrix& m) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? " " : "") << m(r, c);
            out << "\n";
        }
    };
    out << "reward\n";
    dump(mdp.reward);
    out << "transition\n";
    dump(mdp.transition);
}

inline TabularMdp read_mdp(std::istream& in) {
    auto expect = [&](const std::string& word) {
        std::string got;
        if (!(in >> got) || got != word) throw InvalidInput("mdp file: expected '" + word + "', got '" + got + "'");
    };
    auto number = [&](const char* what) {
        double x;
        if (!(in >> x)) throw InvalidInput(std::string("mdp file: could not read ") + what);
        return x;
    };
    expect("softq-mdp");
    int version = 0;
    if (!(in >> version) || version != 1) throw InvalidInput("mdp file: unsupported version");
    TabularMdp mdp;
    expect("states");
    in >> mdp.n_states;
    expect("actions");
    in >> mdp.n_actions;
    expect("gamma");
    mdp.gamma = number("gamma");
    require(mdp.n_states > 0 && mdp.n_actions > 0, "mdp file: state and action counts must be positive");
    expect("reward");
    mdp.reward.resize(mdp.n_states, mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) mdp.reward(s, a) = number("reward entry");
    expect("transition");
    mdp.transition.resize(static_cast<Eigen::Index>(mdp.n_states) * mdp.n_actions, mdp.n_states);
    for (Eigen::Index r = 0; r < mdp.transition.rows(); ++r)
        for (int c = 0; c < mdp.n_states; ++c) mdp.transition(r, c) = number("transition entry");
    mdp.validate();
    return mdp;
}

inline TabularMdp load_mdp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open MDP file: " + path);
    return read_mdp(in);
}

inline void save_mdp(const std::string& path, const TabularMdp& mdp) {
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot write MDP file: " + path);
    write_mdp(out, mdp);
}

}  // namespace softq::tabular
