#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "softq/random.hpp"
#include "softq/random_mdp.hpp"
#include "softq/tabular.hpp"

namespace softq::tabular {

using BackupFn = std::function<Matrix(const TabularMdp&, const Matrix&, double)>;

struct PropertyResult {
    std::string property;
    std::uint64_t seed = 0;
    int n_states = 0;
    int n_actions = 0;
    double alpha = 0.0;
    double measured = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

struct OracleOptions {
    std::uint64_t seed = 0;
    std::vector<std::pair<int, int>> sizes{{1, 1}, {2, 2}, {3, 2}, {4, 3}, {6, 4}};
    int mdps_per_size = 10;
    std::vector<double> alphas{0.1, 1.0, 10.0};
    double gamma = 0.9;
    int contraction_pairs = 100;
    int horizon = 300;
    BackupFn backup = soft_bellman_backup;  // operator under test; swap in a shim for negative controls
};

struct OracleReport {
    std::vector<PropertyResult> results;

    bool all_passed() const {
        for (const auto& r : results)
            if (!r.passed) return false;
        return true;
    }
    std::size_t failures() const {
        std::size_t n = 0;
        for (const auto& r : results) n += r.passed ? 0 : 1;
        return n;
    }
};

namespace oracle {

/// Soft Bellman backup written out as explicit loops.
inline Matrix dense_backup(const TabularMdp& mdp, const Matrix& q, double alpha) {
    Matrix out(mdp.n_states, mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s) {
        for (int a = 0; a < mdp.n_actions; ++a) {
            double expected = 0.0;
            for (int next = 0; next < mdp.n_states; ++next) {
                double top = q(next, 0);
                for (int b = 1; b < mdp.n_actions; ++b) top = std::max(top, q(next, b));
                double sum = 0.0;
                for (int b = 0; b < mdp.n_actions; ++b) sum += std::exp((q(next, b) - top) / alpha);
                expected += mdp.p(s, a, next) * (top + alpha * std::log(sum));
            }
            out(s, a) = mdp.reward(s, a) + mdp.gamma * expected;
        }
    }
    return out;
}

/// Softmax of q / alpha row by row, normalized directly.
inline Matrix softmax_rows(const Matrix& q, double alpha) {
    Matrix out(q.rows(), q.cols());
    for (Eigen::Index s = 0; s < q.rows(); ++s) {
        double top = q(s, 0);
        for (Eigen::Index a = 1; a < q.cols(); ++a) top = std::max(top, q(s, a));
        double z = 0.0;
        for (Eigen::Index a = 0; a < q.cols(); ++a) z += std::exp((q(s, a) - top) / alpha);
        for (Eigen::Index a = 0; a < q.cols(); ++a) out(s, a) = std::exp((q(s, a) - top) / alpha) / z;
    }
    return out;
}

/// Discounted reward-plus-entropy return of `policy` over `horizon` steps,
/// starting from each (s, a), by pushing the state distribution forward.
inline Matrix horizon_soft_q(const TabularMdp& mdp, const Matrix& policy, double alpha, int horizon) {
    const int ns = mdp.n_states, na = mdp.n_actions;
    std::vector<double> per_state(static_cast<std::size_t>(ns), 0.0);  // E_pi[r] + alpha H at each state
    for (int s = 0; s < ns; ++s) {
        double acc = 0.0;
        for (int a = 0; a < na; ++a) {
            const double p = policy(s, a);
            acc += p * mdp.reward(s, a);
            if (p > 0.0) acc -= alpha * p * std::log(p);
        }
        per_state[static_cast<std::size_t>(s)] = acc;
    }
    Matrix out(ns, na);
    std::vector<double> dist(static_cast<std::size_t>(ns)), next(static_cast<std::size_t>(ns));
    for (int s0 = 0; s0 < ns; ++s0) {
        for (int a0 = 0; a0 < na; ++a0) {
            double total = mdp.reward(s0, a0);
            for (int k = 0; k < ns; ++k) dist[static_cast<std::size_t>(k)] = mdp.p(s0, a0, k);
            double discount = mdp.gamma;
            for (int t = 1; t < horizon; ++t) {
                double step = 0.0;
                for (int k = 0; k < ns; ++k) step += dist[static_cast<std::size_t>(k)] * per_state[static_cast<std::size_t>(k)];
                total += discount * step;
                discount *= mdp.gamma;
                std::fill(next.begin(), next.end(), 0.0);
                for (int k = 0; k < ns; ++k)
                    for (int a = 0; a < na; ++a) {
                        const double w = dist[static_cast<std::size_t>(k)] * policy(k, a);
                        for (int j = 0; j < ns; ++j) next[static_cast<std::size_t>(j)] += w * mdp.p(k, a, j);
                    }
                std::swap(dist, next);
            }
            out(s0, a0) = total;
        }
    }
    return out;
}

inline Matrix random_policy(int n_states, int n_actions, Rng& rng) {
    std::exponential_distribution<double> w(1.0);
    Matrix pi(n_states, n_actions);
    for (int s = 0; s < n_states; ++s) {
        for (int a = 0; a < n_actions; ++a) pi(s, a) = w(rng) + 1e-3;
        pi.row(s) /= pi.row(s).sum();
    }
    return pi;
}

inline double sup_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace oracle

/// Seeded random MDPs checked against every tabular property.
inline OracleReport run_oracle_battery(const OracleOptions& opts) {
    OracleReport report;
    constexpr double kSolveTol = 1e-12;
    constexpr int kMaxIter = 100'000;
    int index = 0;
    for (const auto& [ns, na] : opts.sizes) {
        for (int k = 0; k < opts.mdps_per_size; ++k, ++index) {
            const std::uint64_t mdp_seed = opts.seed * 1'000'003ULL + static_cast<std::uint64_t>(index);
            MdpGenSpec gen;
            gen.n_states = ns;
            gen.n_actions = na;
            gen.gamma = opts.gamma;
            gen.seed = mdp_seed;
            const TabularMdp mdp = generate_random_mdp(gen);
            Rng rng = substream(mdp_seed, "oracle-check");

            auto record = [&](std::string name, double alpha, double measured, double tol) {
                report.results.push_back({std::move(name), mdp_seed, ns, na, alpha, measured, tol,
                                          std::isfinite(measured) && measured <= tol});
            };

            double row_err = 0.0;
            for (Eigen::Index r = 0; r < mdp.transition.rows(); ++r)
                row_err = std::max(row_err, std::abs(mdp.transition.row(r).sum() - 1.0));
            record("stochastic_rows", 0.0, row_err, 1e-12);

            for (double alpha : opts.alphas) {
                const SoftSolution sol = soft_value_iteration(mdp, alpha, kSolveTol, kMaxIter);
                record("fixed_point", alpha, oracle::sup_diff(opts.backup(mdp, sol.q, alpha), sol.q), 1e-8);

                const Matrix probe = standard_normal(ns, na, rng) * 3.0;
                const Matrix dense = oracle::dense_backup(mdp, probe, alpha);
                record("dense_backup", alpha,
                       oracle::sup_diff(opts.backup(mdp, probe, alpha), dense) / std::max(1.0, dense.cwiseAbs().maxCoeff()),
                       1e-12);

                record("horizon_objective", alpha,
                       oracle::sup_diff(oracle::horizon_soft_q(mdp, sol.policy, alpha, opts.horizon), sol.q), 1e-4);

                record("boltzmann_consistency", alpha, oracle::sup_diff(sol.policy, oracle::softmax_rows(sol.q, alpha)),
                       1e-10);

                double worst = -std::numeric_limits<double>::infinity();
                for (int p = 0; p < opts.contraction_pairs; ++p) {
                    const Matrix q1 = standard_normal(ns, na, rng) * 5.0;
                    const Matrix q2 = standard_normal(ns, na, rng) * 5.0;
                    const double lhs = oracle::sup_diff(opts.backup(mdp, q1, alpha), opts.backup(mdp, q2, alpha));
                    worst = std::max(worst, lhs - mdp.gamma * oracle::sup_diff(q1, q2));
                }
                record("contraction", alpha, worst, 1e-12);

                const Matrix pi = oracle::random_policy(ns, na, rng);
                const Matrix q_pi = evaluate_policy_soft(mdp, pi, alpha, 1e-11);
                const Matrix q_new = evaluate_policy_soft(mdp, boltzmann_improvement(q_pi, alpha), alpha, 1e-11);
                record("policy_improvement", alpha, (q_pi - q_new).maxCoeff(), 1e-8);

                const Matrix start = standard_normal(ns, na, rng) * 10.0;
                const SoftSolution other = soft_value_iteration(mdp, alpha, kSolveTol, kMaxIter, start);
                record("unique_fixed_point", alpha, oracle::sup_diff(other.q, sol.q), 10.0 * 1e-10);
            }

            const SoftSolution cold = soft_value_iteration(mdp, 1e-6, 1e-10, kMaxIter);
            record("hard_limit", 1e-6, oracle::sup_diff(cold.q, hard_value_iteration(mdp, 1e-10, kMaxIter)), 1e-3);

            const SoftSolution hot = soft_value_iteration(mdp, 1e3, 1e-9, kMaxIter);
            double tv = 0.0;
            for (int s = 0; s < ns; ++s)
                tv = std::max(tv, 0.5 * (hot.policy.row(s).array() - 1.0 / na).abs().sum());
            record("high_temperature_uniform", 1e3, tv, 1e-3);

            if (ns == 1 && na == 1) {
                const SoftSolution sol = soft_value_iteration(mdp, 1.0, kSolveTol, kMaxIter);
                record("closed_form", 1.0, std::abs(sol.q(0, 0) - mdp.reward(0, 0) / (1.0 - mdp.gamma)), 1e-9);
            }
        }
    }
    return report;
}

inline void print_report(std::ostream& out, const OracleReport& report, bool verbose) {
    for (const auto& r : report.results) {
        if (!verbose && r.passed) continue;
        out << (r.passed ? "PASS " : "FAIL ") << r.property << " seed=" << r.seed << " size=" << r.n_states << "x"
            << r.n_actions << " alpha=" << r.alpha << " measured=" << r.measured << " tol=" << r.tolerance << "\n";
    }
    out << report.results.size() - report.failures() << "/" << report.results.size() << " checks passed\n";
}

}  // namespace softq::tabular
