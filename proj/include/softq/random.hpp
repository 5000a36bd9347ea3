#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Dense>

namespace softq {

using Rng = std::mt19937_64;

namespace detail {
constexpr std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t hash = 1469598103934665603ULL;
    for (char c : text) {
        hash ^= static_cast<unsigned char>(c);
        hash *= 1099511628211ULL;
    }
    return hash;
}
}  // namespace detail

/// Independent generator for a named purpose ("env", "noise", "minibatch", "svgd", ...).
/// Streams with different names never share state, so adding draws to one
/// component leaves the others untouched.
inline Rng substream(std::uint64_t root_seed, std::string_view name) {
    const std::uint64_t tag = detail::fnv1a(name);
    std::seed_seq seq{static_cast<std::uint32_t>(root_seed), static_cast<std::uint32_t>(root_seed >> 32),
                      static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
    return Rng(seq);
}

inline Eigen::MatrixXd standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd out(rows, cols);
    // Row-major fill order keeps draws stable if the storage order ever changes.
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = normal(rng);
    return out;
}

inline Eigen::MatrixXd uniform(Eigen::Index rows, Eigen::Index cols, double low, double high, Rng& rng) {
    std::uniform_real_distribution<double> dist(low, high);
    Eigen::MatrixXd out(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = dist(rng);
    return out;
}

}  // namespace softq
