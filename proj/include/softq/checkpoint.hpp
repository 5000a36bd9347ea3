#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "softq/error.hpp"
#include "softq/mlp.hpp"

namespace softq {

/// Named parameter sets saved together, e.g. {"q", "q_target", "policy", "policy_target"}.
struct Checkpoint {
    std::int64_t epoch = 0;
    std::map<std::string, MlpParams> nets;

    const MlpParams& at(const std::string& name) const {
        auto it = nets.find(name);
        if (it == nets.end()) throw InvalidInput("checkpoint has no network named '" + name + "'");
        return it->second;
    }
};

inline bool operator==(const Checkpoint& a, const Checkpoint& b) { return a.epoch == b.epoch && a.nets == b.nets; }

// Binary layout (little-endian, native doubles so round trips are bit-exact):
//   "SOFTQCKP" u32 version i64 epoch u32 n_nets
//   per net: u32 name_len, name bytes, u32 activation, u32 n_layers
//     per layer: u64 rows, u64 cols, rows*cols weights (row-major), rows biases
inline constexpr char kCheckpointMagic[8] = {'S', 'O', 'F', 'T', 'Q', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void put(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw InvalidInput("checkpoint: truncated file");
    return value;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::put(out, kCheckpointVersion);
    detail::put(out, ckpt.epoch);
    detail::put(out, static_cast<std::uint32_t>(ckpt.nets.size()));
    for (const auto& [name, net] : ckpt.nets) {
        detail::put(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::put(out, static_cast<std::uint32_t>(net.output));
        detail::put(out, static_cast<std::uint32_t>(net.layers.size()));
        for (const auto& layer : net.layers) {
            detail::put(out, static_cast<std::uint64_t>(layer.weight.rows()));
            detail::put(out, static_cast<std::uint64_t>(layer.weight.cols()));
            for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
                for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) detail::put(out, layer.weight(r, c));
            for (Eigen::Index r = 0; r < layer.bias.size(); ++r) detail::put(out, layer.bias(r));
        }
    }
}

inline Checkpoint read_checkpoint(std::istream& in) {
    char magic[sizeof(kCheckpointMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw InvalidInput("checkpoint: bad magic, not a parameter dump");
    const auto version = detail::get<std::uint32_t>(in);
    if (version != kCheckpointVersion)
        throw InvalidInput("checkpoint: unsupported version " + std::to_string(version));
    Checkpoint ckpt;
    ckpt.epoch = detail::get<std::int64_t>(in);
    const auto n_nets = detail::get<std::uint32_t>(in);
    for (std::uint32_t k = 0; k < n_nets; ++k) {
        const auto name_len = detail::get<std::uint32_t>(in);
        if (name_len > 4096) throw InvalidInput("checkpoint: corrupt network name");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        MlpParams net;
        const auto act = detail::get<std::uint32_t>(in);
        if (act > 1) throw InvalidInput("checkpoint: unknown output activation");
        net.output = static_cast<OutputActivation>(act);
        const auto n_layers = detail::get<std::uint32_t>(in);
        for (std::uint32_t l = 0; l < n_layers; ++l) {
            const auto rows = detail::get<std::uint64_t>(in);
            const auto cols = detail::get<std::uint64_t>(in);
            if (rows == 0 || cols == 0 || rows > (1u << 20) || cols > (1u << 20))
                throw InvalidInput("checkpoint: corrupt layer shape");
            DenseLayer layer{Matrix(rows, cols), Vector(rows)};
            for (std::uint64_t r = 0; r < rows; ++r)
                for (std::uint64_t c = 0; c < cols; ++c) layer.weight(r, c) = detail::get<double>(in);
            for (std::uint64_t r = 0; r < rows; ++r) layer.bias(r) = detail::get<double>(in);
            net.layers.push_back(std::move(layer));
        }
        net.validate();
        ckpt.nets.emplace(std::move(name), std::move(net));
    }
    return ckpt;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot open checkpoint for writing: " + path);
    write_checkpoint(out, ckpt);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open checkpoint: " + path);
    return read_checkpoint(in);
}

}  // namespace softq
