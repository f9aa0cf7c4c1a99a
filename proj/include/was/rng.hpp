#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "was/tensor.hpp"

namespace was {

using Rng = std::mt19937_64;

// splitmix64 finalizer; mixes a master seed with a stream tag so that every
// component (student init, each teacher, gumbel noise, ...) owns an
// independent deterministic stream.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) { return Rng(mix_seed(seed, stream)); }

// Stream tags. Keeping these fixed keeps runs reproducible when unrelated
// components are added or skipped (e.g. alpha=0 must not shift student RNG).
namespace stream {
constexpr std::uint64_t student_init = 1;
constexpr std::uint64_t gumbel = 2;
constexpr std::uint64_t weigh_init = 3;
constexpr std::uint64_t mlp_init = 4;
constexpr std::uint64_t strategy = 5;
constexpr std::uint64_t sbm_edges = 10;
constexpr std::uint64_t sbm_feats = 11;
constexpr std::uint64_t sbm_masks = 12;
constexpr std::uint64_t kmeans_init = 20;
constexpr std::uint64_t partition_seeds = 21;
constexpr std::uint64_t probe_init = 30;
constexpr std::uint64_t teacher_base = 1000;  // teacher k uses teacher_base + k
}  // namespace stream

inline double uniform01(Rng& rng) {
    // 53-bit mantissa draw; avoids distribution-object state for portability
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double gumbel_sample(Rng& rng) {
    double u = uniform01(rng);
    u = std::min(std::max(u, 1e-16), 1.0 - 1e-16);
    return -std::log(-std::log(u));
}

inline double normal_sample(Rng& rng) {
    // Box-Muller, one value per call (second value discarded to keep the
    // stream layout simple and deterministic).
    double u1 = std::min(std::max(uniform01(rng), 1e-16), 1.0 - 1e-16);
    double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Glorot-uniform init with fan sizes taken from the matrix shape.
inline Tensor glorot_uniform(int fan_in, int fan_out, std::vector<int> shape, Rng& rng) {
    double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = (2.0 * uniform01(rng) - 1.0) * limit;
    return t;
}

inline Tensor glorot_matrix(int in_dim, int out_dim, Rng& rng) {
    return glorot_uniform(in_dim, out_dim, {in_dim, out_dim}, rng);
}

}  // namespace was
