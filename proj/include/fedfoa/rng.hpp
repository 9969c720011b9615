#pragma once

#include <cstdint>
#include <random>

#include "fedfoa/matrix.hpp"

namespace fedfoa {

/// splitmix64 step; used to derive independent seeds from one master seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Deterministic sub-seed for a named stream of a run.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t s = master ^ (stream * 0xd6e8feb86659fd93ULL);
    splitmix64(s);
    return splitmix64(s);
}

// Stream ids used across the simulator. Clients get stream_client_data + i
// for batch sampling/augmentation and stream_client_model + i for init.
inline constexpr std::uint64_t stream_dataset = 1;
inline constexpr std::uint64_t stream_partition = 2;
inline constexpr std::uint64_t stream_client_data = 1000;
inline constexpr std::uint64_t stream_client_model = 2000;

inline DenseMatrix gaussian_matrix(std::size_t rows, std::size_t cols,
                                   std::mt19937_64& rng, double sigma = 1.0) {
    DenseMatrix m(rows, cols);
    std::normal_distribution<double> dist(0.0, sigma);
    for (double& v : m.data()) v = dist(rng);
    return m;
}

}  // namespace fedfoa
