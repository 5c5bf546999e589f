#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace gradshift {

// Error taxonomy shared by all modules.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct StateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TrainingDiverged : std::runtime_error {
    std::size_t iteration;
    explicit TrainingDiverged(std::size_t it)
        : std::runtime_error("training diverged at iteration " + std::to_string(it)),
          iteration(it) {}
};

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent seed streams so that
// unrelated consumers of one run seed never share an RNG sequence.
inline std::uint64_t mix_seed(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
    return mix_seed(base ^ mix_seed(tag));
}

}  // namespace gradshift
