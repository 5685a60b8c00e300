#pragma once

#include <cstdint>
#include <random>

#include "artinp/tensor.hpp"

namespace artinp {

// All randomness in the project flows through explicitly seeded engines so
// that every stage is reproducible from its config seed.
using Rng = std::mt19937_64;

inline Rng make_rng(uint64_t seed) { return Rng(seed); }

// Derive an independent stream for a sub-task (patient index, slice index...).
inline Rng derive_rng(uint64_t seed, uint64_t stream) {
    std::seed_seq seq{uint32_t(seed), uint32_t(seed >> 32), uint32_t(stream),
                      uint32_t(stream >> 32), 0x9e3779b9u};
    return Rng(seq);
}

inline real rand_uniform(Rng& rng, real lo, real hi) {
    return std::uniform_real_distribution<real>(lo, hi)(rng);
}

inline int rand_int(Rng& rng, int lo, int hi) {  // inclusive bounds
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline real rand_normal(Rng& rng, real mean = 0.0, real sigma = 1.0) {
    return std::normal_distribution<real>(mean, sigma)(rng);
}

inline void fill_normal(Tensor& t, Rng& rng, real mean = 0.0, real sigma = 1.0) {
    std::normal_distribution<real> d(mean, sigma);
    for (int64_t i = 0; i < t.size(); ++i) t[i] = d(rng);
}

inline void fill_uniform(Tensor& t, Rng& rng, real lo, real hi) {
    std::uniform_real_distribution<real> d(lo, hi);
    for (int64_t i = 0; i < t.size(); ++i) t[i] = d(rng);
}

}  // namespace artinp
