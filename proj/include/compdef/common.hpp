#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace compdef {

// All randomness in the library flows through explicitly seeded engines.
using Rng = std::mt19937_64;

// SplitMix64 step, used to derive independent stream seeds from a base
// seed plus salt values (experiment id, image id, ...).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline double log_sum_exp(const double* vals, std::size_t n) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, vals[i]);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(vals[i] - m);
    return m + std::log(s);
}

inline double log_sum_exp(const std::vector<double>& vals) {
    return log_sum_exp(vals.data(), vals.size());
}

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// Number of worker threads for embarrassingly parallel loops.
// Controlled by COMPDEF_THREADS; defaults to the hardware count.
int worker_threads();

// Deterministic parallel map over [0, n): results identical to the
// sequential order regardless of thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace compdef
