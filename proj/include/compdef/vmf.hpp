#pragma once

#include "compdef/common.hpp"

namespace compdef {

constexpr double kSigmaMaxDefault = 1e4;

// log I_nu(x) for nu >= 0, x >= 0, computed in the log domain.
// Series summation with log-sum-exp for moderate x, large-argument
// asymptotic expansion beyond; continuous across the switch.
double log_bessel_i(double nu, double x);

// log Z(sigma) for the vMF density exp(sigma * mu^T f) / Z on S^{D-1}:
//   log Z = (D/2) log(2 pi) + log I_{D/2-1}(sigma) - (D/2-1) log sigma
// with the sigma -> 0 limit (sphere surface area) handled analytically.
double log_normalizer(double sigma, int D);

struct VmfComponent {
    std::vector<double> mu;  // unit vector
    double sigma = 0.0;
};

struct VmfDictionary {
    std::vector<VmfComponent> components;
    int dim = 0;

    int size() const { return static_cast<int>(components.size()); }
    void validate() const;
};

// sigma * mu^T f - log Z(sigma, D). f must be unit norm (1e-6).
double vmf_log_density(const std::vector<double>& f, const VmfComponent& comp);

// Banerjee moment estimator from the mean resultant length, clamped to
// [0, sigma_max].
double estimate_kappa(const std::vector<std::vector<double>>& vectors,
                      const std::vector<double>& mu, double sigma_max = kSigmaMaxDefault);

struct DictionaryOptions {
    int max_iters = 50;
    bool shared_sigma = false;   // one sigma for all components
    double sigma_max = kSigmaMaxDefault;
};

struct DictionaryResult {
    VmfDictionary dictionary;
    std::vector<int> assignment;        // per input vector
    std::vector<double> objective_trace;  // sum of cosine similarities, non-decreasing
};

// Spherical k-means (cosine similarity) with k-means++-style seeding and
// per-cluster kappa estimation. Deterministic per seed.
DictionaryResult learn_dictionary(const std::vector<std::vector<double>>& vectors, int K,
                                  std::uint64_t seed, const DictionaryOptions& opts = {});

// Wood's rejection sampler; used by oracles and synthetic planting.
std::vector<double> sample_vmf(const std::vector<double>& mu, double kappa, Rng& rng);

// Uniform direction on S^{D-1}.
std::vector<double> sample_sphere(int D, Rng& rng);

double dot(const std::vector<double>& a, const std::vector<double>& b);
void normalize_unit(std::vector<double>& v);  // throws on zero norm

}  // namespace compdef
