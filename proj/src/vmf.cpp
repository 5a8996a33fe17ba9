#include "compdef/vmf.hpp"

namespace compdef {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void normalize_unit(std::vector<double>& v) {
    double n = std::sqrt(dot(v, v));
    if (n < 1e-300) throw std::invalid_argument("normalize_unit: zero vector");
    for (double& x : v) x /= n;
}

double log_bessel_i(double nu, double x) {
    if (nu < 0.0 || x < 0.0) throw std::invalid_argument("log_bessel_i: nu, x must be >= 0");
    if (x == 0.0) return nu == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();

    const double asym_switch = std::max(500.0, 4.0 * nu * nu + 50.0);
    if (x < asym_switch) {
        // I_nu(x) = sum_m (x/2)^{2m+nu} / (m! Gamma(m+nu+1)); log-domain sum.
        const double lx2 = std::log(x / 2.0);
        double max_t = -std::numeric_limits<double>::infinity();
        std::vector<double> terms;
        // term peak near m* = (-(nu+1) + sqrt((nu+1)^2 + x^2)) / 2
        double mstar = 0.5 * (-(nu + 1.0) + std::sqrt((nu + 1.0) * (nu + 1.0) + x * x));
        int m_hi = static_cast<int>(mstar + 12.0 * std::sqrt(mstar + 4.0) + 24.0);
        terms.reserve(m_hi + 1);
        for (int m = 0; m <= m_hi; ++m) {
            double t = (2.0 * m + nu) * lx2 - std::lgamma(m + 1.0) - std::lgamma(m + nu + 1.0);
            terms.push_back(t);
            max_t = std::max(max_t, t);
            if (m > mstar && t < max_t - 45.0) break;
        }
        return log_sum_exp(terms);
    }
    // I_nu(x) ~ e^x / sqrt(2 pi x) * sum_k (-1)^k a_k(nu) / x^k
    double sum = 1.0, term = 1.0;
    const double mu4 = 4.0 * nu * nu;
    for (int k = 1; k <= 24; ++k) {
        double num = mu4 - (2.0 * k - 1.0) * (2.0 * k - 1.0);
        double next = term * -num / (8.0 * k * x);
        if (std::abs(next) >= std::abs(term)) break;  // divergence onset
        term = next;
        sum += term;
        if (std::abs(term) < 1e-17 * std::abs(sum)) break;
    }
    return x - 0.5 * std::log(2.0 * M_PI * x) + std::log(sum);
}

double log_normalizer(double sigma, int D) {
    if (D < 2) throw std::invalid_argument("log_normalizer: D must be >= 2");
    if (sigma < 0.0) throw std::invalid_argument("log_normalizer: sigma must be >= 0");
    const double nu = D / 2.0 - 1.0;
    const double half_d = D / 2.0;
    if (sigma < 1e-10) {
        // limit: Z = surface area of S^{D-1} = 2 pi^{D/2} / Gamma(D/2)
        return half_d * std::log(2.0 * M_PI) - nu * std::log(2.0) - std::lgamma(nu + 1.0);
    }
    return half_d * std::log(2.0 * M_PI) + log_bessel_i(nu, sigma) - nu * std::log(sigma);
}

void VmfDictionary::validate() const {
    if (components.empty()) throw std::invalid_argument("dictionary: K must be >= 1");
    for (const auto& c : components) {
        if (static_cast<int>(c.mu.size()) != dim)
            throw std::invalid_argument("dictionary: dimension mismatch");
        double n = std::sqrt(dot(c.mu, c.mu));
        if (std::abs(n - 1.0) > 1e-8)
            throw std::invalid_argument("dictionary: mu not unit norm");
        if (c.sigma < 0.0) throw std::invalid_argument("dictionary: negative sigma");
    }
}

double vmf_log_density(const std::vector<double>& f, const VmfComponent& comp) {
    double fn = std::sqrt(dot(f, f));
    if (std::abs(fn - 1.0) > 1e-6)
        throw std::invalid_argument("vmf_log_density: input not unit norm");
    return comp.sigma * dot(f, comp.mu) - log_normalizer(comp.sigma, static_cast<int>(f.size()));
}

static double kappa_from_rbar(double rbar, int D, double sigma_max) {
    if (rbar <= 0.0) return 0.0;
    if (rbar >= 1.0 - 1e-12) return sigma_max;
    double kappa = rbar * (D - rbar * rbar) / (1.0 - rbar * rbar);
    return std::clamp(kappa, 0.0, sigma_max);
}

double estimate_kappa(const std::vector<std::vector<double>>& vectors,
                      const std::vector<double>& mu, double sigma_max) {
    if (vectors.empty()) throw std::invalid_argument("estimate_kappa: empty cluster");
    const int D = static_cast<int>(mu.size());
    std::vector<double> mean(D, 0.0);
    for (const auto& v : vectors)
        for (int d = 0; d < D; ++d) mean[d] += v[d];
    double rbar = 0.0;
    for (int d = 0; d < D; ++d) rbar += (mean[d] / vectors.size()) * (mean[d] / vectors.size());
    rbar = std::sqrt(rbar);
    return kappa_from_rbar(rbar, D, sigma_max);
}

DictionaryResult learn_dictionary(const std::vector<std::vector<double>>& vectors, int K,
                                  std::uint64_t seed, const DictionaryOptions& opts) {
    const std::size_t N = vectors.size();
    if (K < 1) throw std::invalid_argument("learn_dictionary: K must be >= 1");
    if (N < static_cast<std::size_t>(K))
        throw std::invalid_argument("learn_dictionary: fewer vectors than K");
    const int D = static_cast<int>(vectors[0].size());

    Rng rng(mix_seed(seed, 0xd1c7u));
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    // k-means++: seed with cosine distance 1 - mu.v
    std::vector<std::vector<double>> centers;
    centers.push_back(vectors[static_cast<std::size_t>(uni(rng) * N) % N]);
    std::vector<double> d2(N);
    while (static_cast<int>(centers.size()) < K) {
        double total = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            double best = -1.0;
            for (const auto& c : centers) best = std::max(best, dot(vectors[i], c));
            d2[i] = std::max(0.0, 1.0 - best);
            total += d2[i];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            double r = uni(rng) * total, acc = 0.0;
            for (std::size_t i = 0; i < N; ++i) {
                acc += d2[i];
                if (acc >= r) { pick = i; break; }
            }
        } else {
            pick = static_cast<std::size_t>(uni(rng) * N) % N;
        }
        centers.push_back(vectors[pick]);
    }

    std::vector<int> assign(N, -1);
    std::vector<double> sims(N, 0.0);
    DictionaryResult res;
    for (int iter = 0; iter < opts.max_iters; ++iter) {
        bool changed = false;
        double objective = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            int best_k = 0;
            double best = -2.0;
            for (int k = 0; k < K; ++k) {
                double s = dot(vectors[i], centers[k]);
                if (s > best) { best = s; best_k = k; }
            }
            if (assign[i] != best_k) { assign[i] = best_k; changed = true; }
            sims[i] = best;
            objective += best;
        }
        res.objective_trace.push_back(objective);
        if (!changed && iter > 0) break;

        std::vector<std::vector<double>> sums(K, std::vector<double>(D, 0.0));
        std::vector<int> counts(K, 0);
        for (std::size_t i = 0; i < N; ++i) {
            for (int d = 0; d < D; ++d) sums[assign[i]][d] += vectors[i][d];
            counts[assign[i]]++;
        }
        for (int k = 0; k < K; ++k) {
            if (counts[k] == 0) {
                // reseed from the point farthest from its centroid
                std::size_t worst = 0;
                for (std::size_t i = 1; i < N; ++i)
                    if (sims[i] < sims[worst]) worst = i;
                centers[k] = vectors[worst];
                sims[worst] = 1.0;  // avoid picking it again for another empty cluster
                continue;
            }
            double n = 0.0;
            for (int d = 0; d < D; ++d) n += sums[k][d] * sums[k][d];
            n = std::sqrt(n);
            if (n < 1e-300) continue;  // keep previous center
            for (int d = 0; d < D; ++d) centers[k][d] = sums[k][d] / n;
        }
    }

    res.dictionary.dim = D;
    res.dictionary.components.resize(K);
    std::vector<std::vector<std::vector<double>>> members(K);
    for (std::size_t i = 0; i < N; ++i) members[assign[i]].push_back(vectors[i]);
    if (opts.shared_sigma) {
        double rbar = 0.0;
        for (std::size_t i = 0; i < N; ++i) rbar += dot(vectors[i], centers[assign[i]]);
        rbar = std::clamp(rbar / N, 0.0, 1.0);
        double sigma = kappa_from_rbar(rbar, D, opts.sigma_max);
        for (int k = 0; k < K; ++k)
            res.dictionary.components[k] = {centers[k], sigma};
    } else {
        for (int k = 0; k < K; ++k) {
            double sigma = members[k].empty()
                               ? 0.0
                               : estimate_kappa(members[k], centers[k], opts.sigma_max);
            res.dictionary.components[k] = {centers[k], sigma};
        }
    }
    res.assignment = std::move(assign);
    res.dictionary.validate();
    return res;
}

std::vector<double> sample_sphere(int D, Rng& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> v(D);
    for (;;) {
        for (int d = 0; d < D; ++d) v[d] = gauss(rng);
        double n = std::sqrt(dot(v, v));
        if (n > 1e-12) {
            for (double& x : v) x /= n;
            return v;
        }
    }
}

// Wood (1994) rejection sampler around the north pole, then a Householder
// reflection carries e1 to mu.
std::vector<double> sample_vmf(const std::vector<double>& mu, double kappa, Rng& rng) {
    const int D = static_cast<int>(mu.size());
    if (kappa <= 0.0) return sample_sphere(D, rng);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::gamma_distribution<double> gamma_half((D - 1.0) / 2.0, 1.0);

    const double b = (-2.0 * kappa + std::sqrt(4.0 * kappa * kappa + (D - 1.0) * (D - 1.0))) /
                     (D - 1.0);
    const double x0 = (1.0 - b) / (1.0 + b);
    const double c = kappa * x0 + (D - 1.0) * std::log(1.0 - x0 * x0);

    double w = 0.0;
    for (;;) {
        double g1 = gamma_half(rng), g2 = gamma_half(rng);
        double z = g1 / (g1 + g2);  // Beta((D-1)/2, (D-1)/2)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
        double u = uni(rng);
        if (kappa * w + (D - 1.0) * std::log(1.0 - x0 * w) - c >= std::log(u + 1e-300)) break;
    }

    std::vector<double> tangent;
    if (D > 1) {
        tangent = sample_sphere(D - 1, rng);
    }
    std::vector<double> v(D);
    v[0] = w;
    double s = std::sqrt(std::max(0.0, 1.0 - w * w));
    for (int d = 1; d < D; ++d) v[d] = s * tangent[d - 1];

    // Householder: reflect e1 onto mu
    std::vector<double> u(D);
    u[0] = 1.0 - mu[0];
    for (int d = 1; d < D; ++d) u[d] = -mu[d];
    double un = dot(u, u);
    if (un < 1e-24) return v;  // mu == e1
    double proj = 2.0 * dot(u, v) / un;
    for (int d = 0; d < D; ++d) v[d] -= proj * u[d];
    normalize_unit(v);
    return v;
}

}  // namespace compdef
