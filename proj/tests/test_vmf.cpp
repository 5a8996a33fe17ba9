#include "doctest.h"

#include "compdef/vmf.hpp"
#include "helpers.hpp"

using namespace compdef;

namespace {
const double kPi = 3.14159265358979323846;

// closed-form 3-D normalizer: Z = 4*pi*sinh(k)/k
double log_z3(double kappa) { return std::log(4.0 * kPi * std::sinh(kappa) / kappa); }
}  // namespace

TEST_CASE("log_bessel_i agrees with small-order references") {
    // I_0(1) = 1.2660658778, I_1(2) = 1.5906368546 (standard tables)
    CHECK(log_bessel_i(0, 1.0) == doctest::Approx(std::log(1.2660658778)).epsilon(1e-9));
    CHECK(log_bessel_i(1, 2.0) == doctest::Approx(std::log(1.5906368546)).epsilon(1e-9));
    // I_{1/2}(x) = sqrt(2/(pi x)) sinh(x)
    for (double x : {0.5, 3.0, 40.0, 300.0}) {
        // log(sinh x) = x + log(1 - e^{-2x}) - log 2
        double ref = 0.5 * std::log(2.0 / (kPi * x)) + x + std::log1p(-std::exp(-2.0 * x)) -
                     std::log(2.0);
        CHECK(log_bessel_i(0.5, x) == doctest::Approx(ref).epsilon(1e-9));
    }
}

TEST_CASE("log_bessel_i is continuous across the series/asymptotic switch") {
    for (double nu : {0.0, 1.0, 7.0, 15.0}) {
        double x = std::max(500.0, 4.0 * nu * nu + 50.0);
        double below = log_bessel_i(nu, x - 1e-3);
        double above = log_bessel_i(nu, x + 1e-3);
        // d/dx log I_nu(x) -> 1 for large x, so the jump across the gap should
        // be the gap itself up to higher-order terms; a branch mismatch would
        // show up as a much larger discrepancy
        CHECK(std::abs((above - below) - 2e-3) < 1e-5);
        CHECK(above > below);
    }
}

TEST_CASE("log_normalizer: sigma->0 limit and D=3 closed form") {
    CHECK(log_normalizer(0.0, 3) == doctest::Approx(std::log(4.0 * kPi)).epsilon(1e-12));
    CHECK(log_normalizer(2.0, 3) == doctest::Approx(std::log(4.0 * kPi * std::sinh(2.0) / 2.0))
                                        .epsilon(1e-8));
    CHECK(log_normalizer(2.0, 3) == doctest::Approx(3.126244).epsilon(1e-5));
    for (double s : {0.25, 1.0, 5.0, 30.0, 200.0})
        CHECK(log_normalizer(s, 3) == doctest::Approx(log_z3(s)).epsilon(1e-8));
}

TEST_CASE("vmf_log_density matches the 3-D closed form") {
    VmfComponent c;
    c.mu = {0.0, 0.0, 1.0};
    SUBCASE("sigma=0 is uniform on the sphere") {
        c.sigma = 0.0;
        Rng rng(4);
        for (int i = 0; i < 10; ++i) {
            auto f = sample_sphere(3, rng);
            CHECK(vmf_log_density(f, c) == doctest::Approx(-std::log(4.0 * kPi)).epsilon(1e-10));
            CHECK(vmf_log_density(f, c) == doctest::Approx(-2.5310).epsilon(1e-4));
        }
    }
    SUBCASE("sigma=1 at the mode") {
        c.sigma = 1.0;
        CHECK(vmf_log_density(c.mu, c) == doctest::Approx(1.0 - log_z3(1.0)).epsilon(1e-8));
        CHECK(vmf_log_density(c.mu, c) == doctest::Approx(-1.6925).epsilon(1e-4));
    }
    SUBCASE("orthogonal density decreases with concentration") {
        std::vector<double> f = {1.0, 0.0, 0.0};
        c.sigma = 5.0;
        double d5 = vmf_log_density(f, c);
        c.sigma = 10.0;
        double d10 = vmf_log_density(f, c);
        CHECK(d10 < d5);
        CHECK(d5 == doctest::Approx(-log_z3(5.0)).epsilon(1e-8));
        CHECK(d10 == doctest::Approx(-log_z3(10.0)).epsilon(1e-8));
    }
    SUBCASE("non-unit input is rejected") {
        c.sigma = 1.0;
        CHECK_THROWS_AS(vmf_log_density({0.5, 0.0, 0.0}, c), std::invalid_argument);
    }
}

TEST_CASE("density integrates to 1 on the 2-sphere (Monte Carlo)") {
    Rng rng(99);
    VmfComponent c;
    c.mu = {0.0, 0.0, 1.0};
    const int n = 200000;
    for (double sigma : {0.5, 2.0, 10.0}) {
        c.sigma = sigma;
        double sum = 0.0;
        for (int i = 0; i < n; ++i) sum += std::exp(vmf_log_density(sample_sphere(3, rng), c));
        double integral = sum / n * 4.0 * kPi;  // area of S^2
        CHECK(integral == doctest::Approx(1.0).epsilon(0.02));
    }
}

TEST_CASE("kappa estimation") {
    SUBCASE("identical vectors clamp to sigma_max") {
        std::vector<std::vector<double>> v(20, std::vector<double>{1.0, 0.0, 0.0});
        CHECK(estimate_kappa(v, {1.0, 0.0, 0.0}) == doctest::Approx(kSigmaMaxDefault));
    }
    SUBCASE("zero resultant gives zero") {
        std::vector<std::vector<double>> v = {{1.0, 0.0, 0.0}, {-1.0, 0.0, 0.0}};
        CHECK(estimate_kappa(v, {1.0, 0.0, 0.0}) == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("recovers kappa=30 in D=16 within 20%") {
        Rng rng(7);
        std::vector<double> mu = sample_sphere(16, rng);
        std::vector<std::vector<double>> v;
        for (int i = 0; i < 10000; ++i) v.push_back(sample_vmf(mu, 30.0, rng));
        // estimate the mean direction from the sample itself
        std::vector<double> mean(16, 0.0);
        for (const auto& x : v)
            for (int d = 0; d < 16; ++d) mean[d] += x[d];
        normalize_unit(mean);
        double est = estimate_kappa(v, mean);
        CHECK(est > 0.8 * 30.0);
        CHECK(est < 1.2 * 30.0);
        CHECK(th::angle_deg(mean, mu) < 5.0);
    }
}

TEST_CASE("spherical k-means dictionary learning") {
    SUBCASE("single degenerate cluster") {
        Rng rng(1);
        auto v = sample_sphere(8, rng);
        std::vector<std::vector<double>> data(50, v);
        auto res = learn_dictionary(data, 1, 13);
        REQUIRE(res.dictionary.size() == 1);
        CHECK(th::angle_deg(res.dictionary.components[0].mu, v) < 1e-4);
        CHECK(res.dictionary.components[0].sigma == doctest::Approx(kSigmaMaxDefault));
    }
    SUBCASE("two antipodal tight bundles recovered within 5 degrees") {
        Rng rng(2);
        std::vector<double> m1 = sample_sphere(6, rng);
        std::vector<double> m2(m1);
        for (auto& x : m2) x = -x;
        std::vector<std::vector<double>> data;
        for (int i = 0; i < 400; ++i) data.push_back(sample_vmf(i % 2 ? m1 : m2, 100.0, rng));
        auto res = learn_dictionary(data, 2, 5);
        std::vector<std::vector<double>> est;
        for (const auto& c : res.dictionary.components) est.push_back(c.mu);
        auto match = th::match_components(est, {m1, m2});
        std::vector<std::vector<double>> truth = {m1, m2};
        for (std::size_t i = 0; i < est.size(); ++i)
            CHECK(th::angle_deg(est[i], truth[match[i]]) < 5.0);
    }
    SUBCASE("objective trace is non-decreasing") {
        Rng rng(3);
        std::vector<std::vector<double>> data;
        for (int i = 0; i < 300; ++i) data.push_back(sample_sphere(10, rng));
        auto res = learn_dictionary(data, 6, 17);
        for (std::size_t i = 1; i < res.objective_trace.size(); ++i)
            CHECK(res.objective_trace[i] >= res.objective_trace[i - 1] - 1e-9);
    }
    SUBCASE("deterministic per seed") {
        Rng rng(4);
        std::vector<std::vector<double>> data;
        for (int i = 0; i < 200; ++i) data.push_back(sample_sphere(5, rng));
        auto a = learn_dictionary(data, 4, 21);
        auto b = learn_dictionary(data, 4, 21);
        for (int k = 0; k < 4; ++k) {
            CHECK(a.dictionary.components[k].mu == b.dictionary.components[k].mu);
            CHECK(a.dictionary.components[k].sigma == b.dictionary.components[k].sigma);
        }
        CHECK(a.assignment == b.assignment);
    }
    SUBCASE("shared sigma pools the estimate") {
        Rng rng(5);
        std::vector<double> m1 = sample_sphere(6, rng), m2 = sample_sphere(6, rng);
        std::vector<std::vector<double>> data;
        for (int i = 0; i < 300; ++i) data.push_back(sample_vmf(i % 2 ? m1 : m2, 40.0, rng));
        DictionaryOptions opts;
        opts.shared_sigma = true;
        auto res = learn_dictionary(data, 2, 9, opts);
        CHECK(res.dictionary.components[0].sigma ==
              doctest::Approx(res.dictionary.components[1].sigma));
    }
}
