#pragma once

#include <unistd.h>

#include <filesystem>
#include <fstream>

#include "compdef/eval.hpp"
#include "compdef/vmf.hpp"

namespace th {

inline std::string temp_dir(const std::string& tag) {
    auto p = std::filesystem::temp_directory_path() /
             ("compdef_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p.string();
}

inline double angle_deg(const std::vector<double>& a, const std::vector<double>& b) {
    double c = std::clamp(compdef::dot(a, b), -1.0, 1.0);
    return std::acos(c) * 180.0 / 3.14159265358979323846;
}

// greedy one-to-one matching of estimated to planted directions by cosine
inline std::vector<int> match_components(const std::vector<std::vector<double>>& est,
                                         const std::vector<std::vector<double>>& truth) {
    std::vector<int> match(est.size(), -1);
    std::vector<bool> used(truth.size(), false);
    for (std::size_t pass = 0; pass < est.size(); ++pass) {
        double best = -2.0;
        int bi = -1, bj = -1;
        for (std::size_t i = 0; i < est.size(); ++i) {
            if (match[i] >= 0) continue;
            for (std::size_t j = 0; j < truth.size(); ++j) {
                if (used[j]) continue;
                double c = compdef::dot(est[i], truth[j]);
                if (c > best) { best = c; bi = static_cast<int>(i); bj = static_cast<int>(j); }
            }
        }
        match[bi] = bj;
        used[bj] = true;
    }
    return match;
}

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// small random unit-vector helper
inline std::vector<double> unit_vec(int d, compdef::Rng& rng) {
    return compdef::sample_sphere(d, rng);
}

}  // namespace th
