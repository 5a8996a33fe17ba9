#pragma once

#include "compdef/backbone.hpp"
#include "compdef/vmf.hpp"

namespace compdef {

// Per-position simplex of vMF coefficients for one mixture component.
struct MixtureCoefficients {
    int height = 0, width = 0, n_components = 0;
    std::vector<double> alpha;  // h * w * K, simplex at every position

    const double* row(int pos) const {
        return &alpha[static_cast<std::size_t>(pos) * n_components];
    }
    double* row(int pos) { return &alpha[static_cast<std::size_t>(pos) * n_components]; }
    void validate() const;
};

struct ClassModel {
    int class_id = 0;
    std::vector<MixtureCoefficients> mixtures;  // M components, shared shape
    void validate() const;
};

// Position-independent coefficient simplex for occluders/background.
struct OccluderModel {
    std::vector<double> beta;
    void validate() const;
};

struct OcclusionMap {
    int height = 0, width = 0;
    std::vector<std::uint8_t> occluded;  // z flags
    std::vector<double> score;
};

struct HeadOptions {
    // log-prior offset on the occluder branch; -inf disables the occluder.
    double rho = 0.0;
    // log-likelihood contributed by invalid (zero-norm) feature positions;
    // NaN means "uniform density on the sphere", resolved per dictionary.
    double background_floor = std::numeric_limits<double>::quiet_NaN();
};

double resolve_floor(const HeadOptions& opts, int D);

// Per-position vMF log densities, computed once per feature map and
// shared by every mixture / class / occluder evaluation.
struct DensityTable {
    int positions = 0, n_components = 0;
    std::vector<double> logdens;       // positions * K
    std::vector<std::uint8_t> valid;   // positions
};
DensityTable compute_density_table(const FeatureMap& F, const VmfDictionary& dict);

// log sum_k alpha_k p(f | lambda_k); throws on simplex violation.
double position_log_likelihood(const std::vector<double>& f, const std::vector<double>& alpha,
                               const VmfDictionary& dict);

double mixture_log_likelihood(const FeatureMap& F, const MixtureCoefficients& theta,
                              const VmfDictionary& dict, const HeadOptions& opts = {});

// max over mixtures (hard assignment), ties to the lowest index.
struct ClassLogLikelihood {
    double value;
    int best_mixture;
};
ClassLogLikelihood class_log_likelihood(const FeatureMap& F, const ClassModel& model,
                                        const VmfDictionary& dict, const HeadOptions& opts = {});

struct EmResult {
    ClassModel model;
    std::vector<double> loglik_trace;     // total data log-likelihood per iteration
    std::vector<double> objective_trace;  // smoothed (MAP) objective, non-decreasing
};
EmResult learn_class_model(const std::vector<FeatureMap>& maps, int class_id, int M,
                           const VmfDictionary& dict, int iters, std::uint64_t seed,
                           double smoothing = 1e-3, const HeadOptions& opts = {});

OccluderModel learn_occluder_model(const std::vector<FeatureMap>& background,
                                   const VmfDictionary& dict, double smoothing = 1e-3);

struct OccludedLogLikelihood {
    double value;
    OcclusionMap map;  // score = occluder branch value where occluded, -inf otherwise
};
OccludedLogLikelihood occluded_log_likelihood(const FeatureMap& F,
                                              const MixtureCoefficients& theta,
                                              const OccluderModel& occluder,
                                              const VmfDictionary& dict,
                                              const HeadOptions& opts = {});

// Log-odds of occlusion (occ - obj) for the winning mixture; thresholding
// at 0 reproduces the z flags.
OcclusionMap occlusion_score_map(const FeatureMap& F, const ClassModel& model,
                                 const OccluderModel& occluder, const VmfDictionary& dict,
                                 const HeadOptions& opts = {});

struct Classification {
    int label;
    std::vector<double> values;  // per-class occluded log-likelihood
};
Classification classify(const FeatureMap& F, const std::vector<ClassModel>& models,
                        const OccluderModel& occluder, const VmfDictionary& dict,
                        const HeadOptions& opts = {});

// Receptive-field painting of a score map onto the image lattice
// (per-pixel max over covering positions).
std::vector<double> paint_scores(const OcclusionMap& map, const BackboneParams& params,
                                 int img_h, int img_w);

}  // namespace compdef
