#include "compdef/comphead.hpp"

namespace compdef {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_simplex(const double* a, int K) {
    double s = 0.0;
    for (int k = 0; k < K; ++k) {
        if (a[k] < 0.0) throw std::invalid_argument("simplex: negative coefficient");
        s += a[k];
    }
    if (std::abs(s - 1.0) > 1e-8) throw std::invalid_argument("simplex: does not sum to 1");
}

// log sum_k alpha_k exp(logdens_k) without materializing intermediate logs
double mix_lse(const double* alpha, const double* logdens, int K) {
    double m = kNegInf;
    for (int k = 0; k < K; ++k)
        if (alpha[k] > 0.0 && logdens[k] > m) m = logdens[k];
    if (!std::isfinite(m)) return kNegInf;
    double s = 0.0;
    for (int k = 0; k < K; ++k)
        if (alpha[k] > 0.0) s += alpha[k] * std::exp(logdens[k] - m);
    return m + std::log(s);
}

}  // namespace

void MixtureCoefficients::validate() const {
    if (height < 1 || width < 1 || n_components < 1)
        throw std::invalid_argument("mixture coefficients: bad shape");
    if (alpha.size() != static_cast<std::size_t>(height) * width * n_components)
        throw std::invalid_argument("mixture coefficients: buffer size mismatch");
    for (int pos = 0; pos < height * width; ++pos) check_simplex(row(pos), n_components);
}

void ClassModel::validate() const {
    if (mixtures.empty()) throw std::invalid_argument("class model: M must be >= 1");
    for (const auto& m : mixtures) {
        m.validate();
        if (m.height != mixtures[0].height || m.width != mixtures[0].width ||
            m.n_components != mixtures[0].n_components)
            throw std::invalid_argument("class model: inconsistent mixture shapes");
    }
}

void OccluderModel::validate() const {
    if (beta.empty()) throw std::invalid_argument("occluder model: empty");
    check_simplex(beta.data(), static_cast<int>(beta.size()));
}

double resolve_floor(const HeadOptions& opts, int D) {
    if (std::isnan(opts.background_floor)) return -log_normalizer(0.0, D);
    return opts.background_floor;
}

DensityTable compute_density_table(const FeatureMap& F, const VmfDictionary& dict) {
    if (F.depth != dict.dim) throw std::invalid_argument("density table: dimension mismatch");
    const int K = dict.size();
    DensityTable t;
    t.positions = F.positions();
    t.n_components = K;
    t.logdens.assign(static_cast<std::size_t>(t.positions) * K, kNegInf);
    t.valid.assign(F.valid.begin(), F.valid.end());
    std::vector<double> logz(K);
    for (int k = 0; k < K; ++k)
        logz[k] = log_normalizer(dict.components[k].sigma, dict.dim);
    for (int pos = 0; pos < t.positions; ++pos) {
        if (!t.valid[pos]) continue;
        const double* f = &F.data[static_cast<std::size_t>(pos) * F.depth];
        double* out = &t.logdens[static_cast<std::size_t>(pos) * K];
        for (int k = 0; k < K; ++k) {
            const auto& c = dict.components[k];
            double d = 0.0;
            for (int j = 0; j < F.depth; ++j) d += f[j] * c.mu[j];
            out[k] = c.sigma * d - logz[k];
        }
    }
    return t;
}

double position_log_likelihood(const std::vector<double>& f, const std::vector<double>& alpha,
                               const VmfDictionary& dict) {
    if (static_cast<int>(alpha.size()) != dict.size())
        throw std::invalid_argument("position_log_likelihood: K mismatch");
    check_simplex(alpha.data(), static_cast<int>(alpha.size()));
    std::vector<double> logdens(dict.size());
    for (int k = 0; k < dict.size(); ++k) logdens[k] = vmf_log_density(f, dict.components[k]);
    return mix_lse(alpha.data(), logdens.data(), dict.size());
}

static double mixture_ll_from_table(const DensityTable& t, const MixtureCoefficients& theta,
                                    double floor) {
    double total = 0.0;
    for (int pos = 0; pos < t.positions; ++pos) {
        if (!t.valid[pos]) {
            total += floor;
            continue;
        }
        total += mix_lse(theta.row(pos),
                         &t.logdens[static_cast<std::size_t>(pos) * t.n_components],
                         t.n_components);
    }
    return total;
}

double mixture_log_likelihood(const FeatureMap& F, const MixtureCoefficients& theta,
                              const VmfDictionary& dict, const HeadOptions& opts) {
    if (F.height != theta.height || F.width != theta.width || dict.size() != theta.n_components)
        throw std::invalid_argument("mixture_log_likelihood: dimension mismatch");
    return mixture_ll_from_table(compute_density_table(F, dict), theta,
                                 resolve_floor(opts, dict.dim));
}

static ClassLogLikelihood class_ll_from_table(const DensityTable& t, const ClassModel& model,
                                              double floor) {
    ClassLogLikelihood best{kNegInf, 0};
    for (std::size_t m = 0; m < model.mixtures.size(); ++m) {
        double v = mixture_ll_from_table(t, model.mixtures[m], floor);
        if (v > best.value) {  // strict: ties break to the lowest m
            best.value = v;
            best.best_mixture = static_cast<int>(m);
        }
    }
    return best;
}

ClassLogLikelihood class_log_likelihood(const FeatureMap& F, const ClassModel& model,
                                        const VmfDictionary& dict, const HeadOptions& opts) {
    model.validate();
    const auto& m0 = model.mixtures[0];
    if (F.height != m0.height || F.width != m0.width || dict.size() != m0.n_components)
        throw std::invalid_argument("class_log_likelihood: dimension mismatch");
    return class_ll_from_table(compute_density_table(F, dict), model,
                               resolve_floor(opts, dict.dim));
}

// posterior over dictionary components at one position given weights
static void posterior_row(const double* alpha, const double* logdens, int K, double* out) {
    double m = kNegInf;
    for (int k = 0; k < K; ++k)
        if (alpha[k] > 0.0 && logdens[k] > m) m = logdens[k];
    double s = 0.0;
    for (int k = 0; k < K; ++k) {
        out[k] = alpha[k] > 0.0 && std::isfinite(m) ? alpha[k] * std::exp(logdens[k] - m) : 0.0;
        s += out[k];
    }
    if (s <= 0.0) {
        for (int k = 0; k < K; ++k) out[k] = 1.0 / K;
    } else {
        for (int k = 0; k < K; ++k) out[k] /= s;
    }
}

EmResult learn_class_model(const std::vector<FeatureMap>& maps, int class_id, int M,
                           const VmfDictionary& dict, int iters, std::uint64_t seed,
                           double smoothing, const HeadOptions& opts) {
    if (static_cast<int>(maps.size()) < M)
        throw std::invalid_argument("learn_class_model: fewer maps than M");
    if (M < 1 || iters < 1) throw std::invalid_argument("learn_class_model: bad M or iters");
    const int K = dict.size();
    const int H = maps[0].height, W = maps[0].width;
    const int P = H * W;
    const double floor = resolve_floor(opts, dict.dim);

    std::vector<DensityTable> tables;
    tables.reserve(maps.size());
    for (const auto& F : maps) {
        if (F.height != H || F.width != W)
            throw std::invalid_argument("learn_class_model: inconsistent map shapes");
        tables.push_back(compute_density_table(F, dict));
    }

    // initial grouping: spherical k-means over per-map mean component
    // posteriors (uniform weights), M clusters
    std::vector<int> assign(maps.size(), 0);
    if (M > 1) {
        std::vector<double> uniform(K, 1.0 / K);
        std::vector<std::vector<double>> descriptors;
        descriptors.reserve(maps.size());
        std::vector<double> post(K);
        for (const auto& t : tables) {
            std::vector<double> d(K, 0.0);
            for (int pos = 0; pos < P; ++pos) {
                if (!t.valid[pos]) continue;
                posterior_row(uniform.data(), &t.logdens[static_cast<std::size_t>(pos) * K], K,
                              post.data());
                for (int k = 0; k < K; ++k) d[k] += post[k];
            }
            double n = std::sqrt(dot(d, d));
            if (n < 1e-12) d.assign(K, 1.0 / std::sqrt(double(K)));
            else
                for (double& v : d) v /= n;
            descriptors.push_back(std::move(d));
        }
        assign = learn_dictionary(descriptors, M, mix_seed(seed, 0xe31u)).assignment;
    }

    ClassModel model;
    model.class_id = class_id;
    model.mixtures.assign(M, MixtureCoefficients{H, W, K,
                                                 std::vector<double>(
                                                     static_cast<std::size_t>(P) * K, 1.0 / K)});

    EmResult res;
    std::vector<double> post(K);
    for (int iter = 0; iter < iters; ++iter) {
        // M-step: alpha per mixture from aggregated responsibilities of
        // the maps currently assigned to it (Dirichlet-smoothed)
        std::vector<std::vector<double>> counts(
            M, std::vector<double>(static_cast<std::size_t>(P) * K, 0.0));
        std::vector<int> members(M, 0);
        for (std::size_t i = 0; i < maps.size(); ++i) {
            int m = assign[i];
            members[m]++;
            const DensityTable& t = tables[i];
            for (int pos = 0; pos < P; ++pos) {
                if (!t.valid[pos]) continue;
                posterior_row(model.mixtures[m].row(pos),
                              &t.logdens[static_cast<std::size_t>(pos) * K], K, post.data());
                double* c = &counts[m][static_cast<std::size_t>(pos) * K];
                for (int k = 0; k < K; ++k) c[k] += post[k];
            }
        }
        for (int m = 0; m < M; ++m) {
            if (members[m] == 0) continue;  // keep previous coefficients
            for (int pos = 0; pos < P; ++pos) {
                double* a = model.mixtures[m].row(pos);
                const double* c = &counts[m][static_cast<std::size_t>(pos) * K];
                double s = 0.0;
                for (int k = 0; k < K; ++k) s += c[k] + smoothing;
                for (int k = 0; k < K; ++k) a[k] = (c[k] + smoothing) / s;
            }
        }
        // E-step: reassign maps to their best mixture, record traces
        double loglik = 0.0;
        bool changed = false;
        for (std::size_t i = 0; i < maps.size(); ++i) {
            auto best = class_ll_from_table(tables[i], model, floor);
            loglik += best.value;
            if (assign[i] != best.best_mixture) {
                assign[i] = best.best_mixture;
                changed = true;
            }
        }
        // MAP objective adds the Dirichlet smoothing prior over alpha
        double prior = 0.0;
        for (int m = 0; m < M; ++m)
            for (int pos = 0; pos < P; ++pos) {
                const double* a = model.mixtures[m].row(pos);
                for (int k = 0; k < K; ++k) prior += smoothing * std::log(std::max(a[k], 1e-300));
            }
        res.loglik_trace.push_back(loglik);
        res.objective_trace.push_back(loglik + prior);
        if (!changed && iter > 0 &&
            std::abs(res.objective_trace[iter] - res.objective_trace[iter - 1]) <
                1e-12 * std::abs(res.objective_trace[iter]))
            break;
    }
    model.validate();
    res.model = std::move(model);
    return res;
}

OccluderModel learn_occluder_model(const std::vector<FeatureMap>& background,
                                   const VmfDictionary& dict, double smoothing) {
    if (background.empty()) throw std::invalid_argument("learn_occluder_model: empty corpus");
    const int K = dict.size();
    std::vector<double> counts(K, 0.0), post(K);
    std::vector<double> uniform(K, 1.0 / K);
    for (const auto& F : background) {
        DensityTable t = compute_density_table(F, dict);
        for (int pos = 0; pos < t.positions; ++pos) {
            if (!t.valid[pos]) continue;
            posterior_row(uniform.data(), &t.logdens[static_cast<std::size_t>(pos) * K], K,
                          post.data());
            for (int k = 0; k < K; ++k) counts[k] += post[k];
        }
    }
    OccluderModel occ;
    occ.beta.resize(K);
    double s = 0.0;
    for (int k = 0; k < K; ++k) s += counts[k] + smoothing;
    for (int k = 0; k < K; ++k) occ.beta[k] = (counts[k] + smoothing) / s;
    occ.validate();
    return occ;
}

static OccludedLogLikelihood occluded_ll_from_table(const DensityTable& t,
                                                    const MixtureCoefficients& theta,
                                                    const OccluderModel& occluder, double rho,
                                                    double floor) {
    OccludedLogLikelihood res;
    res.map.height = theta.height;
    res.map.width = theta.width;
    res.map.occluded.assign(t.positions, 0);
    res.map.score.assign(t.positions, kNegInf);
    res.value = 0.0;
    const int K = t.n_components;
    for (int pos = 0; pos < t.positions; ++pos) {
        double obj, occ;
        if (!t.valid[pos]) {
            obj = floor;
            occ = floor + rho;
        } else {
            const double* ld = &t.logdens[static_cast<std::size_t>(pos) * K];
            obj = mix_lse(theta.row(pos), ld, K);
            occ = mix_lse(occluder.beta.data(), ld, K) + rho;
        }
        if (occ > obj) {
            res.map.occluded[pos] = 1;
            res.map.score[pos] = occ;
            res.value += occ;
        } else {
            res.value += obj;
        }
    }
    return res;
}

OccludedLogLikelihood occluded_log_likelihood(const FeatureMap& F,
                                              const MixtureCoefficients& theta,
                                              const OccluderModel& occluder,
                                              const VmfDictionary& dict,
                                              const HeadOptions& opts) {
    if (F.height != theta.height || F.width != theta.width || dict.size() != theta.n_components)
        throw std::invalid_argument("occluded_log_likelihood: dimension mismatch");
    occluder.validate();
    if (static_cast<int>(occluder.beta.size()) != dict.size())
        throw std::invalid_argument("occluded_log_likelihood: occluder K mismatch");
    return occluded_ll_from_table(compute_density_table(F, dict), theta, occluder, opts.rho,
                                  resolve_floor(opts, dict.dim));
}

OcclusionMap occlusion_score_map(const FeatureMap& F, const ClassModel& model,
                                 const OccluderModel& occluder, const VmfDictionary& dict,
                                 const HeadOptions& opts) {
    model.validate();
    const auto& m0 = model.mixtures[0];
    if (F.height != m0.height || F.width != m0.width || dict.size() != m0.n_components)
        throw std::invalid_argument("occlusion_score_map: dimension mismatch");
    DensityTable t = compute_density_table(F, dict);
    const double floor = resolve_floor(opts, dict.dim);
    // the occluder participates in picking m* the same way classify does
    int best_m = 0;
    double best_v = kNegInf;
    for (std::size_t m = 0; m < model.mixtures.size(); ++m) {
        double v = occluded_ll_from_table(t, model.mixtures[m], occluder, opts.rho, floor).value;
        if (v > best_v) {
            best_v = v;
            best_m = static_cast<int>(m);
        }
    }
    const MixtureCoefficients& theta = model.mixtures[best_m];
    OcclusionMap map;
    map.height = F.height;
    map.width = F.width;
    map.occluded.assign(t.positions, 0);
    map.score.assign(t.positions, 0.0);
    const int K = t.n_components;
    for (int pos = 0; pos < t.positions; ++pos) {
        double obj, occ;
        if (!t.valid[pos]) {
            obj = floor;
            occ = floor + opts.rho;
        } else {
            const double* ld = &t.logdens[static_cast<std::size_t>(pos) * K];
            obj = mix_lse(theta.row(pos), ld, K);
            occ = mix_lse(occluder.beta.data(), ld, K) + opts.rho;
        }
        map.score[pos] = occ - obj;  // log-odds of occlusion
        map.occluded[pos] = occ > obj ? 1 : 0;
    }
    return map;
}

Classification classify(const FeatureMap& F, const std::vector<ClassModel>& models,
                        const OccluderModel& occluder, const VmfDictionary& dict,
                        const HeadOptions& opts) {
    if (models.empty()) throw std::invalid_argument("classify: no class models");
    DensityTable t = compute_density_table(F, dict);
    const double floor = resolve_floor(opts, dict.dim);
    Classification res;
    res.values.reserve(models.size());
    res.label = 0;
    double best = kNegInf;
    for (std::size_t y = 0; y < models.size(); ++y) {
        double v = kNegInf;
        for (const auto& theta : models[y].mixtures)
            v = std::max(v, occluded_ll_from_table(t, theta, occluder, opts.rho, floor).value);
        res.values.push_back(v);
        if (v > best) {  // ties to the lowest label
            best = v;
            res.label = static_cast<int>(y);
        }
    }
    return res;
}

std::vector<double> paint_scores(const OcclusionMap& map, const BackboneParams& params,
                                 int img_h, int img_w) {
    std::vector<double> out(static_cast<std::size_t>(img_h) * img_w, kNegInf);
    for (int pr = 0; pr < map.height; ++pr)
        for (int pc = 0; pc < map.width; ++pc) {
            double s = map.score[static_cast<std::size_t>(pr) * map.width + pc];
            RfBox rf = receptive_field(params, pr, pc);
            for (int r = rf.r0; r <= std::min(rf.r1, img_h - 1); ++r)
                for (int c = rf.c0; c <= std::min(rf.c1, img_w - 1); ++c) {
                    double& v = out[static_cast<std::size_t>(r) * img_w + c];
                    v = std::max(v, s);
                }
        }
    return out;
}

}  // namespace compdef
