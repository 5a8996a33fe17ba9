#include "compdef/backbone.hpp"

#include <cstring>
#include <fstream>

#include "compdef/vmf.hpp"

namespace compdef {

void BackboneParams::validate() const {
    if (n_filters < 8) throw std::invalid_argument("backbone: C must be >= 8");
    if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("backbone: k must be odd");
    if (conv_stride < 1 || pool_window < 1 || pool_stride < 1)
        throw std::invalid_argument("backbone: strides must be >= 1");
    if (epsilon <= 0.0) throw std::invalid_argument("backbone: epsilon must be > 0");
    if (filters.size() != static_cast<std::size_t>(n_filters) * filter_size())
        throw std::invalid_argument("backbone: filter buffer size mismatch");
}

void feature_shape(const BackboneParams& p, int img_h, int img_w, int& out_h, int& out_w) {
    if (img_h < p.kernel || img_w < p.kernel)
        throw std::invalid_argument("backbone: image smaller than kernel");
    int conv_h = (img_h - p.kernel) / p.conv_stride + 1;
    int conv_w = (img_w - p.kernel) / p.conv_stride + 1;
    if (conv_h < p.pool_window || conv_w < p.pool_window)
        throw std::invalid_argument("backbone: conv output smaller than pool window");
    out_h = (conv_h - p.pool_window) / p.pool_stride + 1;
    out_w = (conv_w - p.pool_window) / p.pool_stride + 1;
    if (out_h < 2 || out_w < 2)
        throw std::invalid_argument("backbone: feature lattice smaller than 2x2");
}

RfBox receptive_field(const BackboneParams& p, int pr, int pc) {
    int conv_r0 = pr * p.pool_stride;
    int conv_c0 = pc * p.pool_stride;
    int conv_r1 = conv_r0 + p.pool_window - 1;
    int conv_c1 = conv_c0 + p.pool_window - 1;
    return {conv_r0 * p.conv_stride, conv_c0 * p.conv_stride,
            conv_r1 * p.conv_stride + p.kernel - 1, conv_c1 * p.conv_stride + p.kernel - 1};
}

BackboneTrace forward_backbone(const Image& image, const BackboneParams& params) {
    params.validate();
    const int C = params.n_filters, k = params.kernel, cs = params.conv_stride;
    int out_h, out_w;
    feature_shape(params, image.height, image.width, out_h, out_w);
    const int conv_h = (image.height - k) / cs + 1;
    const int conv_w = (image.width - k) / cs + 1;

    BackboneTrace tr;
    tr.conv_h = conv_h;
    tr.conv_w = conv_w;
    tr.conv.assign(static_cast<std::size_t>(conv_h) * conv_w * C, 0.0);

    // convolution, channel-last image layout keeps the inner loop contiguous
    for (int y = 0; y < conv_h; ++y)
        for (int x = 0; x < conv_w; ++x) {
            double* out = &tr.conv[(static_cast<std::size_t>(y) * conv_w + x) * C];
            for (int c = 0; c < C; ++c) {
                const double* w = &params.filters[c * params.filter_size()];
                double s = 0.0;
                for (int ky = 0; ky < k; ++ky) {
                    const float* row = &image.data[(static_cast<std::size_t>(y * cs + ky) *
                                                        image.width +
                                                    x * cs) * 3];
                    const double* wrow = &w[static_cast<std::size_t>(ky) * k * 3];
                    for (int j = 0; j < k * 3; ++j) s += wrow[j] * row[j];
                }
                out[c] = s;
            }
        }

    FeatureMap& fm = tr.features;
    fm.height = out_h;
    fm.width = out_w;
    fm.depth = C;
    fm.data.assign(static_cast<std::size_t>(out_h) * out_w * C, 0.0);
    fm.valid.assign(static_cast<std::size_t>(out_h) * out_w, 0);
    tr.prenorm.assign(static_cast<std::size_t>(out_h) * out_w, 0.0);
    tr.pool_argmax.assign(static_cast<std::size_t>(out_h) * out_w * C, -1);

    for (int pr = 0; pr < out_h; ++pr)
        for (int pc = 0; pc < out_w; ++pc) {
            std::size_t pos = static_cast<std::size_t>(pr) * out_w + pc;
            double* f = &fm.data[pos * C];
            int* amax = &tr.pool_argmax[pos * C];
            for (int c = 0; c < C; ++c) {
                double best = -std::numeric_limits<double>::infinity();
                int best_idx = -1;
                for (int wy = 0; wy < params.pool_window; ++wy)
                    for (int wx = 0; wx < params.pool_window; ++wx) {
                        int y = pr * params.pool_stride + wy;
                        int x = pc * params.pool_stride + wx;
                        int idx = y * conv_w + x;
                        double v = std::max(0.0, tr.conv[static_cast<std::size_t>(idx) * C + c]);
                        if (v > best) {  // strict: ties go to the lowest index
                            best = v;
                            best_idx = idx;
                        }
                    }
                f[c] = best;
                amax[c] = best_idx;
            }
            double n = 0.0;
            for (int c = 0; c < C; ++c) n += f[c] * f[c];
            n = std::sqrt(n);
            tr.prenorm[pos] = n;
            if (n < params.epsilon) {
                std::fill(f, f + C, 0.0);
                fm.valid[pos] = 0;
            } else {
                for (int c = 0; c < C; ++c) f[c] /= n;
                fm.valid[pos] = 1;
            }
        }
    return tr;
}

FeatureMap extract_features(const Image& image, const BackboneParams& params) {
    return forward_backbone(image, params).features;
}

std::vector<double> backbone_gradient(const Image& image, const BackboneParams& params,
                                      const BackboneTrace& trace,
                                      const std::vector<double>& upstream) {
    const FeatureMap& fm = trace.features;
    const int C = params.n_filters, k = params.kernel, cs = params.conv_stride;
    if (upstream.size() != fm.data.size())
        throw std::invalid_argument("backbone_gradient: upstream shape mismatch");

    std::vector<double> dconv(trace.conv.size(), 0.0);
    for (int pos = 0; pos < fm.positions(); ++pos) {
        if (!fm.valid[pos]) continue;  // invalid positions carry no gradient
        const double* f = &fm.data[static_cast<std::size_t>(pos) * C];
        const double* up = &upstream[static_cast<std::size_t>(pos) * C];
        const int* amax = &trace.pool_argmax[static_cast<std::size_t>(pos) * C];
        double n = trace.prenorm[pos];
        double fdotu = 0.0;
        for (int c = 0; c < C; ++c) fdotu += f[c] * up[c];
        for (int c = 0; c < C; ++c) {
            double dg = (up[c] - f[c] * fdotu) / n;  // through L2 normalization
            int idx = amax[c];
            if (idx < 0) continue;
            if (trace.conv[static_cast<std::size_t>(idx) * C + c] <= 0.0) continue;  // relu
            dconv[static_cast<std::size_t>(idx) * C + c] += dg;
        }
    }

    std::vector<double> dfilters(params.filters.size(), 0.0);
    for (int y = 0; y < trace.conv_h; ++y)
        for (int x = 0; x < trace.conv_w; ++x) {
            const double* dc = &dconv[(static_cast<std::size_t>(y) * trace.conv_w + x) * C];
            for (int c = 0; c < C; ++c) {
                if (dc[c] == 0.0) continue;
                double* dw = &dfilters[c * params.filter_size()];
                for (int ky = 0; ky < k; ++ky) {
                    const float* row = &image.data[(static_cast<std::size_t>(y * cs + ky) *
                                                        image.width +
                                                    x * cs) * 3];
                    double* dwrow = &dw[static_cast<std::size_t>(ky) * k * 3];
                    for (int j = 0; j < k * 3; ++j) dwrow[j] += dc[c] * row[j];
                }
            }
        }
    return dfilters;
}

// ---- filter initialization ----

namespace {

// Jacobi eigendecomposition for symmetric matrices; enough for the small
// patch covariance used in whitening.
void jacobi_eigen(std::vector<double>& a, int n, std::vector<double>& eigvals,
                  std::vector<double>& eigvecs) {
    eigvecs.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) eigvecs[static_cast<std::size_t>(i) * n + i] = 1.0;
    auto A = [&](int r, int c) -> double& { return a[static_cast<std::size_t>(r) * n + c]; };
    auto V = [&](int r, int c) -> double& { return eigvecs[static_cast<std::size_t>(r) * n + c]; };
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += A(p, q) * A(p, q);
        if (off < 1e-20) break;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                if (std::abs(A(p, q)) < 1e-300) continue;
                double theta = (A(q, q) - A(p, p)) / (2.0 * A(p, q));
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int i = 0; i < n; ++i) {
                    double aip = A(i, p), aiq = A(i, q);
                    A(i, p) = c * aip - s * aiq;
                    A(i, q) = s * aip + c * aiq;
                }
                for (int i = 0; i < n; ++i) {
                    double api = A(p, i), aqi = A(q, i);
                    A(p, i) = c * api - s * aqi;
                    A(q, i) = s * api + c * aqi;
                }
                for (int i = 0; i < n; ++i) {
                    double vip = V(i, p), viq = V(i, q);
                    V(i, p) = c * vip - s * viq;
                    V(i, q) = s * vip + c * viq;
                }
            }
    }
    eigvals.resize(n);
    for (int i = 0; i < n; ++i) eigvals[i] = A(i, i);
}

}  // namespace

BackboneParams init_filters(const LabeledDataset& dataset, int C, int k, std::uint64_t seed) {
    dataset.validate();
    if (C < 8) throw std::invalid_argument("init_filters: C must be >= 8");
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("init_filters: k must be odd");
    const int dim = k * k * 3;
    const int target_patches = std::max(C * 120, 2000);
    Rng rng(mix_seed(seed, 0xf117e5u));
    std::uniform_int_distribution<int> pick_img(0, static_cast<int>(dataset.size()) - 1);

    std::vector<std::vector<double>> patches;
    patches.reserve(target_patches);
    for (int t = 0; t < target_patches * 3 && static_cast<int>(patches.size()) < target_patches;
         ++t) {
        const Image& img = dataset.images[pick_img(rng)];
        if (img.height < k || img.width < k) continue;
        std::uniform_int_distribution<int> pr(0, img.height - k), pc(0, img.width - k);
        int r0 = pr(rng), c0 = pc(rng);
        std::vector<double> p(dim);
        double mean = 0.0;
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx)
                for (int ch = 0; ch < 3; ++ch) {
                    double v = img.at(r0 + ky, c0 + kx, ch);
                    p[(static_cast<std::size_t>(ky) * k + kx) * 3 + ch] = v;
                    mean += v;
                }
        mean /= dim;
        double var = 0.0;
        for (double& v : p) {
            v -= mean;
            var += v * v;
        }
        if (var / dim < 1e-5) continue;  // flat patch, useless for a filter
        patches.push_back(std::move(p));
    }
    if (static_cast<int>(patches.size()) < C)
        throw std::invalid_argument("init_filters: C exceeds number of sampled patches");

    // ZCA whitening of the centered patches
    std::vector<double> cov(static_cast<std::size_t>(dim) * dim, 0.0);
    for (const auto& p : patches)
        for (int i = 0; i < dim; ++i)
            for (int j = i; j < dim; ++j) cov[static_cast<std::size_t>(i) * dim + j] += p[i] * p[j];
    for (int i = 0; i < dim; ++i)
        for (int j = i; j < dim; ++j) {
            double v = cov[static_cast<std::size_t>(i) * dim + j] / patches.size();
            cov[static_cast<std::size_t>(i) * dim + j] = v;
            cov[static_cast<std::size_t>(j) * dim + i] = v;
        }
    std::vector<double> eigvals, eigvecs;
    jacobi_eigen(cov, dim, eigvals, eigvecs);
    const double zca_eps = 1e-3;
    // W = V diag(1/sqrt(l+eps)) V^T applied to each patch
    std::vector<std::vector<double>> whitened;
    whitened.reserve(patches.size());
    for (const auto& p : patches) {
        std::vector<double> proj(dim, 0.0);
        for (int j = 0; j < dim; ++j) {
            double s = 0.0;
            for (int i = 0; i < dim; ++i) s += eigvecs[static_cast<std::size_t>(i) * dim + j] * p[i];
            proj[j] = s / std::sqrt(std::max(eigvals[j], 0.0) + zca_eps);
        }
        std::vector<double> w(dim, 0.0);
        for (int i = 0; i < dim; ++i) {
            double s = 0.0;
            for (int j = 0; j < dim; ++j) s += eigvecs[static_cast<std::size_t>(i) * dim + j] * proj[j];
            w[i] = s;
        }
        double n = std::sqrt(dot(w, w));
        if (n < 1e-9) continue;
        for (double& v : w) v /= n;
        whitened.push_back(std::move(w));
    }
    if (static_cast<int>(whitened.size()) < C)
        throw std::invalid_argument("init_filters: C exceeds number of usable patches");

    auto clusters = learn_dictionary(whitened, C, mix_seed(seed, 0xc1u));

    BackboneParams params;
    params.n_filters = C;
    params.kernel = k;
    params.filters.resize(static_cast<std::size_t>(C) * dim);
    for (int c = 0; c < C; ++c) {
        const auto& mu = clusters.dictionary.components[c].mu;  // already unit Frobenius
        std::copy(mu.begin(), mu.end(), params.filters.begin() + static_cast<std::size_t>(c) * dim);
    }
    params.validate();
    return params;
}

// ---- feature file I/O ----

namespace {

constexpr char kMagic[4] = {'C', 'D', 'F', 'M'};
constexpr std::uint32_t kVersion = 1;

void put_u32le(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<char*>(b), 4);
}

std::uint32_t get_u32le(std::ifstream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("feature file: truncated header");
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

}  // namespace

void export_feature_maps(const std::vector<FeatureMap>& maps, const std::vector<int>& labels,
                         const std::string& path) {
    if (maps.empty()) throw std::invalid_argument("export_feature_maps: no maps");
    if (maps.size() != labels.size())
        throw std::invalid_argument("export_feature_maps: label count mismatch");
    for (const auto& m : maps)
        if (m.height != maps[0].height || m.width != maps[0].width || m.depth != maps[0].depth)
            throw std::invalid_argument("export_feature_maps: inconsistent shapes");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write(kMagic, 4);
    put_u32le(out, kVersion);
    put_u32le(out, static_cast<std::uint32_t>(maps.size()));
    put_u32le(out, static_cast<std::uint32_t>(maps[0].height));
    put_u32le(out, static_cast<std::uint32_t>(maps[0].width));
    put_u32le(out, static_cast<std::uint32_t>(maps[0].depth));
    for (const auto& m : maps) {
        std::vector<float> buf(m.data.begin(), m.data.end());
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    for (int lb : labels) {
        std::int32_t v = lb;
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    if (!out) throw std::runtime_error("feature file write failed: " + path);
}

FeatureSet import_feature_maps(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("feature file: bad magic: " + path);
    std::uint32_t version = get_u32le(in);
    if (version != kVersion) throw std::runtime_error("feature file: unknown version");
    std::uint32_t count = get_u32le(in);
    std::uint32_t H = get_u32le(in), W = get_u32le(in), D = get_u32le(in);
    if (count == 0 || H == 0 || W == 0 || D == 0)
        throw std::runtime_error("feature file: empty or malformed header");

    FeatureSet set;
    set.maps.reserve(count);
    const std::size_t n = static_cast<std::size_t>(H) * W * D;
    std::vector<float> buf(n);
    for (std::uint32_t i = 0; i < count; ++i) {
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(n * sizeof(float)));
        if (!in) throw std::runtime_error("feature file: truncated item");
        FeatureMap m;
        m.height = static_cast<int>(H);
        m.width = static_cast<int>(W);
        m.depth = static_cast<int>(D);
        m.data.assign(buf.begin(), buf.end());
        m.valid.assign(static_cast<std::size_t>(H) * W, 0);
        for (int pos = 0; pos < m.positions(); ++pos) {
            double* f = &m.data[static_cast<std::size_t>(pos) * D];
            double norm = 0.0;
            for (std::uint32_t d = 0; d < D; ++d) norm += f[d] * f[d];
            norm = std::sqrt(norm);
            if (norm < 1e-9) {
                std::fill(f, f + D, 0.0);
            } else {
                for (std::uint32_t d = 0; d < D; ++d) f[d] /= norm;  // re-normalize on load
                m.valid[pos] = 1;
            }
        }
        set.maps.push_back(std::move(m));
    }
    set.labels.resize(count);
    in.read(reinterpret_cast<char*>(set.labels.data()),
            static_cast<std::streamsize>(count * sizeof(std::int32_t)));
    if (!in) throw std::runtime_error("feature file: truncated label table");
    return set;
}

}  // namespace compdef
