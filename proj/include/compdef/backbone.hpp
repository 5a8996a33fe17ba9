#pragma once

#include "compdef/image.hpp"

namespace compdef {

// Single conv layer + rectifier + max-pool + per-position L2 norm.
// Shallow on purpose: gradients stay exactly checkable.
struct BackboneParams {
    int n_filters = 16;   // C
    int kernel = 5;       // k, odd
    int conv_stride = 1;
    int pool_window = 4;
    int pool_stride = 4;
    double epsilon = 1e-6;  // positions with pre-norm below this are invalid
    std::vector<double> filters;  // C * k * k * 3, [c][ky][kx][ch]

    std::size_t filter_size() const { return static_cast<std::size_t>(kernel) * kernel * 3; }
    double& filter_at(int c, int ky, int kx, int ch) {
        return filters[((static_cast<std::size_t>(c) * kernel + ky) * kernel + kx) * 3 + ch];
    }
    double filter_at(int c, int ky, int kx, int ch) const {
        return filters[((static_cast<std::size_t>(c) * kernel + ky) * kernel + kx) * 3 + ch];
    }
    void validate() const;
};

struct FeatureMap {
    int height = 0, width = 0, depth = 0;
    std::vector<double> data;          // h * w * d, position-major
    std::vector<std::uint8_t> valid;   // h * w

    const double* vec(int r, int c) const {
        return &data[(static_cast<std::size_t>(r) * width + c) * depth];
    }
    double* vec(int r, int c) {
        return &data[(static_cast<std::size_t>(r) * width + c) * depth];
    }
    bool is_valid(int r, int c) const { return valid[static_cast<std::size_t>(r) * width + c]; }
    int positions() const { return height * width; }
};

// Output lattice for a given input size; throws if incompatible.
void feature_shape(const BackboneParams& p, int img_h, int img_w, int& out_h, int& out_w);

FeatureMap extract_features(const Image& image, const BackboneParams& params);

// Inclusive pixel box seen by pooled position (pr, pc).
struct RfBox {
    int r0, c0, r1, c1;
};
RfBox receptive_field(const BackboneParams& p, int pr, int pc);

// Filter initialization: sampled image patches, per-patch centering, ZCA
// whitening, spherical k-means; centroids become unit-Frobenius filters.
BackboneParams init_filters(const LabeledDataset& dataset, int C, int k, std::uint64_t seed);

// Forward pass keeping the intermediates needed for the exact backward
// pass (pool argmax routing, relu mask, pre-norm magnitudes).
struct BackboneTrace {
    FeatureMap features;
    std::vector<double> prenorm;    // h * w, L2 norm before normalization
    std::vector<int> pool_argmax;   // h * w * d, linear index into conv lattice
    std::vector<double> conv;       // conv_h * conv_w * d, pre-rectifier
    int conv_h = 0, conv_w = 0;
};
BackboneTrace forward_backbone(const Image& image, const BackboneParams& params);

// Exact gradient of a scalar loss w.r.t. the filters, given the upstream
// gradient w.r.t. the feature map (and the forward trace). Also returns
// the gradient through normalization for reuse by callers that need it.
std::vector<double> backbone_gradient(const Image& image, const BackboneParams& params,
                                      const BackboneTrace& trace,
                                      const std::vector<double>& upstream);

// Feature file: "CDFM" magic, version, count, H, W, D header, count
// little-endian float32 arrays, then count int32 labels. Byte-exact.
void export_feature_maps(const std::vector<FeatureMap>& maps, const std::vector<int>& labels,
                         const std::string& path);
struct FeatureSet {
    std::vector<FeatureMap> maps;
    std::vector<int> labels;
};
FeatureSet import_feature_maps(const std::string& path);

}  // namespace compdef
