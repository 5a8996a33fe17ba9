#pragma once

#include "compdef/comphead.hpp"
#include "compdef/synthetic.hpp"

namespace compdef {

struct CompNetConfig {
    int K = 32;             // dictionary size
    int M = 1;              // mixtures per class
    int em_iters = 8;
    bool shared_sigma = false;
    double smoothing = 1e-3;
    HeadOptions head;
    std::uint64_t seed = 0;
};

struct CompNetModel {
    BackboneParams backbone;
    VmfDictionary dictionary;
    std::vector<ClassModel> classes;
    OccluderModel occluder;
    HeadOptions head;

    Classification predict(const Image& image) const;
    OcclusionMap score_map_for(const Image& image, int label) const;
};

// Full pipeline on precomputed features: dictionary from pooled training
// vectors, per-class EM models, occluder from the background corpus.
CompNetModel train_compnet_on_features(const BackboneParams& backbone,
                                       const std::vector<FeatureMap>& train_maps,
                                       const std::vector<int>& labels, int n_classes,
                                       const std::vector<FeatureMap>& background_maps,
                                       const CompNetConfig& cfg);

CompNetModel train_compnet(const BackboneParams& backbone, const LabeledDataset& train,
                           const std::vector<Image>& background, const CompNetConfig& cfg);

std::vector<FeatureMap> extract_all(const BackboneParams& backbone,
                                    const std::vector<Image>& images);

// Unit vectors from all valid positions of all maps.
std::vector<std::vector<double>> collect_feature_vectors(const std::vector<FeatureMap>& maps);

}  // namespace compdef
