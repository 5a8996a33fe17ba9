#pragma once

#include "compdef/pipeline.hpp"

namespace compdef {

// Linear softmax head over the spatially average-pooled feature vector;
// the discriminative baseline sharing the CompNet's backbone.
struct SoftmaxHead {
    int n_classes = 0, dim = 0;
    std::vector<double> weights;  // n_classes * dim
    std::vector<double> bias;     // n_classes

    std::vector<double> logits(const std::vector<double>& pooled) const;
    std::vector<double> probs(const Image& image, const BackboneParams& backbone) const;
};

std::vector<double> average_pool(const FeatureMap& F);

struct HeadTrainConfig {
    double learning_rate = 2.0;
    int max_epochs = 200;
    double holdout_fraction = 0.2;
    int patience = 20;  // epochs without holdout improvement before stopping
    std::uint64_t seed = 0;
};

SoftmaxHead train_softmax_head(const LabeledDataset& dataset, const BackboneParams& backbone,
                               const HeadTrainConfig& config);

// Same loop, but every image receives a uniformly placed square patch of
// uniformly random colors each epoch (the weak randomized adversary).
SoftmaxHead train_with_random_patches(const LabeledDataset& dataset,
                                      const BackboneParams& backbone, double patch_area_fraction,
                                      const HeadTrainConfig& config);

struct CombinerConfig {
    double threshold = 0.95;   // tau
    double temperature = 1.0;  // T
    void validate() const;
};

enum class PredictionSource { Head, CompNet };

struct CombinedPrediction {
    int label;
    PredictionSource source;
    double confidence;  // max softmax(logits / T)
};

// Trust the head when its temperature-scaled confidence clears the
// threshold; fall back to the compositional model otherwise.
CombinedPrediction combined_predict(const Image& image, const SoftmaxHead& head,
                                    const CompNetModel& compnet, const CombinerConfig& config);

}  // namespace compdef
