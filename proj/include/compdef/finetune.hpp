#pragma once

#include "compdef/pipeline.hpp"

namespace compdef {

// Per-position linear classifier p(y|f_i) = softmax(W_part f_i), no bias.
struct PartClassifier {
    int n_classes = 0, dim = 0;
    std::vector<double> weights;  // n_classes * dim

    const double* class_row(int y) const { return &weights[static_cast<std::size_t>(y) * dim]; }
    double* class_row(int y) { return &weights[static_cast<std::size_t>(y) * dim]; }
};

struct FinetuneConfig {
    double learning_rate = 0.5;
    int epochs = 20;
    bool update_backbone = true;
    std::uint64_t seed = 0;
};

struct PartScoreGrid {
    int height = 0, width = 0, n_classes = 0;
    std::vector<double> probs;         // h * w * n_classes (invalid rows zeroed)
    std::vector<std::uint8_t> valid;   // h * w

    const double* row(int pos) const { return &probs[static_cast<std::size_t>(pos) * n_classes]; }
};

PartScoreGrid part_scores(const FeatureMap& F, const PartClassifier& pc);

struct PooledScores {
    std::vector<double> values;     // per class, max over valid positions
    std::vector<int> argmax_pos;    // per class (lowest index on ties)
};
PooledScores part_pool(const PartScoreGrid& grid);

struct FinetuneResult {
    PartClassifier classifier;
    BackboneParams backbone;
    std::vector<double> loss_trace;  // mean loss per epoch, initial loss first
};

// Minimizes mean -log max_i p(y_true | f_i) by full-batch gradient
// descent; the max is handled by subgradient routing to the argmax
// position. Deterministic per seed.
FinetuneResult finetune(const LabeledDataset& dataset, const BackboneParams& backbone,
                        const FinetuneConfig& config);

// Loss and exact gradient at the current parameters; exposed for the
// finite-difference checks.
struct FinetuneGradient {
    double loss;
    std::vector<double> d_weights;   // same layout as PartClassifier::weights
    std::vector<double> d_filters;   // same layout as BackboneParams::filters
};
FinetuneGradient finetune_gradient(const LabeledDataset& dataset, const BackboneParams& backbone,
                                   const PartClassifier& pc, bool backbone_grad);

// Re-extract features on the (finetuned) backbone and re-learn the full
// compositional model.
CompNetModel refit_after_finetune(const LabeledDataset& train, const std::vector<Image>& background,
                                  const BackboneParams& backbone, const CompNetConfig& cfg);

}  // namespace compdef
