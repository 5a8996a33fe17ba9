#pragma once

#include "compdef/image.hpp"

namespace compdef {

// Desk-scale stand-in for the occlusion-robustness benchmarks: colored
// geometric silhouettes on cluttered backgrounds. The fine-grained
// variant shares silhouette and color across classes and differs only in
// a small interior glyph, mimicking speed-limit-sign confusions.
struct SyntheticSpec {
    int n_classes = 8;
    int image_size = 64;
    double clutter = 0.5;      // background clutter level in [0,1]
    bool fine_grained = false;
    std::uint64_t seed = 0;

    void validate() const;
};

// items_per_class images per class, deterministic in (spec, items_per_class).
LabeledDataset generate_synthetic_dataset(const SyntheticSpec& spec, int items_per_class);

// Disjoint train/test splits: test items continue the per-class stream
// where the train items stop.
struct SplitDataset {
    LabeledDataset train;
    LabeledDataset test;
};
SplitDataset generate_synthetic_splits(const SyntheticSpec& spec, int train_per_class,
                                       int test_per_class);

// Clutter-only images with no class objects, for occluder-model training.
std::vector<Image> background_corpus(const SyntheticSpec& spec, std::uint64_t seed, int count);

std::vector<std::string> synthetic_class_names(const SyntheticSpec& spec);

}  // namespace compdef
