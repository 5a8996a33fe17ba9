#pragma once

#include "compdef/eval.hpp"

namespace compdef {

// On-disk model: JSON header (shapes, hyperparameters, version) plus a
// companion little-endian float32 blob whose offsets the header lists.
struct ModelBundle {
    static constexpr int kVersion = 1;

    int version = kVersion;
    ModelKind kind = ModelKind::Plain;
    BackboneParams backbone;

    bool has_compnet = false;
    VmfDictionary dictionary;
    std::vector<ClassModel> classes;
    OccluderModel occluder;
    HeadOptions head_opts;

    bool has_head = false;
    SoftmaxHead head;

    bool has_part = false;
    PartClassifier part;

    bool has_combiner = false;
    CombinerConfig combiner;

    void validate() const;  // cross-reference consistency (shared D, K, shapes)
};

// Writes `path` (JSON header) and `path + ".bin"` (blob).
void save_bundle(const ModelBundle& bundle, const std::string& path);

// Rejects unrecognized versions; re-normalizes unit vectors and simplexes
// after the float32 round trip.
ModelBundle load_bundle(const std::string& path);

ModelBundle bundle_from_model(const TrainedModel& model);
TrainedModel model_from_bundle(const ModelBundle& bundle);

}  // namespace compdef
