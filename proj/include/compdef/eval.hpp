#pragma once

#include "compdef/attack.hpp"
#include "compdef/combiner.hpp"
#include "compdef/finetune.hpp"

namespace compdef {

using PredictFn = std::function<int(const Image&)>;

// Fraction of correct predictions.
double accuracy(const PredictFn& model, const LabeledDataset& dataset);

struct AttackOutcome {
    bool success = false;
    int queries = 0;
};

// successes / |outcomes|; the caller guarantees the outcomes cover exactly
// the clean-correct subset. Throws when the subset is empty.
double attack_success_rate(const std::vector<AttackOutcome>& outcomes);

// Feature position labeled occluded iff >= overlap_fraction of its
// receptive field is masked.
std::vector<std::uint8_t> localization_labels(const PatchMask& mask, const BackboneParams& geometry,
                                              double overlap_fraction = 0.5);

struct RocCurve {
    std::vector<double> fpr, tpr;  // one point per distinct threshold, plus endpoints
    double auc = 0.0;
};

// Threshold sweep over pooled per-position scores; trapezoidal AUC.
// Requires at least one positive and one negative label.
RocCurve localization_roc(const std::vector<double>& scores,
                          const std::vector<std::uint8_t>& labels);

void write_roc_csv(const RocCurve& roc, const std::string& path);

enum class ModelKind { Plain, PatchAug, CompNet, CompNetFt, Combined };

std::string model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);  // throws on unknown name

struct ModelSpec {
    std::string name;
    ModelKind kind = ModelKind::Plain;
    CombinerConfig combiner;  // used by Combined only
};

enum class AttackKind { RandomSearch, Texture };

struct AttackSpec {
    std::string name;
    AttackKind kind = AttackKind::RandomSearch;
    AttackConfig config;
};

struct ExperimentConfig {
    SyntheticSpec dataset;
    int train_per_class = 30;
    int test_images = 40;
    int background_images = 24;
    int backbone_filters = 16;
    int backbone_kernel = 5;
    double patch_aug_area = 0.05;  // area fraction for the augmented baseline
    CompNetConfig compnet;
    FinetuneConfig finetune;
    HeadTrainConfig head_train;
    std::vector<ModelSpec> models;
    std::vector<AttackSpec> attacks;
    std::uint64_t seed = 0;

    void validate() const;
};

ExperimentConfig parse_experiment_config(const std::string& json_text);
std::string experiment_config_json(const ExperimentConfig& cfg);

// A trained roster entry exposing the black-box query surface the attacks
// and metrics consume.
struct TrainedModel {
    std::string name;
    ModelKind kind = ModelKind::Plain;
    BackboneParams backbone;  // the head's backbone (finetuned for CompNetFt)
    SoftmaxHead head;
    CompNetModel compnet;
    bool has_head = false, has_compnet = false;
    CombinerConfig combiner;

    std::vector<double> query(const Image& image) const;  // class probabilities
    int predict(const Image& image) const;
    PredictFn predict_fn() const;
    QueryFn query_fn() const;
};

// Trains every roster entry from the same seeds; shared pieces (plain
// head, compnet) are trained once and reused.
std::vector<TrainedModel> train_roster(const ExperimentConfig& cfg, const LabeledDataset& train,
                                       const std::vector<Image>& background);

struct CellReport {
    std::string model, attack;
    int evaluated = 0;  // clean-correct subset size
    double asr = 0.0;
    double mean_queries = 0.0;
    // Pooled patch-localization AUC on the attacked images; NaN for
    // models without a compositional branch.
    double localization_auc = std::numeric_limits<double>::quiet_NaN();
};

struct Report {
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, double>> clean_accuracy;  // per model
    std::vector<std::pair<std::string, double>> head_fraction;   // routing, combined models
    std::vector<CellReport> cells;

    std::string to_json() const;
    std::string to_csv() const;
};

Report run_experiment(const ExperimentConfig& cfg);

// report.json plus cells.csv under dir.
void write_report(const Report& report, const std::string& dir);

}  // namespace compdef
