#include "compdef/pipeline.hpp"

namespace compdef {

std::vector<FeatureMap> extract_all(const BackboneParams& backbone,
                                    const std::vector<Image>& images) {
    std::vector<FeatureMap> maps(images.size());
    parallel_for(images.size(),
                 [&](std::size_t i) { maps[i] = extract_features(images[i], backbone); });
    return maps;
}

std::vector<std::vector<double>> collect_feature_vectors(const std::vector<FeatureMap>& maps) {
    std::vector<std::vector<double>> vecs;
    for (const auto& m : maps)
        for (int pos = 0; pos < m.positions(); ++pos) {
            if (!m.valid[pos]) continue;
            const double* f = &m.data[static_cast<std::size_t>(pos) * m.depth];
            vecs.emplace_back(f, f + m.depth);
        }
    return vecs;
}

CompNetModel train_compnet_on_features(const BackboneParams& backbone,
                                       const std::vector<FeatureMap>& train_maps,
                                       const std::vector<int>& labels, int n_classes,
                                       const std::vector<FeatureMap>& background_maps,
                                       const CompNetConfig& cfg) {
    if (train_maps.empty() || train_maps.size() != labels.size())
        throw std::invalid_argument("train_compnet: bad training set");
    if (background_maps.empty())
        throw std::invalid_argument("train_compnet: background corpus required for the occluder");

    CompNetModel model;
    model.backbone = backbone;
    model.head = cfg.head;

    DictionaryOptions dopts;
    dopts.shared_sigma = cfg.shared_sigma;
    auto vectors = collect_feature_vectors(train_maps);
    model.dictionary =
        learn_dictionary(vectors, cfg.K, mix_seed(cfg.seed, 0xd1c70u), dopts).dictionary;

    model.classes.reserve(n_classes);
    for (int y = 0; y < n_classes; ++y) {
        std::vector<FeatureMap> class_maps;
        for (std::size_t i = 0; i < train_maps.size(); ++i)
            if (labels[i] == y) class_maps.push_back(train_maps[i]);
        if (class_maps.empty())
            throw std::invalid_argument("train_compnet: class with no training images");
        auto em = learn_class_model(class_maps, y, cfg.M, model.dictionary, cfg.em_iters,
                                    mix_seed(cfg.seed, 0xc1a550u + y), cfg.smoothing, cfg.head);
        model.classes.push_back(std::move(em.model));
    }
    model.occluder = learn_occluder_model(background_maps, model.dictionary, cfg.smoothing);
    return model;
}

CompNetModel train_compnet(const BackboneParams& backbone, const LabeledDataset& train,
                           const std::vector<Image>& background, const CompNetConfig& cfg) {
    train.validate();
    auto train_maps = extract_all(backbone, train.images);
    auto bg_maps = extract_all(backbone, background);
    return train_compnet_on_features(backbone, train_maps, train.labels, train.n_classes,
                                     bg_maps, cfg);
}

Classification CompNetModel::predict(const Image& image) const {
    FeatureMap F = extract_features(image, backbone);
    return classify(F, classes, occluder, dictionary, head);
}

OcclusionMap CompNetModel::score_map_for(const Image& image, int label) const {
    if (label < 0 || label >= static_cast<int>(classes.size()))
        throw std::invalid_argument("score_map_for: label out of range");
    FeatureMap F = extract_features(image, backbone);
    return occlusion_score_map(F, classes[label], occluder, dictionary, head);
}

}  // namespace compdef
