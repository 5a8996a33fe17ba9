#include "compdef/finetune.hpp"

namespace compdef {

PartScoreGrid part_scores(const FeatureMap& F, const PartClassifier& pc) {
    if (F.depth != pc.dim) throw std::invalid_argument("part_scores: dimension mismatch");
    PartScoreGrid g;
    g.height = F.height;
    g.width = F.width;
    g.n_classes = pc.n_classes;
    g.probs.assign(static_cast<std::size_t>(F.positions()) * pc.n_classes, 0.0);
    g.valid.assign(F.valid.begin(), F.valid.end());
    std::vector<double> logits(pc.n_classes);
    for (int pos = 0; pos < F.positions(); ++pos) {
        if (!g.valid[pos]) continue;
        const double* f = &F.data[static_cast<std::size_t>(pos) * F.depth];
        double m = -std::numeric_limits<double>::infinity();
        for (int y = 0; y < pc.n_classes; ++y) {
            const double* w = pc.class_row(y);
            double s = 0.0;
            for (int d = 0; d < pc.dim; ++d) s += w[d] * f[d];
            logits[y] = s;
            m = std::max(m, s);
        }
        double z = 0.0;
        double* out = &g.probs[static_cast<std::size_t>(pos) * pc.n_classes];
        for (int y = 0; y < pc.n_classes; ++y) {
            out[y] = std::exp(logits[y] - m);
            z += out[y];
        }
        for (int y = 0; y < pc.n_classes; ++y) out[y] /= z;
    }
    return g;
}

PooledScores part_pool(const PartScoreGrid& grid) {
    bool any = false;
    for (auto v : grid.valid) any |= (v != 0);
    if (!any) throw std::invalid_argument("part_pool: all positions invalid");
    PooledScores out;
    out.values.assign(grid.n_classes, -1.0);
    out.argmax_pos.assign(grid.n_classes, -1);
    for (int pos = 0; pos < grid.height * grid.width; ++pos) {
        if (!grid.valid[pos]) continue;
        const double* p = grid.row(pos);
        for (int y = 0; y < grid.n_classes; ++y)
            if (p[y] > out.values[y]) {  // strict: lowest index wins ties
                out.values[y] = p[y];
                out.argmax_pos[y] = pos;
            }
    }
    return out;
}

FinetuneGradient finetune_gradient(const LabeledDataset& dataset, const BackboneParams& backbone,
                                   const PartClassifier& pc, bool backbone_grad) {
    dataset.validate();
    FinetuneGradient g;
    g.loss = 0.0;
    g.d_weights.assign(pc.weights.size(), 0.0);
    g.d_filters.assign(backbone.filters.size(), 0.0);
    const int C = pc.n_classes, D = pc.dim;
    const double inv_n = 1.0 / static_cast<double>(dataset.size());

    for (std::size_t i = 0; i < dataset.size(); ++i) {
        BackboneTrace tr = forward_backbone(dataset.images[i], backbone);
        PartScoreGrid grid = part_scores(tr.features, pc);
        PooledScores pooled = part_pool(grid);
        const int truth = dataset.labels[i];
        const int pos = pooled.argmax_pos[truth];
        double p_true = pooled.values[truth];
        g.loss += -std::log(std::max(p_true, 1e-300)) * inv_n;

        // gradient lives entirely at the argmax position of the true class
        const double* probs = grid.row(pos);
        const double* f = &tr.features.data[static_cast<std::size_t>(pos) * D];
        std::vector<double> dlogits(C);
        for (int y = 0; y < C; ++y) dlogits[y] = (probs[y] - (y == truth ? 1.0 : 0.0)) * inv_n;
        for (int y = 0; y < C; ++y) {
            double* dw = &g.d_weights[static_cast<std::size_t>(y) * D];
            for (int d = 0; d < D; ++d) dw[d] += dlogits[y] * f[d];
        }
        if (backbone_grad) {
            std::vector<double> upstream(tr.features.data.size(), 0.0);
            double* up = &upstream[static_cast<std::size_t>(pos) * D];
            for (int y = 0; y < C; ++y) {
                const double* w = pc.class_row(y);
                for (int d = 0; d < D; ++d) up[d] += dlogits[y] * w[d];
            }
            auto df = backbone_gradient(dataset.images[i], backbone, tr, upstream);
            for (std::size_t j = 0; j < df.size(); ++j) g.d_filters[j] += df[j];
        }
    }
    return g;
}

FinetuneResult finetune(const LabeledDataset& dataset, const BackboneParams& backbone,
                        const FinetuneConfig& config) {
    if (config.learning_rate < 0.0) throw std::invalid_argument("finetune: negative learning rate");
    if (config.epochs < 0) throw std::invalid_argument("finetune: negative epochs");
    dataset.validate();

    FinetuneResult res;
    res.backbone = backbone;
    res.classifier.n_classes = dataset.n_classes;
    res.classifier.dim = backbone.n_filters;
    res.classifier.weights.assign(
        static_cast<std::size_t>(dataset.n_classes) * backbone.n_filters, 0.0);
    Rng rng(mix_seed(config.seed, 0xf17eu));
    std::normal_distribution<double> gauss(0.0, 0.01);
    for (double& w : res.classifier.weights) w = gauss(rng);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        auto g = finetune_gradient(dataset, res.backbone, res.classifier,
                                   config.update_backbone);
        if (!std::isfinite(g.loss))
            throw std::runtime_error("finetune: loss diverged at epoch " + std::to_string(epoch));
        res.loss_trace.push_back(g.loss);
        for (std::size_t j = 0; j < res.classifier.weights.size(); ++j)
            res.classifier.weights[j] -= config.learning_rate * g.d_weights[j];
        if (config.update_backbone)
            for (std::size_t j = 0; j < res.backbone.filters.size(); ++j)
                res.backbone.filters[j] -= config.learning_rate * g.d_filters[j];
    }
    // final loss so the trace brackets the training
    auto g = finetune_gradient(dataset, res.backbone, res.classifier, false);
    res.loss_trace.push_back(g.loss);
    return res;
}

CompNetModel refit_after_finetune(const LabeledDataset& train, const std::vector<Image>& background,
                                  const BackboneParams& backbone, const CompNetConfig& cfg) {
    return train_compnet(backbone, train, background, cfg);
}

}  // namespace compdef
