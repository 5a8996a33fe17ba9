#include "compdef/combiner.hpp"

#include "compdef/common.hpp"

namespace compdef {

std::vector<double> average_pool(const FeatureMap& F) {
    std::vector<double> pooled(F.depth, 0.0);
    int n = 0;
    for (int pos = 0; pos < F.positions(); ++pos) {
        if (!F.valid[pos]) continue;
        const double* f = &F.data[static_cast<std::size_t>(pos) * F.depth];
        for (int d = 0; d < F.depth; ++d) pooled[d] += f[d];
        ++n;
    }
    if (n > 0)
        for (double& v : pooled) v /= n;
    return pooled;
}

std::vector<double> SoftmaxHead::logits(const std::vector<double>& pooled) const {
    if (static_cast<int>(pooled.size()) != dim)
        throw std::invalid_argument("softmax head: dimension mismatch");
    std::vector<double> out(n_classes);
    for (int y = 0; y < n_classes; ++y) {
        const double* w = &weights[static_cast<std::size_t>(y) * dim];
        double s = bias[y];
        for (int d = 0; d < dim; ++d) s += w[d] * pooled[d];
        out[y] = s;
    }
    return out;
}

static std::vector<double> softmax(std::vector<double> z) {
    double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double& v : z) {
        v = std::exp(v - m);
        s += v;
    }
    for (double& v : z) v /= s;
    return z;
}

std::vector<double> SoftmaxHead::probs(const Image& image, const BackboneParams& backbone) const {
    return softmax(logits(average_pool(extract_features(image, backbone))));
}

namespace {

struct PooledSet {
    std::vector<std::vector<double>> x;
    std::vector<int> y;
};

// deterministic interleaved holdout split
void split_holdout(std::size_t n, double fraction, std::vector<std::size_t>& train_idx,
                   std::vector<std::size_t>& hold_idx) {
    int period = fraction > 0.0 ? std::max(2, static_cast<int>(std::lround(1.0 / fraction))) : 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (period > 0 && i % period == period - 1)
            hold_idx.push_back(i);
        else
            train_idx.push_back(i);
    }
    if (hold_idx.empty() && period > 0 && n >= 2) {
        hold_idx.push_back(train_idx.back());
        train_idx.pop_back();
    }
}

double mean_cross_entropy(const SoftmaxHead& head, const PooledSet& set,
                          const std::vector<std::size_t>& idx) {
    if (idx.empty()) return 0.0;
    double loss = 0.0;
    for (auto i : idx) {
        auto p = softmax(head.logits(set.x[i]));
        loss += -std::log(std::max(p[set.y[i]], 1e-300));
    }
    return loss / idx.size();
}

SoftmaxHead train_head_on_pooled(
    const PooledSet& set, int n_classes, int dim, const HeadTrainConfig& config,
    const std::function<void(int, const SoftmaxHead&)>& refresh_features) {
    SoftmaxHead head;
    head.n_classes = n_classes;
    head.dim = dim;
    head.weights.assign(static_cast<std::size_t>(n_classes) * dim, 0.0);
    head.bias.assign(n_classes, 0.0);

    std::vector<std::size_t> train_idx, hold_idx;
    split_holdout(set.x.size(), config.holdout_fraction, train_idx, hold_idx);

    SoftmaxHead best = head;
    double best_hold = std::numeric_limits<double>::infinity();
    int since_best = 0;
    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        if (refresh_features) refresh_features(epoch, head);
        std::vector<double> dw(head.weights.size(), 0.0), db(head.bias.size(), 0.0);
        double loss = 0.0;
        for (auto i : train_idx) {
            auto p = softmax(head.logits(set.x[i]));
            loss += -std::log(std::max(p[set.y[i]], 1e-300));
            for (int y = 0; y < n_classes; ++y) {
                double g = (p[y] - (y == set.y[i] ? 1.0 : 0.0)) / train_idx.size();
                db[y] += g;
                double* row = &dw[static_cast<std::size_t>(y) * dim];
                for (int d = 0; d < dim; ++d) row[d] += g * set.x[i][d];
            }
        }
        if (!std::isfinite(loss))
            throw std::runtime_error("train_softmax_head: loss diverged at epoch " +
                                     std::to_string(epoch));
        for (std::size_t j = 0; j < head.weights.size(); ++j)
            head.weights[j] -= config.learning_rate * dw[j];
        for (std::size_t j = 0; j < head.bias.size(); ++j)
            head.bias[j] -= config.learning_rate * db[j];

        double hold = hold_idx.empty() ? loss / std::max<std::size_t>(train_idx.size(), 1)
                                       : mean_cross_entropy(head, set, hold_idx);
        if (hold < best_hold - 1e-12) {
            best_hold = hold;
            best = head;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;  // early stopping
        }
    }
    return best;
}

}  // namespace

SoftmaxHead train_softmax_head(const LabeledDataset& dataset, const BackboneParams& backbone,
                               const HeadTrainConfig& config) {
    dataset.validate();
    PooledSet set;
    set.y = dataset.labels;
    auto maps = extract_all(backbone, dataset.images);
    for (const auto& m : maps) set.x.push_back(average_pool(m));
    return train_head_on_pooled(set, dataset.n_classes, backbone.n_filters, config, nullptr);
}

SoftmaxHead train_with_random_patches(const LabeledDataset& dataset,
                                      const BackboneParams& backbone, double patch_area_fraction,
                                      const HeadTrainConfig& config) {
    if (patch_area_fraction == 0.0) return train_softmax_head(dataset, backbone, config);
    if (patch_area_fraction < 0.0 || patch_area_fraction > 0.5)
        throw std::invalid_argument("train_with_random_patches: area fraction in (0, 0.5]");
    dataset.validate();
    const int H = dataset.images[0].height, W = dataset.images[0].width;
    const int side = static_cast<int>(std::floor(std::sqrt(patch_area_fraction * H * W)));
    if (side < 1) throw std::invalid_argument("train_with_random_patches: patch side is 0");

    // each image gets a fresh uniformly placed square patch of iid uniform
    // random colors every epoch; otherwise identical to train_softmax_head
    const std::size_t n = dataset.size();
    PooledSet set;
    set.y = dataset.labels;
    set.x.resize(n);
    Rng rng(mix_seed(config.seed, 0xaa60u));

    auto refresh = [&](int, const SoftmaxHead&) {
        std::vector<std::uint64_t> seeds(n);
        for (auto& s : seeds) s = rng();
        parallel_for(n, [&](std::size_t i) {
            Rng r(seeds[i]);
            Image img = dataset.images[i];
            std::uniform_int_distribution<int> dr(0, H - side), dc(0, W - side);
            int r0 = dr(r), c0 = dc(r);
            std::uniform_real_distribution<float> u(0.0f, 1.0f);
            for (int rr = r0; rr < r0 + side; ++rr)
                for (int cc = c0; cc < c0 + side; ++cc)
                    for (int ch = 0; ch < 3; ++ch) img.at(rr, cc, ch) = u(r);
            set.x[i] = average_pool(extract_features(img, backbone));
        });
    };
    return train_head_on_pooled(set, dataset.n_classes, backbone.n_filters, config, refresh);
}

void CombinerConfig::validate() const {
    if (!(threshold >= 0.0 && threshold <= 1.0))
        throw std::invalid_argument("combiner: threshold in [0, 1]");
    if (!(temperature > 0.0)) throw std::invalid_argument("combiner: temperature must be > 0");
}

CombinedPrediction combined_predict(const Image& image, const SoftmaxHead& head,
                                    const CompNetModel& compnet, const CombinerConfig& config) {
    config.validate();
    if (head.dim != compnet.backbone.n_filters)
        throw std::invalid_argument("combined_predict: feature geometry mismatch");
    auto z = head.logits(average_pool(extract_features(image, compnet.backbone)));
    std::vector<double> scaled(z);
    for (double& v : scaled) v /= config.temperature;
    auto p = softmax(scaled);
    auto it = std::max_element(p.begin(), p.end());
    double confidence = *it;
    if (confidence >= config.threshold) {
        // temperature never moves the argmax, only the routing decision
        int label = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
        return {label, PredictionSource::Head, confidence};
    }
    return {compnet.predict(image).label, PredictionSource::CompNet, confidence};
}

}  // namespace compdef
