#include "doctest.h"

#include "compdef/finetune.hpp"
#include "helpers.hpp"

using namespace compdef;

namespace {

FeatureMap toy_map(int h, int w, int d, Rng& rng) {
    FeatureMap F;
    F.height = h;
    F.width = w;
    F.depth = d;
    F.valid.assign(static_cast<std::size_t>(h) * w, 1);
    for (int i = 0; i < h * w; ++i) {
        auto v = sample_sphere(d, rng);
        F.data.insert(F.data.end(), v.begin(), v.end());
    }
    return F;
}

PartClassifier random_pc(int n_classes, int d, Rng& rng) {
    PartClassifier pc;
    pc.n_classes = n_classes;
    pc.dim = d;
    std::normal_distribution<double> g(0.0, 1.0);
    pc.weights.resize(static_cast<std::size_t>(n_classes) * d);
    for (auto& w : pc.weights) w = g(rng);
    return pc;
}

LabeledDataset small_fine_grained(int per_class) {
    SyntheticSpec spec;
    spec.n_classes = 2;
    spec.image_size = 32;
    spec.fine_grained = true;
    spec.clutter = 0.3;
    spec.seed = 77;
    return generate_synthetic_dataset(spec, per_class);
}

BackboneParams small_backbone(const LabeledDataset& ds) {
    auto p = init_filters(ds, 8, 3, 5);
    p.pool_window = p.pool_stride = 3;
    return p;
}

}  // namespace

TEST_CASE("per-position class scores") {
    Rng rng(1);
    auto F = toy_map(2, 2, 6, rng);
    SUBCASE("zero weights give uniform distributions") {
        PartClassifier pc;
        pc.n_classes = 4;
        pc.dim = 6;
        pc.weights.assign(24, 0.0);
        auto grid = part_scores(F, pc);
        for (int i = 0; i < 4; ++i)
            for (int y = 0; y < 4; ++y) CHECK(grid.row(i)[y] == doctest::Approx(0.25).epsilon(1e-12));
    }
    SUBCASE("two-class probability is the logistic of the weight difference") {
        auto pc = random_pc(2, 6, rng);
        auto grid = part_scores(F, pc);
        for (int i = 0; i < 4; ++i) {
            const double* f = F.vec(i / 2, i % 2);
            double z = 0.0;
            for (int d = 0; d < 6; ++d) z += (pc.class_row(0)[d] - pc.class_row(1)[d]) * f[d];
            CHECK(grid.row(i)[0] == doctest::Approx(1.0 / (1.0 + std::exp(-z))).epsilon(1e-10));
        }
    }
}

TEST_CASE("row-wise constant shift leaves part scores unchanged") {
    Rng rng(11);
    auto F = toy_map(2, 2, 5, rng);
    auto pc = random_pc(3, 5, rng);
    auto base = part_scores(F, pc);
    // softmax invariance: add the same vector to every class row
    std::vector<double> shift(5);
    std::normal_distribution<double> g(0.0, 1.0);
    for (auto& s : shift) s = g(rng);
    auto moved = pc;
    for (int y = 0; y < 3; ++y)
        for (int d = 0; d < 5; ++d) moved.class_row(y)[d] += shift[d];
    auto after = part_scores(F, moved);
    for (std::size_t i = 0; i < base.probs.size(); ++i)
        CHECK(after.probs[i] == doctest::Approx(base.probs[i]).epsilon(1e-9));
}

TEST_CASE("max pooling over positions") {
    Rng rng(2);
    SUBCASE("1x1 grid pools to itself") {
        auto F = toy_map(1, 1, 5, rng);
        auto pc = random_pc(3, 5, rng);
        auto grid = part_scores(F, pc);
        auto pooled = part_pool(grid);
        for (int y = 0; y < 3; ++y) {
            CHECK(pooled.values[y] == doctest::Approx(grid.row(0)[y]));
            CHECK(pooled.argmax_pos[y] == 0);
        }
    }
    SUBCASE("pooled value dominates every position") {
        auto F = toy_map(3, 3, 4, rng);
        auto pc = random_pc(4, 4, rng);
        auto grid = part_scores(F, pc);
        auto pooled = part_pool(grid);
        for (int y = 0; y < 4; ++y)
            for (int i = 0; i < 9; ++i) CHECK(pooled.values[y] >= grid.row(i)[y]);
    }
    SUBCASE("matches an exhaustive scan on a 3x3x4 grid") {
        auto F = toy_map(3, 3, 7, rng);
        auto pc = random_pc(4, 7, rng);
        auto grid = part_scores(F, pc);
        auto pooled = part_pool(grid);
        for (int y = 0; y < 4; ++y) {
            double best = -1.0;
            int arg = -1;
            for (int i = 0; i < 9; ++i)
                if (grid.row(i)[y] > best) { best = grid.row(i)[y]; arg = i; }
            CHECK(pooled.values[y] == doctest::Approx(best));
            CHECK(pooled.argmax_pos[y] == arg);
        }
    }
}

TEST_CASE("finetuning") {
    auto ds = small_fine_grained(5);
    auto backbone = small_backbone(ds);
    SUBCASE("zero learning rate changes nothing") {
        FinetuneConfig cfg;
        cfg.learning_rate = 0.0;
        cfg.epochs = 3;
        cfg.seed = 1;
        auto r = finetune(ds, backbone, cfg);
        CHECK(r.backbone.filters == backbone.filters);
    }
    SUBCASE("gradient matches central finite differences") {
        Rng rng(3);
        FinetuneConfig cfg;
        cfg.seed = 2;
        auto pc = random_pc(2, backbone.n_filters, rng);
        for (auto& w : pc.weights) w *= 0.1;
        // flat regions in the synthetic images create exact pooling ties,
        // where the loss is nondifferentiable; dither to land on smooth points
        auto noisy = ds;
        std::uniform_real_distribution<float> jig(-0.02f, 0.02f);
        for (auto& img : noisy.images)
            for (auto& v : img.data) v = std::clamp(v + jig(rng), 0.0f, 1.0f);
        const auto& dsr = noisy;
        auto g = finetune_gradient(dsr, backbone, pc, true);
        const double eps = 1e-5;
        double worst = 0.0;
        std::uniform_int_distribution<std::size_t> pick_w(0, pc.weights.size() - 1);
        for (int t = 0; t < 8; ++t) {
            std::size_t i = pick_w(rng);
            auto p2 = pc;
            p2.weights[i] += eps;
            double up = finetune_gradient(dsr, backbone, p2, false).loss;
            p2.weights[i] -= 2 * eps;
            double dn = finetune_gradient(dsr, backbone, p2, false).loss;
            double fd = (up - dn) / (2 * eps);
            double scale = std::max({std::abs(fd), std::abs(g.d_weights[i]), 1.0});
            worst = std::max(worst, std::abs(fd - g.d_weights[i]) / scale);
        }
        std::uniform_int_distribution<std::size_t> pick_f(0, backbone.filters.size() - 1);
        for (int t = 0; t < 8; ++t) {
            std::size_t i = pick_f(rng);
            auto b2 = backbone;
            b2.filters[i] += eps;
            double up = finetune_gradient(dsr, b2, pc, false).loss;
            b2.filters[i] -= 2 * eps;
            double dn = finetune_gradient(dsr, b2, pc, false).loss;
            double fd = (up - dn) / (2 * eps);
            double scale = std::max({std::abs(fd), std::abs(g.d_filters[i]), 1.0});
            worst = std::max(worst, std::abs(fd - g.d_filters[i]) / scale);
        }
        CHECK(worst < 1e-4);
    }
    SUBCASE("training reduces the loss on fine-grained data") {
        FinetuneConfig cfg;
        cfg.epochs = 20;
        cfg.seed = 4;
        auto r = finetune(ds, backbone, cfg);
        REQUIRE(r.loss_trace.size() >= 2);
        CHECK(r.loss_trace.back() < r.loss_trace.front());
    }
    SUBCASE("deterministic per seed") {
        FinetuneConfig cfg;
        cfg.epochs = 4;
        cfg.seed = 9;
        auto a = finetune(ds, backbone, cfg);
        auto b = finetune(ds, backbone, cfg);
        CHECK(a.backbone.filters == b.backbone.filters);
        CHECK(a.classifier.weights == b.classifier.weights);
        CHECK(a.loss_trace == b.loss_trace);
    }
    SUBCASE("zero epochs keeps the pipeline identical") {
        FinetuneConfig cfg;
        cfg.epochs = 0;
        cfg.seed = 5;
        auto r = finetune(ds, backbone, cfg);
        CHECK(r.backbone.filters == backbone.filters);
        CompNetConfig cc;
        cc.K = 10;
        cc.em_iters = 3;
        cc.seed = 3;
        auto bg = background_corpus({2, 32, 0.6, false, 123}, 5, 4);
        auto direct = train_compnet(backbone, ds, bg, cc);
        auto refit = refit_after_finetune(ds, bg, r.backbone, cc);
        for (std::size_t k = 0; k < direct.dictionary.components.size(); ++k)
            CHECK(direct.dictionary.components[k].mu == refit.dictionary.components[k].mu);
    }
}
