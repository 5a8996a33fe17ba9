#include "compdef/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace compdef {

using nlohmann::json;

double accuracy(const PredictFn& model, const LabeledDataset& dataset) {
    if (dataset.size() == 0) throw std::invalid_argument("accuracy: empty dataset");
    int correct = 0;
    for (std::size_t i = 0; i < dataset.size(); ++i)
        if (model(dataset.images[i]) == dataset.labels[i]) ++correct;
    return static_cast<double>(correct) / dataset.size();
}

double attack_success_rate(const std::vector<AttackOutcome>& outcomes) {
    if (outcomes.empty()) throw std::invalid_argument("attack_success_rate: empty subset");
    int s = 0;
    for (const auto& o : outcomes) s += o.success ? 1 : 0;
    return static_cast<double>(s) / outcomes.size();
}

std::vector<std::uint8_t> localization_labels(const PatchMask& mask, const BackboneParams& geometry,
                                              double overlap_fraction) {
    int fh, fw;
    feature_shape(geometry, mask.height, mask.width, fh, fw);
    std::vector<std::uint8_t> labels(static_cast<std::size_t>(fh) * fw, 0);
    for (int pr = 0; pr < fh; ++pr)
        for (int pc = 0; pc < fw; ++pc) {
            RfBox rf = receptive_field(geometry, pr, pc);
            int r0 = std::max(rf.r0, 0), r1 = std::min(rf.r1, mask.height - 1);
            int c0 = std::max(rf.c0, 0), c1 = std::min(rf.c1, mask.width - 1);
            long covered = 0, total = 0;
            for (int r = r0; r <= r1; ++r)
                for (int c = c0; c <= c1; ++c) {
                    ++total;
                    covered += mask.at(r, c);
                }
            if (total > 0 && static_cast<double>(covered) / total >= overlap_fraction)
                labels[static_cast<std::size_t>(pr) * fw + pc] = 1;
        }
    return labels;
}

RocCurve localization_roc(const std::vector<double>& scores,
                          const std::vector<std::uint8_t>& labels) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("localization_roc: size mismatch");
    long P = 0, N = 0;
    for (auto l : labels) (l ? P : N) += 1;
    if (P == 0 || N == 0) throw std::invalid_argument("localization_roc: degenerate label set");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocCurve roc;
    roc.fpr.push_back(0.0);
    roc.tpr.push_back(0.0);
    long tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        // advance over ties so the curve (and AUC) depends only on rank
        double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) {
            (labels[order[i]] ? tp : fp) += 1;
            ++i;
        }
        double x = static_cast<double>(fp) / N, y = static_cast<double>(tp) / P;
        roc.auc += (x - roc.fpr.back()) * (y + roc.tpr.back()) / 2.0;
        roc.fpr.push_back(x);
        roc.tpr.push_back(y);
    }
    return roc;
}

void write_roc_csv(const RocCurve& roc, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "fpr,tpr\n";
    for (std::size_t i = 0; i < roc.fpr.size(); ++i)
        out << roc.fpr[i] << ',' << roc.tpr[i] << '\n';
}

std::string model_kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::Plain: return "plain";
        case ModelKind::PatchAug: return "patch-aug";
        case ModelKind::CompNet: return "compnet";
        case ModelKind::CompNetFt: return "compnet-ft";
        case ModelKind::Combined: return "combined";
    }
    throw std::logic_error("model_kind_name");
}

ModelKind model_kind_from_name(const std::string& name) {
    if (name == "plain") return ModelKind::Plain;
    if (name == "patch-aug") return ModelKind::PatchAug;
    if (name == "compnet") return ModelKind::CompNet;
    if (name == "compnet-ft") return ModelKind::CompNetFt;
    if (name == "combined") return ModelKind::Combined;
    throw std::invalid_argument("unknown model kind: " + name);
}

void ExperimentConfig::validate() const {
    dataset.validate();
    if (models.empty()) throw std::invalid_argument("experiment: empty model roster");
    if (test_images < 20) throw std::invalid_argument("experiment: test_images must be >= 20");
    if (train_per_class < 1) throw std::invalid_argument("experiment: train_per_class >= 1");
    for (const auto& a : attacks) a.config.validate();
    for (const auto& m : models)
        if (m.kind == ModelKind::Combined) m.combiner.validate();
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::vector<double> softmax_vec(const std::vector<double>& v) {
    double m = *std::max_element(v.begin(), v.end());
    std::vector<double> p(v.size());
    double z = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) z += (p[i] = std::exp(v[i] - m));
    for (auto& x : p) x /= z;
    return p;
}

}  // namespace

std::vector<double> TrainedModel::query(const Image& image) const {
    switch (kind) {
        case ModelKind::Plain:
        case ModelKind::PatchAug:
            return head.probs(image, backbone);
        case ModelKind::CompNet:
        case ModelKind::CompNetFt: {
            Classification cls = compnet.predict(image);
            int fh, fw;
            feature_shape(compnet.backbone, image.height, image.width, fh, fw);
            std::vector<double> scaled(cls.values);
            // per-position scaling keeps the argmax and tempers the softmax
            for (auto& v : scaled) v /= fh * fw;
            return softmax_vec(scaled);
        }
        case ModelKind::Combined: {
            std::vector<double> logits = head.logits(average_pool(extract_features(image, backbone)));
            std::vector<double> routed(logits);
            for (auto& l : routed) l /= combiner.temperature;
            std::vector<double> routed_p = softmax_vec(routed);
            double conf = *std::max_element(routed_p.begin(), routed_p.end());
            if (conf >= combiner.threshold) return softmax_vec(logits);
            Classification cls = compnet.predict(image);
            int fh, fw;
            feature_shape(compnet.backbone, image.height, image.width, fh, fw);
            std::vector<double> scaled(cls.values);
            for (auto& v : scaled) v /= fh * fw;
            return softmax_vec(scaled);
        }
    }
    throw std::logic_error("TrainedModel::query");
}

int TrainedModel::predict(const Image& image) const {
    if (kind == ModelKind::Combined)
        return combined_predict(image, head, compnet, combiner).label;
    auto p = query(image);
    return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

PredictFn TrainedModel::predict_fn() const {
    return [this](const Image& img) { return predict(img); };
}

QueryFn TrainedModel::query_fn() const {
    return [this](const Image& img) { return query(img); };
}

std::vector<TrainedModel> train_roster(const ExperimentConfig& cfg, const LabeledDataset& train,
                                       const std::vector<Image>& background) {
    BackboneParams backbone =
        init_filters(train, cfg.backbone_filters, cfg.backbone_kernel, mix_seed(cfg.seed, 0xbb));

    bool need_head = false, need_compnet = false;
    for (const auto& m : cfg.models) {
        if (m.kind == ModelKind::Plain || m.kind == ModelKind::Combined) need_head = true;
        if (m.kind == ModelKind::CompNet || m.kind == ModelKind::Combined) need_compnet = true;
    }

    SoftmaxHead plain_head;
    if (need_head) {
        HeadTrainConfig hc = cfg.head_train;
        hc.seed = mix_seed(cfg.seed, 0x4ead);
        plain_head = train_softmax_head(train, backbone, hc);
    }
    CompNetModel compnet;
    if (need_compnet) {
        CompNetConfig cc = cfg.compnet;
        cc.seed = mix_seed(cfg.seed, 0xc0);
        compnet = train_compnet(backbone, train, background, cc);
    }

    std::vector<TrainedModel> roster;
    for (const auto& m : cfg.models) {
        TrainedModel tm;
        tm.name = m.name.empty() ? model_kind_name(m.kind) : m.name;
        tm.kind = m.kind;
        tm.backbone = backbone;
        tm.combiner = m.combiner;
        switch (m.kind) {
            case ModelKind::Plain:
                tm.head = plain_head;
                tm.has_head = true;
                break;
            case ModelKind::PatchAug: {
                HeadTrainConfig hc = cfg.head_train;
                hc.seed = mix_seed(cfg.seed, 0x4ead);
                tm.head = train_with_random_patches(train, backbone, cfg.patch_aug_area, hc);
                tm.has_head = true;
                break;
            }
            case ModelKind::CompNet:
                tm.compnet = compnet;
                tm.has_compnet = true;
                break;
            case ModelKind::CompNetFt: {
                FinetuneConfig fc = cfg.finetune;
                fc.seed = mix_seed(cfg.seed, 0xf7);
                FinetuneResult ft = finetune(train, backbone, fc);
                CompNetConfig cc = cfg.compnet;
                cc.seed = mix_seed(cfg.seed, 0xc0);
                tm.compnet = refit_after_finetune(train, background, ft.backbone, cc);
                tm.backbone = ft.backbone;
                tm.has_compnet = true;
                break;
            }
            case ModelKind::Combined:
                tm.head = plain_head;
                tm.compnet = compnet;
                tm.has_head = tm.has_compnet = true;
                break;
        }
        roster.push_back(std::move(tm));
    }
    return roster;
}

namespace {

// class-interleaved pick of exactly n test images, so small subsets stay
// balanced regardless of generation order
LabeledDataset pick_test_subset(const LabeledDataset& test, int n) {
    std::vector<std::vector<std::size_t>> by_class(test.n_classes);
    for (std::size_t i = 0; i < test.size(); ++i) by_class[test.labels[i]].push_back(i);
    LabeledDataset out;
    out.n_classes = test.n_classes;
    out.class_names = test.class_names;
    for (std::size_t j = 0; static_cast<int>(out.size()) < n; ++j) {
        bool any = false;
        for (int c = 0; c < test.n_classes && static_cast<int>(out.size()) < n; ++c)
            if (j < by_class[c].size()) {
                out.images.push_back(test.images[by_class[c][j]]);
                out.labels.push_back(c);
                any = true;
            }
        if (!any) throw std::invalid_argument("experiment: not enough test images generated");
    }
    return out;
}

}  // namespace

Report run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const int per_class = (cfg.test_images + cfg.dataset.n_classes - 1) / cfg.dataset.n_classes;
    SplitDataset splits = generate_synthetic_splits(cfg.dataset, cfg.train_per_class, per_class);
    LabeledDataset test = pick_test_subset(splits.test, cfg.test_images);
    std::vector<Image> background =
        background_corpus(cfg.dataset, mix_seed(cfg.seed, 0xb6), cfg.background_images);

    std::vector<TrainedModel> roster = train_roster(cfg, splits.train, background);

    Report report;
    report.seed = cfg.seed;

    for (const auto& model : roster) {
        report.clean_accuracy.push_back({model.name, accuracy(model.predict_fn(), test)});
        if (model.kind == ModelKind::Combined) {
            int to_head = 0;
            for (const auto& img : test.images)
                if (combined_predict(img, model.head, model.compnet, model.combiner).source ==
                    PredictionSource::Head)
                    ++to_head;
            report.head_fraction.push_back(
                {model.name, static_cast<double>(to_head) / test.size()});
        }
    }

    // one data-driven texture dictionary serves every texture attack
    TextureDictionary textures;
    bool have_textures = false;
    int max_side = 0;
    for (const auto& a : cfg.attacks)
        if (a.kind == AttackKind::Texture)
            max_side = std::max(max_side, patch_geometry(a.config.area_fraction,
                                                         a.config.n_patches,
                                                         cfg.dataset.image_size,
                                                         cfg.dataset.image_size));
    if (max_side > 0) {
        int crop = std::min(cfg.dataset.image_size,
                            std::max(cfg.dataset.image_size * 3 / 4, max_side));
        textures = build_texture_dictionary(splits.train, 3, mix_seed(cfg.seed, 0x7e),
                                            nullptr, crop);
        have_textures = true;
    }
    (void)have_textures;

    for (const auto& model : roster) {
        QueryFn query = model.query_fn();
        std::vector<std::size_t> correct;
        for (std::size_t i = 0; i < test.size(); ++i)
            if (model.predict(test.images[i]) == test.labels[i]) correct.push_back(i);

        for (const auto& attack : cfg.attacks) {
            CellReport cell;
            cell.model = model.name;
            cell.attack = attack.name.empty()
                              ? (attack.kind == AttackKind::RandomSearch ? "random-search"
                                                                         : "texture")
                              : attack.name;
            cell.evaluated = static_cast<int>(correct.size());
            std::vector<AttackOutcome> outcomes;
            std::vector<double> loc_scores;
            std::vector<std::uint8_t> loc_labels;
            for (std::size_t idx : correct) {
                AttackConfig ac = attack.config;
                // seeded by identity, not roster position, so cells are
                // independent of roster ordering
                ac.seed = mix_seed(mix_seed(mix_seed(cfg.seed, fnv1a(model.name)),
                                            fnv1a(cell.attack)),
                                   idx + 1);
                AttackResult res =
                    attack.kind == AttackKind::RandomSearch
                        ? sparse_rs_patch_attack(query, test.images[idx], test.labels[idx], ac)
                        : texture_patch_attack(query, test.images[idx], test.labels[idx],
                                               textures, ac);
                outcomes.push_back({res.success, res.queries});
                if (model.has_compnet) {
                    OcclusionMap map =
                        model.compnet.score_map_for(res.adversarial, test.labels[idx]);
                    auto labels = localization_labels(res.mask, model.compnet.backbone);
                    loc_scores.insert(loc_scores.end(), map.score.begin(), map.score.end());
                    loc_labels.insert(loc_labels.end(), labels.begin(), labels.end());
                }
            }
            if (!outcomes.empty()) {
                cell.asr = attack_success_rate(outcomes);
                double q = 0.0;
                for (const auto& o : outcomes) q += o.queries;
                cell.mean_queries = q / outcomes.size();
            }
            bool has_pos = std::find(loc_labels.begin(), loc_labels.end(), 1) != loc_labels.end();
            bool has_neg = std::find(loc_labels.begin(), loc_labels.end(), 0) != loc_labels.end();
            if (has_pos && has_neg)
                cell.localization_auc = localization_roc(loc_scores, loc_labels).auc;
            report.cells.push_back(std::move(cell));
        }
    }
    return report;
}

std::string Report::to_json() const {
    json j;
    j["schema"] = "compdef-report";
    j["version"] = 1;
    j["seed"] = seed;
    j["clean_accuracy"] = json::object();
    for (const auto& [name, acc] : clean_accuracy) j["clean_accuracy"][name] = acc;
    j["head_fraction"] = json::object();
    for (const auto& [name, frac] : head_fraction) j["head_fraction"][name] = frac;
    j["cells"] = json::array();
    for (const auto& c : cells) {
        json jc = {{"model", c.model},
                   {"attack", c.attack},
                   {"evaluated", c.evaluated},
                   {"asr", c.asr},
                   {"mean_queries", c.mean_queries}};
        if (std::isfinite(c.localization_auc)) jc["localization_auc"] = c.localization_auc;
        j["cells"].push_back(jc);
    }
    return j.dump(2);
}

std::string Report::to_csv() const {
    std::ostringstream out;
    out << "model,attack,evaluated,asr,mean_queries,localization_auc\n";
    for (const auto& c : cells) {
        out << c.model << ',' << c.attack << ',' << c.evaluated << ',' << c.asr << ','
            << c.mean_queries << ',';
        if (std::isfinite(c.localization_auc)) out << c.localization_auc;
        out << '\n';
    }
    return out.str();
}

void write_report(const Report& report, const std::string& dir) {
    {
        std::ofstream out(dir + "/report.json");
        if (!out) throw std::runtime_error("cannot write " + dir + "/report.json");
        out << report.to_json() << '\n';
    }
    std::ofstream out(dir + "/cells.csv");
    if (!out) throw std::runtime_error("cannot write " + dir + "/cells.csv");
    out << report.to_csv();
}

namespace {

// json.at with an error message that names the offending field
template <typename T>
T field(const json& j, const char* name, T fallback) {
    if (!j.contains(name)) return fallback;
    try {
        return j.at(name).get<T>();
    } catch (const std::exception&) {
        throw std::invalid_argument(std::string("experiment config: bad field '") + name + "'");
    }
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const std::exception& e) {
        throw std::invalid_argument(std::string("experiment config: invalid JSON: ") + e.what());
    }
    ExperimentConfig cfg;
    cfg.seed = field<std::uint64_t>(j, "seed", 0);
    if (j.contains("dataset")) {
        const json& d = j["dataset"];
        cfg.dataset.n_classes = field<int>(d, "classes", cfg.dataset.n_classes);
        cfg.dataset.image_size = field<int>(d, "size", cfg.dataset.image_size);
        cfg.dataset.clutter = field<double>(d, "clutter", cfg.dataset.clutter);
        cfg.dataset.fine_grained = field<bool>(d, "fine_grained", cfg.dataset.fine_grained);
    }
    cfg.dataset.seed = mix_seed(cfg.seed, 0xda7a);
    cfg.train_per_class = field<int>(j, "train_per_class", cfg.train_per_class);
    cfg.test_images = field<int>(j, "test_images", cfg.test_images);
    cfg.background_images = field<int>(j, "background_images", cfg.background_images);
    cfg.backbone_filters = field<int>(j, "backbone_filters", cfg.backbone_filters);
    cfg.backbone_kernel = field<int>(j, "backbone_kernel", cfg.backbone_kernel);
    cfg.patch_aug_area = field<double>(j, "patch_aug_area", cfg.patch_aug_area);
    cfg.compnet.K = field<int>(j, "dictionary_size", cfg.compnet.K);
    cfg.compnet.M = field<int>(j, "mixtures_per_class", cfg.compnet.M);
    cfg.compnet.em_iters = field<int>(j, "em_iters", cfg.compnet.em_iters);
    if (!j.contains("models")) throw std::invalid_argument("experiment config: missing 'models'");
    for (const json& m : j.at("models")) {
        ModelSpec ms;
        if (!m.contains("kind"))
            throw std::invalid_argument("experiment config: model missing 'kind'");
        ms.kind = model_kind_from_name(m.at("kind").get<std::string>());
        ms.name = field<std::string>(m, "name", "");
        ms.combiner.threshold = field<double>(m, "threshold", ms.combiner.threshold);
        ms.combiner.temperature = field<double>(m, "temperature", ms.combiner.temperature);
        cfg.models.push_back(ms);
    }
    if (j.contains("attacks"))
        for (const json& a : j.at("attacks")) {
            AttackSpec as;
            std::string kind = field<std::string>(a, "kind", "random-search");
            if (kind == "random-search")
                as.kind = AttackKind::RandomSearch;
            else if (kind == "texture")
                as.kind = AttackKind::Texture;
            else
                throw std::invalid_argument("experiment config: unknown attack kind '" + kind +
                                            "'");
            as.name = field<std::string>(a, "name", "");
            as.config.n_patches = field<int>(a, "patches", as.config.n_patches);
            as.config.area_fraction = field<double>(a, "area", as.config.area_fraction);
            as.config.budget = field<int>(a, "budget", as.config.budget);
            as.config.targeted = field<bool>(a, "targeted", as.config.targeted);
            as.config.target = field<int>(a, "target", as.config.target);
            cfg.attacks.push_back(as);
        }
    cfg.validate();
    return cfg;
}

std::string experiment_config_json(const ExperimentConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["dataset"] = {{"classes", cfg.dataset.n_classes},
                    {"size", cfg.dataset.image_size},
                    {"clutter", cfg.dataset.clutter},
                    {"fine_grained", cfg.dataset.fine_grained}};
    j["train_per_class"] = cfg.train_per_class;
    j["test_images"] = cfg.test_images;
    j["background_images"] = cfg.background_images;
    j["backbone_filters"] = cfg.backbone_filters;
    j["backbone_kernel"] = cfg.backbone_kernel;
    j["patch_aug_area"] = cfg.patch_aug_area;
    j["dictionary_size"] = cfg.compnet.K;
    j["mixtures_per_class"] = cfg.compnet.M;
    j["em_iters"] = cfg.compnet.em_iters;
    j["models"] = json::array();
    for (const auto& m : cfg.models)
        j["models"].push_back({{"kind", model_kind_name(m.kind)},
                               {"name", m.name},
                               {"threshold", m.combiner.threshold},
                               {"temperature", m.combiner.temperature}});
    j["attacks"] = json::array();
    for (const auto& a : cfg.attacks)
        j["attacks"].push_back({{"kind", a.kind == AttackKind::RandomSearch ? "random-search"
                                                                            : "texture"},
                                {"name", a.name},
                                {"patches", a.config.n_patches},
                                {"area", a.config.area_fraction},
                                {"budget", a.config.budget},
                                {"targeted", a.config.targeted},
                                {"target", a.config.target}});
    return j.dump(2);
}

}  // namespace compdef
