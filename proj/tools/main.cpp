#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "compdef/bundle.hpp"
#include "compdef/dataset.hpp"
#include "compdef/image_io.hpp"

namespace fs = std::filesystem;
using namespace compdef;
using nlohmann::json;

namespace {

std::vector<Image> load_background_dir(const std::string& dir) {
    std::vector<Image> out;
    if (!fs::is_directory(dir)) return out;
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        auto ext = e.path().extension().string();
        if (ext == ".png" || ext == ".ppm") files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) out.push_back(read_image(f));
    return out;
}

int cmd_synth_data(const std::string& out, std::uint64_t seed, int classes, int size,
                   double clutter, bool fine_grained, int per_class, int test_per_class,
                   int n_background) {
    SyntheticSpec spec;
    spec.n_classes = classes;
    spec.image_size = size;
    spec.clutter = clutter;
    spec.fine_grained = fine_grained;
    spec.seed = seed;
    SplitDataset splits = generate_synthetic_splits(spec, per_class, test_per_class);
    std::vector<Image> bg = background_corpus(spec, mix_seed(seed, 0xb6), n_background);
    save_dataset_tree(out, splits.train, splits.test, bg);
    std::cout << "wrote " << splits.train.size() << " train / " << splits.test.size()
              << " test / " << bg.size() << " background images to " << out << "\n";
    return 0;
}

int cmd_train(const std::string& data, const std::string& kind_name, const std::string& out,
              std::uint64_t seed, int filters, int kernel, int dict_size, int mixtures,
              int em_iters, double aug_area, double threshold, double temperature) {
    LabeledDataset train = load_image_folder(data + "/train");
    std::vector<Image> background = load_background_dir(data + "/background");

    ModelSpec ms;
    ms.kind = model_kind_from_name(kind_name);
    ms.combiner.threshold = threshold;
    ms.combiner.temperature = temperature;

    bool needs_bg = ms.kind != ModelKind::Plain && ms.kind != ModelKind::PatchAug;
    if (needs_bg && background.empty())
        throw std::runtime_error("--kind " + kind_name +
                                 " needs a background corpus: " + data +
                                 "/background is empty or missing");

    ExperimentConfig cfg;
    cfg.seed = seed;
    cfg.backbone_filters = filters;
    cfg.backbone_kernel = kernel;
    cfg.compnet.K = dict_size;
    cfg.compnet.M = mixtures;
    cfg.compnet.em_iters = em_iters;
    cfg.patch_aug_area = aug_area;
    cfg.models = {ms};

    TrainedModel model = train_roster(cfg, train, background)[0];
    double train_acc = accuracy(model.predict_fn(), train);
    std::cout << "trained " << kind_name << ": train accuracy " << train_acc << "\n";
    save_bundle(bundle_from_model(model), out);
    std::cout << "wrote " << out << " and " << out << ".bin\n";
    return 0;
}

json patch_to_json(const PatchSpec& p) {
    json j = {{"row", p.row}, {"col", p.col}, {"side", p.side}};
    if (const auto* tp = std::get_if<TexturePayload>(&p.payload))
        j["texture"] = {{"id", tp->texture_id}, {"crop_row", tp->crop_row},
                        {"crop_col", tp->crop_col}};
    return j;
}

int cmd_attack(const std::string& model_path, const std::string& data,
               const std::string& attack_kind, const std::string& out, std::uint64_t seed,
               double area, int patches, int budget, bool targeted, int target, int limit) {
    TrainedModel model = model_from_bundle(load_bundle(model_path));
    LabeledDataset test = load_image_folder(data + "/test");

    AttackConfig ac;
    ac.area_fraction = area;
    ac.n_patches = patches;
    ac.budget = budget;
    ac.targeted = targeted;
    ac.target = target;

    TextureDictionary dict;
    if (attack_kind == "texture") {
        LabeledDataset train = load_image_folder(data + "/train");
        int side = patch_geometry(area, patches, test.images[0].height, test.images[0].width);
        int crop = std::min(std::min(test.images[0].height, test.images[0].width),
                            std::max(test.images[0].height * 3 / 4, side));
        dict = build_texture_dictionary(train, 3, mix_seed(seed, 0x7e), nullptr, crop);
    } else if (attack_kind != "random-search") {
        throw CLI::ValidationError("--attack", "unknown attack kind " + attack_kind);
    }

    fs::create_directories(out);
    QueryFn query = model.query_fn();
    json results = json::array();
    int attacked = 0;
    for (std::size_t i = 0; i < test.size() && attacked < limit; ++i) {
        if (model.predict(test.images[i]) != test.labels[i]) continue;  // clean-correct only
        ac.seed = mix_seed(seed, i + 1);
        AttackResult res = attack_kind == "texture"
                               ? texture_patch_attack(query, test.images[i], test.labels[i], dict, ac)
                               : sparse_rs_patch_attack(query, test.images[i], test.labels[i], ac);
        char tag[32];
        std::snprintf(tag, sizeof tag, "%04zu", i);
        write_png(res.adversarial, out + "/adv_" + tag + ".png");
        write_mask_png(res.mask, out + "/mask_" + tag + ".png");
        json jr = {{"image", static_cast<int>(i)},
                   {"true_label", test.labels[i]},
                   {"success", res.success},
                   {"queries", res.queries},
                   {"final_label", res.final_label},
                   {"trace", res.best_loss_trace},
                   {"patches", json::array()}};
        for (const auto& p : res.patches) jr["patches"].push_back(patch_to_json(p));
        results.push_back(jr);
        ++attacked;
    }
    int succ = 0;
    for (const auto& r : results) succ += r["success"].get<bool>() ? 1 : 0;
    json summary = {{"schema", "compdef-attack-results"},
                    {"version", 1},
                    {"seed", seed},
                    {"attack", attack_kind},
                    {"attacked", attacked},
                    {"successes", succ},
                    {"results", results}};
    std::ofstream jf(out + "/results.json");
    jf << summary.dump(2) << '\n';
    std::cout << "attacked " << attacked << " images, " << succ << " successes; results in "
              << out << "\n";
    return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& out) {
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot read " + config_path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ExperimentConfig cfg = parse_experiment_config(text);
    Report report = run_experiment(cfg);
    fs::create_directories(out);
    write_report(report, out);
    std::cout << report.to_csv();
    std::cout << "report written to " << out << "\n";
    return 0;
}

int cmd_visualize(const std::string& model_path, const std::string& image_path,
                  const std::string& out, int label) {
    TrainedModel model = model_from_bundle(load_bundle(model_path));
    if (!model.has_compnet)
        throw std::runtime_error("visualize needs a model with a compositional branch");
    Image img = read_image(image_path);
    if (label < 0) label = model.compnet.predict(img).label;
    OcclusionMap map = model.compnet.score_map_for(img, label);
    std::vector<double> heat = paint_scores(map, model.compnet.backbone, img.height, img.width);

    double hi = 0.0;
    for (double s : heat) hi = std::max(hi, s);
    if (hi <= 0.0) hi = 1.0;

    // input | heat overlay, side by side
    Image canvas(img.height, img.width * 2);
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c) {
            double s = heat[static_cast<std::size_t>(r) * img.width + c];
            float b = s <= 0.0 ? 0.0f : static_cast<float>(std::min(1.0, s / hi));
            for (int ch = 0; ch < 3; ++ch) {
                canvas.at(r, c, ch) = img.at(r, c, ch);
                // warm monotone ramp over a dimmed copy of the input
                float tint = ch == 0 ? b : (ch == 1 ? 0.6f * b : 0.15f * b);
                canvas.at(r, img.width + c, ch) =
                    clamp01(0.2f * img.at(r, c, ch) + 0.8f * tint);
            }
        }
    write_image(canvas, out);
    std::cout << "wrote " << out << " (class " << label << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"compositional classifier, patch attacks, and evaluation harness"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    app.add_option("--seed", seed, "global seed")->capture_default_str();

    // synth-data
    auto* synth = app.add_subcommand("synth-data", "generate a synthetic dataset tree");
    int classes = 8, size = 64, per_class = 30, test_per_class = 10, n_background = 24;
    double clutter = 0.5;
    bool fine_grained = false;
    std::string synth_out;
    synth->add_option("--classes", classes, "number of classes")->capture_default_str();
    synth->add_option("--size", size, "image side in pixels")->capture_default_str();
    synth->add_option("--clutter", clutter, "background clutter in [0,1]")->capture_default_str();
    synth->add_flag("--fine-grained", fine_grained, "classes differ only in a small glyph");
    synth->add_option("--per-class", per_class, "training images per class")->capture_default_str();
    synth->add_option("--test-per-class", test_per_class, "test images per class")
        ->capture_default_str();
    synth->add_option("--background", n_background, "background corpus size")
        ->capture_default_str();
    synth->add_option("--out", synth_out, "output directory")->required();

    // train
    auto* train = app.add_subcommand("train", "train a model and write a bundle");
    std::string train_data, kind = "compnet", train_out;
    int filters = 16, kernel = 5, dict_size = 32, mixtures = 1, em_iters = 8;
    double aug_area = 0.05, threshold = 0.95, temperature = 1.0;
    train->add_option("--data", train_data, "dataset directory (from synth-data)")->required();
    train->add_option("--kind", kind, "plain | patch-aug | compnet | compnet-ft | combined")
        ->capture_default_str();
    train->add_option("--filters", filters, "backbone filter count")->capture_default_str();
    train->add_option("--kernel", kernel, "backbone kernel size (odd)")->capture_default_str();
    train->add_option("--dict-size", dict_size, "vMF dictionary size")->capture_default_str();
    train->add_option("--mixtures", mixtures, "mixtures per class")->capture_default_str();
    train->add_option("--em-iters", em_iters, "EM iterations per class")->capture_default_str();
    train->add_option("--area", aug_area, "patch-augmentation area fraction")
        ->capture_default_str();
    train->add_option("--threshold", threshold, "combiner confidence threshold")
        ->capture_default_str();
    train->add_option("--temperature", temperature, "combiner softmax temperature")
        ->capture_default_str();
    train->add_option("--out", train_out, "bundle path")->required();

    // attack
    auto* attack = app.add_subcommand("attack", "attack a trained model");
    std::string attack_model, attack_data, attack_kind = "random-search", attack_out;
    double area = 0.1;
    int patches = 1, budget = 2000, target = 0, limit = 20;
    bool targeted = false;
    attack->add_option("--model", attack_model, "bundle path")->required();
    attack->add_option("--data", attack_data, "dataset directory")->required();
    attack->add_option("--attack", attack_kind, "random-search | texture")->capture_default_str();
    attack->add_option("--area", area, "total occlusion area fraction")->capture_default_str();
    attack->add_option("--patches", patches, "number of patches")->capture_default_str();
    attack->add_option("--budget", budget, "query budget")->capture_default_str();
    attack->add_flag("--targeted", targeted, "targeted attack");
    attack->add_option("--target", target, "target label for --targeted")->capture_default_str();
    attack->add_option("--limit", limit, "max images to attack")->capture_default_str();
    attack->add_option("--out", attack_out, "output directory")->required();

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "run an experiment config");
    std::string eval_config, eval_out;
    evaluate->add_option("--config", eval_config, "experiment JSON path")->required();
    evaluate->add_option("--out", eval_out, "output directory")->required();

    // visualize
    auto* visualize = app.add_subcommand("visualize", "occlusion-score heat map, side by side");
    std::string vis_model, vis_image, vis_out;
    int vis_label = -1;
    visualize->add_option("--model", vis_model, "bundle path")->required();
    visualize->add_option("--image", vis_image, "input image (png/ppm)")->required();
    visualize->add_option("--label", vis_label, "class to score (default: predicted)")
        ->capture_default_str();
    visualize->add_option("--out", vis_out, "output image path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed())
            return cmd_synth_data(synth_out, seed, classes, size, clutter, fine_grained,
                                  per_class, test_per_class, n_background);
        if (train->parsed())
            return cmd_train(train_data, kind, train_out, seed, filters, kernel, dict_size,
                             mixtures, em_iters, aug_area, threshold, temperature);
        if (attack->parsed())
            return cmd_attack(attack_model, attack_data, attack_kind, attack_out, seed, area,
                              patches, budget, targeted, target, limit);
        if (evaluate->parsed()) return cmd_evaluate(eval_config, eval_out);
        if (visualize->parsed()) return cmd_visualize(vis_model, vis_image, vis_out, vis_label);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
