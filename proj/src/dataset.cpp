#include "compdef/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "compdef/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace compdef {

LabeledDataset load_image_folder(const std::string& path) {
    if (!fs::is_directory(path)) throw std::runtime_error("not a directory: " + path);
    std::vector<std::string> class_dirs;
    for (const auto& e : fs::directory_iterator(path))
        if (e.is_directory()) class_dirs.push_back(e.path().filename().string());
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty()) throw std::runtime_error("no class subdirectories in: " + path);

    LabeledDataset ds;
    ds.n_classes = static_cast<int>(class_dirs.size());
    ds.class_names = class_dirs;
    for (int label = 0; label < ds.n_classes; ++label) {
        std::vector<std::string> files;
        for (const auto& e : fs::directory_iterator(fs::path(path) / class_dirs[label])) {
            auto ext = e.path().extension().string();
            if (ext == ".png" || ext == ".ppm") files.push_back(e.path().string());
        }
        std::sort(files.begin(), files.end());
        if (files.empty())
            throw std::runtime_error("empty class directory: " + class_dirs[label]);
        for (const auto& f : files) {
            ds.images.push_back(read_image(f));
            ds.labels.push_back(label);
        }
    }
    ds.validate();
    return ds;
}

static json write_split(const std::string& dir, const std::string& split,
                        const LabeledDataset& ds) {
    json items = json::array();
    std::vector<int> counter(ds.n_classes, 0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        int label = ds.labels[i];
        fs::path cls_dir = fs::path(dir) / split / ds.class_names[label];
        fs::create_directories(cls_dir);
        char name[32];
        std::snprintf(name, sizeof(name), "img_%04d.png", counter[label]++);
        fs::path file = cls_dir / name;
        write_png(ds.images[i], file.string());
        items.push_back({{"path", fs::relative(file, dir).string()},
                         {"label", label},
                         {"split", split}});
    }
    return items;
}

void save_dataset_tree(const std::string& dir, const LabeledDataset& train,
                       const LabeledDataset& test, const std::vector<Image>& background) {
    train.validate();
    test.validate();
    fs::create_directories(dir);
    json manifest;
    manifest["format"] = "compdef-dataset";
    manifest["version"] = 1;
    manifest["class_names"] = train.class_names;
    json items = write_split(dir, "train", train);
    for (auto& it : write_split(dir, "test", test)) items.push_back(it);
    fs::path bg_dir = fs::path(dir) / "background";
    fs::create_directories(bg_dir);
    for (std::size_t i = 0; i < background.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "bg_%04d.png", static_cast<int>(i));
        fs::path file = bg_dir / name;
        write_png(background[i], file.string());
        items.push_back({{"path", fs::relative(file, dir).string()},
                         {"label", -1},
                         {"split", "background"}});
    }
    manifest["items"] = items;
    std::ofstream out(fs::path(dir) / "manifest.json");
    out << manifest.dump(2) << "\n";
    if (!out) throw std::runtime_error("failed to write manifest in " + dir);
}

}  // namespace compdef
