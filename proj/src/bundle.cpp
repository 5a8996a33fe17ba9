#include "compdef/bundle.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace compdef {

using nlohmann::json;

void ModelBundle::validate() const {
    if (version != kVersion) throw std::invalid_argument("bundle: unrecognized version");
    backbone.validate();
    const int D = backbone.n_filters;
    if (has_compnet) {
        dictionary.validate();
        if (dictionary.dim != D) throw std::invalid_argument("bundle: dictionary dim != backbone depth");
        const int K = static_cast<int>(dictionary.components.size());
        if (classes.empty()) throw std::invalid_argument("bundle: no class models");
        for (const auto& cls : classes)
            for (const auto& mix : cls.mixtures) {
                mix.validate();
                if (mix.n_components != K)
                    throw std::invalid_argument("bundle: mixture K != dictionary K");
            }
        occluder.validate();
        if (static_cast<int>(occluder.beta.size()) != K)
            throw std::invalid_argument("bundle: occluder K != dictionary K");
    }
    if (has_head && head.dim != D) throw std::invalid_argument("bundle: head dim != backbone depth");
    if (has_part && part.dim != D) throw std::invalid_argument("bundle: part dim != backbone depth");
    if (has_combiner) combiner.validate();
    if ((kind == ModelKind::CompNet || kind == ModelKind::CompNetFt || kind == ModelKind::Combined) &&
        !has_compnet)
        throw std::invalid_argument("bundle: kind requires a compositional model");
    if ((kind == ModelKind::Plain || kind == ModelKind::PatchAug || kind == ModelKind::Combined) &&
        !has_head)
        throw std::invalid_argument("bundle: kind requires a softmax head");
}

namespace {

class BlobWriter {
public:
    // returns {offset (floats), count} and records the array in the header
    void add(json& arrays, const std::string& name, const std::vector<double>& v) {
        arrays[name] = {{"offset", blob_.size()}, {"count", v.size()}};
        for (double x : v) blob_.push_back(static_cast<float>(x));
    }
    void write(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + path);
        static_assert(sizeof(float) == 4);
        for (float x : blob_) {
            unsigned char b[4];
            std::uint32_t u;
            std::memcpy(&u, &x, 4);
            b[0] = u & 0xff; b[1] = (u >> 8) & 0xff; b[2] = (u >> 16) & 0xff; b[3] = u >> 24;
            out.write(reinterpret_cast<const char*>(b), 4);
        }
    }

private:
    std::vector<float> blob_;
};

class BlobReader {
public:
    BlobReader(const std::string& path, const json& arrays) : arrays_(arrays) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot read " + path);
        std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)),
                                       std::istreambuf_iterator<char>());
        if (raw.size() % 4 != 0) throw std::runtime_error("bundle blob: truncated");
        blob_.resize(raw.size() / 4);
        for (std::size_t i = 0; i < blob_.size(); ++i) {
            std::uint32_t u = raw[4 * i] | (raw[4 * i + 1] << 8) |
                              (static_cast<std::uint32_t>(raw[4 * i + 2]) << 16) |
                              (static_cast<std::uint32_t>(raw[4 * i + 3]) << 24);
            std::memcpy(&blob_[i], &u, 4);
        }
    }
    std::vector<double> get(const std::string& name) const {
        if (!arrays_.contains(name))
            throw std::runtime_error("bundle: missing array '" + name + "'");
        std::size_t off = arrays_[name]["offset"], count = arrays_[name]["count"];
        if (off + count > blob_.size()) throw std::runtime_error("bundle: offset out of range");
        return std::vector<double>(blob_.begin() + off, blob_.begin() + off + count);
    }

private:
    const json& arrays_;
    std::vector<float> blob_;
};

void renorm_unit(std::vector<double>& v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n > 0) for (auto& x : v) x /= n;
}

void renorm_simplex(std::vector<double>& v, int rows, int k) {
    for (int r = 0; r < rows; ++r) {
        double s = 0.0;
        for (int j = 0; j < k; ++j) s += v[static_cast<std::size_t>(r) * k + j];
        if (s > 0)
            for (int j = 0; j < k; ++j) v[static_cast<std::size_t>(r) * k + j] /= s;
    }
}

}  // namespace

void save_bundle(const ModelBundle& bundle, const std::string& path) {
    bundle.validate();
    json j;
    j["schema"] = "compdef-model";
    j["version"] = bundle.version;
    j["kind"] = model_kind_name(bundle.kind);
    j["blob"] = path.substr(path.find_last_of('/') + 1) + ".bin";
    j["backbone"] = {{"n_filters", bundle.backbone.n_filters},
                     {"kernel", bundle.backbone.kernel},
                     {"conv_stride", bundle.backbone.conv_stride},
                     {"pool_window", bundle.backbone.pool_window},
                     {"pool_stride", bundle.backbone.pool_stride},
                     {"epsilon", bundle.backbone.epsilon}};
    json arrays = json::object();
    BlobWriter blob;
    blob.add(arrays, "backbone.filters", bundle.backbone.filters);

    if (bundle.has_compnet) {
        const int K = static_cast<int>(bundle.dictionary.components.size());
        j["dictionary"] = {{"K", K}, {"D", bundle.dictionary.dim}};
        std::vector<double> mu, sigma;
        for (const auto& comp : bundle.dictionary.components) {
            mu.insert(mu.end(), comp.mu.begin(), comp.mu.end());
            sigma.push_back(comp.sigma);
        }
        blob.add(arrays, "dictionary.mu", mu);
        blob.add(arrays, "dictionary.sigma", sigma);
        j["classes"] = json::array();
        for (std::size_t c = 0; c < bundle.classes.size(); ++c) {
            const auto& cls = bundle.classes[c];
            json jc = {{"class_id", cls.class_id}, {"mixtures", json::array()}};
            for (std::size_t m = 0; m < cls.mixtures.size(); ++m) {
                const auto& mix = cls.mixtures[m];
                jc["mixtures"].push_back({{"height", mix.height}, {"width", mix.width}});
                blob.add(arrays,
                         "class" + std::to_string(c) + ".mix" + std::to_string(m) + ".alpha",
                         mix.alpha);
            }
            j["classes"].push_back(jc);
        }
        blob.add(arrays, "occluder.beta", bundle.occluder.beta);
        j["head_options"] = {{"rho", bundle.head_opts.rho}};
        if (std::isfinite(bundle.head_opts.background_floor))
            j["head_options"]["background_floor"] = bundle.head_opts.background_floor;
    }
    if (bundle.has_head) {
        j["head"] = {{"n_classes", bundle.head.n_classes}, {"dim", bundle.head.dim}};
        blob.add(arrays, "head.weights", bundle.head.weights);
        blob.add(arrays, "head.bias", bundle.head.bias);
    }
    if (bundle.has_part) {
        j["part"] = {{"n_classes", bundle.part.n_classes}, {"dim", bundle.part.dim}};
        blob.add(arrays, "part.weights", bundle.part.weights);
    }
    if (bundle.has_combiner)
        j["combiner"] = {{"threshold", bundle.combiner.threshold},
                         {"temperature", bundle.combiner.temperature}};
    j["arrays"] = arrays;

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << '\n';
    blob.write(path + ".bin");
}

ModelBundle load_bundle(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    json j = json::parse(in);
    if (j.value("schema", "") != "compdef-model")
        throw std::runtime_error("bundle: not a model file");
    ModelBundle b;
    b.version = j.at("version").get<int>();
    if (b.version != ModelBundle::kVersion)
        throw std::runtime_error("bundle: unrecognized version " + std::to_string(b.version));
    b.kind = model_kind_from_name(j.at("kind").get<std::string>());
    const json& bk = j.at("backbone");
    b.backbone.n_filters = bk.at("n_filters");
    b.backbone.kernel = bk.at("kernel");
    b.backbone.conv_stride = bk.at("conv_stride");
    b.backbone.pool_window = bk.at("pool_window");
    b.backbone.pool_stride = bk.at("pool_stride");
    b.backbone.epsilon = bk.at("epsilon");

    std::string dir = path.find('/') == std::string::npos ? "" : path.substr(0, path.find_last_of('/') + 1);
    BlobReader blob(dir + j.at("blob").get<std::string>(), j.at("arrays"));
    b.backbone.filters = blob.get("backbone.filters");

    if (j.contains("dictionary")) {
        b.has_compnet = true;
        int K = j["dictionary"].at("K"), D = j["dictionary"].at("D");
        b.dictionary.dim = D;
        auto mu = blob.get("dictionary.mu");
        auto sigma = blob.get("dictionary.sigma");
        if (static_cast<int>(sigma.size()) != K || static_cast<int>(mu.size()) != K * D)
            throw std::runtime_error("bundle: dictionary array sizes inconsistent");
        for (int k = 0; k < K; ++k) {
            VmfComponent comp;
            comp.mu.assign(mu.begin() + static_cast<std::size_t>(k) * D,
                           mu.begin() + static_cast<std::size_t>(k + 1) * D);
            renorm_unit(comp.mu);  // undo float32 rounding
            comp.sigma = sigma[k];
            b.dictionary.components.push_back(std::move(comp));
        }
        std::size_t ci = 0;
        for (const json& jc : j.at("classes")) {
            ClassModel cls;
            cls.class_id = jc.at("class_id");
            std::size_t mi = 0;
            for (const json& jm : jc.at("mixtures")) {
                MixtureCoefficients mix;
                mix.height = jm.at("height");
                mix.width = jm.at("width");
                mix.n_components = K;
                mix.alpha = blob.get("class" + std::to_string(ci) + ".mix" + std::to_string(mi) +
                                     ".alpha");
                renorm_simplex(mix.alpha, mix.height * mix.width, K);
                cls.mixtures.push_back(std::move(mix));
                ++mi;
            }
            b.classes.push_back(std::move(cls));
            ++ci;
        }
        b.occluder.beta = blob.get("occluder.beta");
        renorm_simplex(b.occluder.beta, 1, K);
        b.head_opts.rho = j.at("head_options").at("rho");
        if (j["head_options"].contains("background_floor"))
            b.head_opts.background_floor = j["head_options"]["background_floor"];
    }
    if (j.contains("head")) {
        b.has_head = true;
        b.head.n_classes = j["head"].at("n_classes");
        b.head.dim = j["head"].at("dim");
        b.head.weights = blob.get("head.weights");
        b.head.bias = blob.get("head.bias");
    }
    if (j.contains("part")) {
        b.has_part = true;
        b.part.n_classes = j["part"].at("n_classes");
        b.part.dim = j["part"].at("dim");
        b.part.weights = blob.get("part.weights");
    }
    if (j.contains("combiner")) {
        b.has_combiner = true;
        b.combiner.threshold = j["combiner"].at("threshold");
        b.combiner.temperature = j["combiner"].at("temperature");
    }
    b.validate();
    return b;
}

ModelBundle bundle_from_model(const TrainedModel& model) {
    ModelBundle b;
    b.kind = model.kind;
    b.backbone = model.backbone;
    if (model.has_compnet) {
        b.has_compnet = true;
        b.dictionary = model.compnet.dictionary;
        b.classes = model.compnet.classes;
        b.occluder = model.compnet.occluder;
        b.head_opts = model.compnet.head;
    }
    if (model.has_head) {
        b.has_head = true;
        b.head = model.head;
    }
    if (model.kind == ModelKind::Combined) {
        b.has_combiner = true;
        b.combiner = model.combiner;
    }
    return b;
}

TrainedModel model_from_bundle(const ModelBundle& bundle) {
    bundle.validate();
    TrainedModel m;
    m.name = model_kind_name(bundle.kind);
    m.kind = bundle.kind;
    m.backbone = bundle.backbone;
    if (bundle.has_compnet) {
        m.has_compnet = true;
        m.compnet.backbone = bundle.backbone;
        m.compnet.dictionary = bundle.dictionary;
        m.compnet.classes = bundle.classes;
        m.compnet.occluder = bundle.occluder;
        m.compnet.head = bundle.head_opts;
    }
    if (bundle.has_head) {
        m.has_head = true;
        m.head = bundle.head;
    }
    if (bundle.has_combiner) m.combiner = bundle.combiner;
    return m;
}

}  // namespace compdef
