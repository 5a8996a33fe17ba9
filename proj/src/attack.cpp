#include "compdef/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace compdef {

void AttackConfig::validate() const {
    if (n_patches < 1) throw std::invalid_argument("attack: n_patches must be >= 1");
    if (!(area_fraction > 0.0 && area_fraction < 1.0))
        throw std::invalid_argument("attack: area fraction in (0, 1)");
    if (budget < 1) throw std::invalid_argument("attack: budget must be >= 1");
    if (!(p_location >= 0.0 && p_location <= 1.0))
        throw std::invalid_argument("attack: p_location in [0, 1]");
}

void TextureDictionary::validate(int min_side) const {
    if (textures.empty()) throw std::invalid_argument("texture dictionary: empty");
    for (const auto& t : textures)
        if (t.image.height < min_side || t.image.width < min_side)
            throw std::invalid_argument("texture dictionary: texture smaller than patch");
}

int patch_geometry(double area_fraction, int n_patches, int img_h, int img_w) {
    if (n_patches < 1) throw std::invalid_argument("patch_geometry: n_patches must be >= 1");
    if (!(area_fraction > 0.0 && area_fraction < 1.0))
        throw std::invalid_argument("patch_geometry: area fraction in (0, 1)");
    int side = static_cast<int>(
        std::floor(std::sqrt(area_fraction * img_h * img_w / n_patches)));
    if (side < 1) throw std::invalid_argument("patch_geometry: patch side would be 0");
    return std::min({side, img_h, img_w});
}

std::pair<Image, PatchMask> apply_patches(const Image& image,
                                          const std::vector<PatchSpec>& patches,
                                          const TextureDictionary* dict) {
    Image out = image;
    PatchMask mask(image.height, image.width);
    for (const auto& p : patches) {
        if (!p.in_bounds(image.height, image.width))
            throw std::invalid_argument("apply_patches: patch out of bounds");
        if (const auto* px = std::get_if<std::vector<float>>(&p.payload)) {
            if (px->size() != static_cast<std::size_t>(p.side) * p.side * 3)
                throw std::invalid_argument("apply_patches: payload size mismatch");
            for (int r = 0; r < p.side; ++r)
                for (int c = 0; c < p.side; ++c) {
                    mask.at(p.row + r, p.col + c) = 1;
                    for (int ch = 0; ch < 3; ++ch)
                        out.at(p.row + r, p.col + c, ch) =
                            (*px)[(static_cast<std::size_t>(r) * p.side + c) * 3 + ch];
                }
        } else {
            const auto& tp = std::get<TexturePayload>(p.payload);
            if (!dict) throw std::invalid_argument("apply_patches: texture payload needs a dictionary");
            if (tp.texture_id < 0 || tp.texture_id >= static_cast<int>(dict->textures.size()))
                throw std::invalid_argument("apply_patches: texture id out of range");
            const Image& tex = dict->textures[tp.texture_id].image;
            if (tp.crop_row < 0 || tp.crop_col < 0 || tp.crop_row + p.side > tex.height ||
                tp.crop_col + p.side > tex.width)
                throw std::invalid_argument("apply_patches: crop outside texture");
            for (int r = 0; r < p.side; ++r)
                for (int c = 0; c < p.side; ++c) {
                    mask.at(p.row + r, p.col + c) = 1;
                    for (int ch = 0; ch < 3; ++ch)
                        out.at(p.row + r, p.col + c, ch) =
                            tex.at(tp.crop_row + r, tp.crop_col + c, ch);
                }
        }
    }
    return {std::move(out), std::move(mask)};
}

double attack_loss(const std::vector<double>& probs, int true_label, const AttackConfig& cfg) {
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= -1e-9 && p <= 1.0 + 1e-9))
            throw std::invalid_argument("attack_loss: invalid probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw std::invalid_argument("attack_loss: probabilities do not sum to 1");
    if (cfg.targeted) {
        if (cfg.target < 0 || cfg.target >= static_cast<int>(probs.size()))
            throw std::invalid_argument("attack_loss: target out of range");
        return -probs[cfg.target];
    }
    if (true_label < 0 || true_label >= static_cast<int>(probs.size()))
        throw std::invalid_argument("attack_loss: true label out of range");
    double best_other = 0.0;
    for (std::size_t y = 0; y < probs.size(); ++y)
        if (static_cast<int>(y) != true_label) best_other = std::max(best_other, probs[y]);
    return probs[true_label] - best_other;
}

bool attack_success(const std::vector<double>& probs, int true_label, const AttackConfig& cfg) {
    int argmax = static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    if (cfg.targeted) return argmax == cfg.target;
    return argmax != true_label;
}

namespace {

// All model evaluations pass through here; the attacks cannot bypass the
// count or exceed the budget.
class CountingQuery {
public:
    CountingQuery(const QueryFn& fn, int budget) : fn_(fn), budget_(budget) {}
    bool spent() const { return count_ >= budget_; }
    int count() const { return count_; }
    std::vector<double> operator()(const Image& img) {
        if (spent()) throw std::logic_error("query budget exceeded");
        ++count_;
        return fn_(img);
    }

private:
    const QueryFn& fn_;
    int budget_;
    int count_ = 0;
};

// the 8 corners of the RGB cube
void corner_color(int idx, float* rgb) {
    rgb[0] = (idx & 1) ? 1.0f : 0.0f;
    rgb[1] = (idx & 2) ? 1.0f : 0.0f;
    rgb[2] = (idx & 4) ? 1.0f : 0.0f;
}

}  // namespace

AttackResult sparse_rs_patch_attack(const QueryFn& query, const Image& image, int true_label,
                                    const AttackConfig& cfg) {
    cfg.validate();
    const int H = image.height, W = image.width;
    const int side = patch_geometry(cfg.area_fraction, cfg.n_patches, H, W);
    Rng rng(mix_seed(cfg.seed, 0x5ba55eull));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::uniform_int_distribution<int> pick_row(0, H - side), pick_col(0, W - side);
    std::uniform_int_distribution<int> pick_corner(0, 7);
    std::uniform_int_distribution<int> pick_patch(0, cfg.n_patches - 1);
    const int n_px = side * side;

    CountingQuery counted(query, cfg.budget);
    auto eval = [&](const std::vector<PatchSpec>& s) {
        return counted(apply_patches(image, s).first);
    };

    auto random_state = [&]() {
        std::vector<PatchSpec> s(cfg.n_patches);
        for (auto& p : s) {
            p.side = side;
            p.row = pick_row(rng);
            p.col = pick_col(rng);
            std::vector<float> px(static_cast<std::size_t>(n_px) * 3);
            for (int i = 0; i < n_px; ++i) corner_color(pick_corner(rng), &px[i * 3]);
            p.payload = std::move(px);
        }
        return s;
    };

    // the hill climb stagnates well before typical budgets are exhausted, so
    // restart from a fresh random state after a stall and keep the global best
    const int kStallLimit = 300;
    AttackResult res;
    std::vector<PatchSpec> state = random_state();
    std::vector<double> best_probs = eval(state);
    double best_loss = attack_loss(best_probs, true_label, cfg);
    std::vector<PatchSpec> best_state = state;
    double cur_loss = best_loss;
    res.best_loss_trace.push_back(best_loss);
    bool success = attack_success(best_probs, true_label, cfg);
    int since_improve = 0;
    int segment_start = 0;

    while (!success && !counted.spent()) {
        if (since_improve >= kStallLimit) {
            state = random_state();
            auto probs = eval(state);
            cur_loss = attack_loss(probs, true_label, cfg);
            since_improve = 0;
            segment_start = counted.count();
            if (cur_loss < best_loss) {
                best_loss = cur_loss;
                best_probs = probs;
                best_state = state;
                success = attack_success(best_probs, true_label, cfg);
            }
            res.best_loss_trace.push_back(best_loss);
            continue;
        }
        double t = static_cast<double>(counted.count() - segment_start) /
                   std::max(1, cfg.budget - segment_start);
        std::vector<PatchSpec> cand = state;
        int pi = pick_patch(rng);
        if (uni(rng) < cfg.p_location) {
            // relocate within a linearly decaying radius
            int max_r = std::max(std::max(H, W) - side, 1);
            int radius = std::max(1, static_cast<int>(std::lround((1.0 - t) * max_r)));
            std::uniform_int_distribution<int> jitter(-radius, radius);
            cand[pi].row = std::clamp(state[pi].row + jitter(rng), 0, H - side);
            cand[pi].col = std::clamp(state[pi].col + jitter(rng), 0, W - side);
        } else {
            // re-sample a decaying fraction of one patch's pixels to a single
            // corner color; block recoloring survives downstream pooling far
            // better than iid pixel noise
            double frac = cfg.resample_hi * (1.0 - t);
            int m = std::max(1, static_cast<int>(std::lround(frac * n_px)));
            auto& px = std::get<std::vector<float>>(cand[pi].payload);
            std::uniform_int_distribution<int> pick_px(0, n_px - 1);
            int color = pick_corner(rng);
            int bs = std::max(1, static_cast<int>(std::lround(std::sqrt(double(m)))));
            std::uniform_int_distribution<int> pick_origin(0, std::max(0, side - bs));
            int r0 = pick_origin(rng), c0 = pick_origin(rng);
            for (int rr = 0; rr < bs; ++rr)
                for (int cc = 0; cc < bs; ++cc)
                    corner_color(color, &px[(std::min(r0 + rr, side - 1) * side +
                                             std::min(c0 + cc, side - 1)) * 3]);
        }
        auto probs = eval(cand);
        double loss = attack_loss(probs, true_label, cfg);
        if (loss < cur_loss) {  // accept strictly improving moves only
            cur_loss = loss;
            state = std::move(cand);
            since_improve = 0;
            if (loss < best_loss) {
                best_loss = loss;
                best_probs = probs;
                best_state = state;
                success = attack_success(best_probs, true_label, cfg);
            }
        } else {
            ++since_improve;
        }
        res.best_loss_trace.push_back(best_loss);
    }

    res.success = success;
    res.queries = counted.count();
    res.patches = best_state;
    auto [adv, mask] = apply_patches(image, best_state);
    res.adversarial = std::move(adv);
    res.mask = std::move(mask);
    res.final_label = static_cast<int>(
        std::max_element(best_probs.begin(), best_probs.end()) - best_probs.begin());
    return res;
}

// ---- texture dictionary ----

namespace {

struct CropStats {
    double v[6];  // per-channel mean and stddev
};

CropStats crop_stats(const Image& img, int r0, int c0, int size) {
    CropStats s{};
    int n = size * size;
    for (int ch = 0; ch < 3; ++ch) {
        double mean = 0.0, sq = 0.0;
        for (int r = 0; r < size; ++r)
            for (int c = 0; c < size; ++c) {
                double x = img.at(r0 + r, c0 + c, ch);
                mean += x;
                sq += x * x;
            }
        mean /= n;
        s.v[ch] = mean;
        s.v[3 + ch] = std::sqrt(std::max(0.0, sq / n - mean * mean));
    }
    return s;
}

double stat_dist2(const CropStats& a, const CropStats& b) {
    double d = 0.0;
    for (int i = 0; i < 6; ++i) d += (a.v[i] - b.v[i]) * (a.v[i] - b.v[i]);
    return d;
}

// small Euclidean k-means on crop statistics
std::vector<int> kmeans_stats(const std::vector<CropStats>& pts, int k, Rng& rng) {
    const int n = static_cast<int>(pts.size());
    std::uniform_int_distribution<int> pick(0, n - 1);
    std::vector<CropStats> centers;
    centers.push_back(pts[pick(rng)]);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    while (static_cast<int>(centers.size()) < k) {
        std::vector<double> d2(n);
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centers) best = std::min(best, stat_dist2(pts[i], c));
            d2[i] = best;
            total += best;
        }
        double r = uni(rng) * total, acc = 0.0;
        int chosen = n - 1;
        for (int i = 0; i < n; ++i) {
            acc += d2[i];
            if (acc >= r) { chosen = i; break; }
        }
        centers.push_back(pts[chosen]);
    }
    std::vector<int> assign(n, 0);
    for (int iter = 0; iter < 25; ++iter) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int best_k = 0;
            double best = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                double d = stat_dist2(pts[i], centers[c]);
                if (d < best) { best = d; best_k = c; }
            }
            if (assign[i] != best_k) { assign[i] = best_k; changed = true; }
        }
        if (!changed && iter > 0) break;
        for (int c = 0; c < k; ++c) {
            CropStats mean{};
            int cnt = 0;
            for (int i = 0; i < n; ++i)
                if (assign[i] == c) {
                    for (int j = 0; j < 6; ++j) mean.v[j] += pts[i].v[j];
                    ++cnt;
                }
            if (cnt == 0) continue;
            for (int j = 0; j < 6; ++j) mean.v[j] /= cnt;
            centers[c] = mean;
        }
    }
    return assign;
}

}  // namespace

TextureDictionary build_texture_dictionary(const LabeledDataset& dataset, int clusters_per_class,
                                           std::uint64_t seed, const QueryFn* query,
                                           int crop_size) {
    dataset.validate();
    if (clusters_per_class < 1)
        throw std::invalid_argument("build_texture_dictionary: clusters_per_class >= 1");
    const int H = dataset.images[0].height, W = dataset.images[0].width;
    if (crop_size <= 0) crop_size = std::max(8, std::min(H, W) * 3 / 4);
    if (crop_size > std::min(H, W))
        throw std::invalid_argument("build_texture_dictionary: crop larger than images");

    TextureDictionary dict;
    dict.per_class.resize(dataset.n_classes);
    Rng rng(mix_seed(seed, 0x7e47u));
    const int candidates = query ? 2 * clusters_per_class : clusters_per_class;

    for (int cls = 0; cls < dataset.n_classes; ++cls) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < dataset.size(); ++i)
            if (dataset.labels[i] == cls) members.push_back(i);
        if (members.empty())
            throw std::invalid_argument("build_texture_dictionary: class with no images");

        const int n_crops = std::max(24, candidates * 8);
        std::vector<Image> crops;
        std::vector<CropStats> stats;
        std::uniform_int_distribution<int> pick_img(0, static_cast<int>(members.size()) - 1);
        std::uniform_int_distribution<int> pr(0, H - crop_size), pc(0, W - crop_size);
        for (int j = 0; j < n_crops; ++j) {
            const Image& src = dataset.images[members[pick_img(rng)]];
            int r0 = pr(rng), c0 = pc(rng);
            Image crop(crop_size, crop_size);
            for (int r = 0; r < crop_size; ++r)
                for (int c = 0; c < crop_size; ++c)
                    for (int ch = 0; ch < 3; ++ch)
                        crop.at(r, c, ch) = src.at(r0 + r, c0 + c, ch);
            stats.push_back(crop_stats(crop, 0, 0, crop_size));
            crops.push_back(std::move(crop));
        }
        int k = std::min(candidates, n_crops);
        auto assign = kmeans_stats(stats, k, rng);

        // medoid per cluster: crop closest to the cluster mean statistics
        std::vector<int> medoids;
        for (int c = 0; c < k; ++c) {
            CropStats mean{};
            int cnt = 0;
            for (int i = 0; i < n_crops; ++i)
                if (assign[i] == c) {
                    for (int j = 0; j < 6; ++j) mean.v[j] += stats[i].v[j];
                    ++cnt;
                }
            if (cnt == 0) continue;
            for (int j = 0; j < 6; ++j) mean.v[j] /= cnt;
            int best = -1;
            double best_d = std::numeric_limits<double>::infinity();
            for (int i = 0; i < n_crops; ++i)
                if (assign[i] == c && stat_dist2(stats[i], mean) < best_d) {
                    best_d = stat_dist2(stats[i], mean);
                    best = i;
                }
            if (best >= 0) medoids.push_back(best);
        }

        if (query && static_cast<int>(medoids.size()) > clusters_per_class) {
            // rank by how strongly the texture pulls a neutral image
            // toward this class when pasted at the center
            Image neutral(H, W, 0.5f);
            std::vector<std::pair<double, int>> ranked;
            for (int idx : medoids) {
                Image probe = neutral;
                int paste = std::min(crop_size, std::min(H, W) / 2);
                int r0 = (H - paste) / 2, c0 = (W - paste) / 2;
                for (int r = 0; r < paste; ++r)
                    for (int c = 0; c < paste; ++c)
                        for (int ch = 0; ch < 3; ++ch)
                            probe.at(r0 + r, c0 + c, ch) = crops[idx].at(r, c, ch);
                auto probs = (*query)(probe);
                ranked.push_back({probs[cls], idx});
            }
            std::stable_sort(ranked.begin(), ranked.end(),
                             [](const auto& a, const auto& b) { return a.first > b.first; });
            medoids.clear();
            for (int j = 0; j < clusters_per_class; ++j) medoids.push_back(ranked[j].second);
        }

        for (int idx : medoids) {
            dict.per_class[cls].push_back(static_cast<int>(dict.textures.size()));
            dict.textures.push_back({crops[idx], cls});
        }
    }
    return dict;
}

AttackResult texture_patch_attack(const QueryFn& query, const Image& image, int true_label,
                                  const TextureDictionary& dict, const AttackConfig& cfg) {
    cfg.validate();
    const int H = image.height, W = image.width;
    const int side = patch_geometry(cfg.area_fraction, cfg.n_patches, H, W);
    dict.validate(side);

    // targeted mode restricts textures to the target class's list;
    // untargeted prefers textures from other classes
    std::vector<int> allowed;
    if (cfg.targeted) {
        if (cfg.target < 0 || cfg.target >= static_cast<int>(dict.per_class.size()))
            throw std::invalid_argument("texture_patch_attack: target out of range");
        allowed = dict.per_class[cfg.target];
    } else {
        for (std::size_t i = 0; i < dict.textures.size(); ++i)
            if (dict.textures[i].source_class != true_label) allowed.push_back(static_cast<int>(i));
        if (allowed.empty())
            for (std::size_t i = 0; i < dict.textures.size(); ++i)
                allowed.push_back(static_cast<int>(i));
    }
    if (allowed.empty()) throw std::invalid_argument("texture_patch_attack: no usable textures");

    Rng rng(mix_seed(cfg.seed, 0x7e47a77ull));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::uniform_int_distribution<int> pick_tex(0, static_cast<int>(allowed.size()) - 1);
    std::uniform_int_distribution<int> pick_patch(0, cfg.n_patches - 1);

    auto random_state = [&]() {
        std::vector<PatchSpec> s(cfg.n_patches);
        for (auto& p : s) {
            p.side = side;
            p.row = std::uniform_int_distribution<int>(0, H - side)(rng);
            p.col = std::uniform_int_distribution<int>(0, W - side)(rng);
            TexturePayload tp;
            tp.texture_id = allowed[pick_tex(rng)];
            const Image& tex = dict.textures[tp.texture_id].image;
            tp.crop_row = std::uniform_int_distribution<int>(0, tex.height - side)(rng);
            tp.crop_col = std::uniform_int_distribution<int>(0, tex.width - side)(rng);
            p.payload = tp;
        }
        return s;
    };

    CountingQuery counted(query, cfg.budget);
    AttackResult res;
    double global_best = std::numeric_limits<double>::infinity();
    std::vector<PatchSpec> global_state;
    std::vector<double> global_probs;
    bool success = false;

    auto eval = [&](const std::vector<PatchSpec>& s) {
        auto probs = counted(apply_patches(image, s, &dict).first);
        double loss = attack_loss(probs, true_label, cfg);
        if (loss < global_best) {
            global_best = loss;
            global_state = s;
            global_probs = probs;
            success = attack_success(probs, true_label, cfg);
        }
        res.best_loss_trace.push_back(global_best);
        return loss;
    };

    for (int outer = 0; outer < cfg.tpa_iterations && !success && !counted.spent(); ++outer) {
        std::vector<PatchSpec> cur = random_state();
        double cur_loss = eval(cur);
        int stall = 0;
        while (!success && !counted.spent() && stall < cfg.tpa_patience) {
            std::vector<PatchSpec> cand = cur;
            PatchSpec& p = cand[pick_patch(rng)];
            auto& tp = std::get<TexturePayload>(p.payload);
            double move = uni(rng);
            if (move < 1.0 / 3.0) {
                tp.texture_id = allowed[pick_tex(rng)];
                const Image& tex = dict.textures[tp.texture_id].image;
                tp.crop_row = std::min(tp.crop_row, tex.height - side);
                tp.crop_col = std::min(tp.crop_col, tex.width - side);
            } else if (move < 2.0 / 3.0) {
                const Image& tex = dict.textures[tp.texture_id].image;
                std::uniform_int_distribution<int> j(-side / 2 - 1, side / 2 + 1);
                tp.crop_row = std::clamp(tp.crop_row + j(rng), 0, tex.height - side);
                tp.crop_col = std::clamp(tp.crop_col + j(rng), 0, tex.width - side);
            } else {
                std::uniform_int_distribution<int> j(-H / 4 - 1, H / 4 + 1);
                p.row = std::clamp(p.row + j(rng), 0, H - side);
                p.col = std::clamp(p.col + j(rng), 0, W - side);
            }
            double loss = eval(cand);
            if (loss < cur_loss) {
                cur_loss = loss;
                cur = std::move(cand);
                stall = 0;
            } else {
                ++stall;
            }
        }
    }

    res.success = success;
    res.queries = counted.count();
    res.patches = global_state;
    auto [adv, mask] = apply_patches(image, global_state, &dict);
    res.adversarial = std::move(adv);
    res.mask = std::move(mask);
    res.final_label = static_cast<int>(
        std::max_element(global_probs.begin(), global_probs.end()) - global_probs.begin());
    return res;
}

}  // namespace compdef
