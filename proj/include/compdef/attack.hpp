#pragma once

#include <functional>
#include <optional>
#include <variant>

#include "compdef/image.hpp"

namespace compdef {

// Black-box query surface: class probabilities for an image.
using QueryFn = std::function<std::vector<double>(const Image&)>;

struct TexturePayload {
    int texture_id = 0;  // index into TextureDictionary::textures
    int crop_row = 0, crop_col = 0;
};

struct PatchSpec {
    int row = 0, col = 0;  // top-left, pixels
    int side = 1;
    std::variant<std::vector<float>, TexturePayload> payload;  // RGB block or texture crop

    bool in_bounds(int img_h, int img_w) const {
        return row >= 0 && col >= 0 && side >= 1 && row + side <= img_h && col + side <= img_w;
    }
};

struct TextureDictionary {
    struct Texture {
        Image image;
        int source_class = 0;
    };
    std::vector<Texture> textures;
    std::vector<std::vector<int>> per_class;  // texture ids per class

    void validate(int min_side) const;
};

struct AttackConfig {
    int n_patches = 1;
    double area_fraction = 0.1;  // total occlusion area, all patches together
    int budget = 2000;           // query budget
    bool targeted = false;
    int target = 0;
    double p_location = 0.5;     // probability of a relocation move (pixel attack)
    double resample_hi = 0.4;    // initial fraction of patch pixels resampled
    int tpa_iterations = 40;     // outer restarts-or-sweeps for the texture attack
    int tpa_patience = 25;       // rejected moves before a restart
    std::uint64_t seed = 0;

    void validate() const;
};

struct AttackResult {
    bool success = false;
    int queries = 0;
    std::vector<PatchSpec> patches;
    Image adversarial;
    PatchMask mask;
    std::vector<double> best_loss_trace;  // one entry per query, non-increasing
    int final_label = -1;
};

// side = floor(sqrt(area_fraction * H * W / n_patches)), same for all patches.
int patch_geometry(double area_fraction, int n_patches, int img_h, int img_w);

// Pixels inside patches replaced by their payload; everything else is
// bit-identical to the input. Overlapping patches count once in the mask.
std::pair<Image, PatchMask> apply_patches(const Image& image,
                                          const std::vector<PatchSpec>& patches,
                                          const TextureDictionary* dict = nullptr);

// Untargeted: margin p(true) - max_{y != true} p(y); targeted: -p(target).
// The attack minimizes; negative margin (or target argmax) means success.
double attack_loss(const std::vector<double>& probs, int true_label, const AttackConfig& cfg);
bool attack_success(const std::vector<double>& probs, int true_label, const AttackConfig& cfg);

AttackResult sparse_rs_patch_attack(const QueryFn& query, const Image& image, int true_label,
                                    const AttackConfig& cfg);

// Per class: sampled crops clustered on color statistics, medoid crops
// kept. With a query function, candidate textures are ranked by how
// strongly they pull the model toward their class on neutral backgrounds.
TextureDictionary build_texture_dictionary(const LabeledDataset& dataset, int clusters_per_class,
                                           std::uint64_t seed, const QueryFn* query = nullptr,
                                           int crop_size = 0);

AttackResult texture_patch_attack(const QueryFn& query, const Image& image, int true_label,
                                  const TextureDictionary& dict, const AttackConfig& cfg);

}  // namespace compdef
