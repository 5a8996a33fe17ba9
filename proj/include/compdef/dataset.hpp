#pragma once

#include "compdef/image.hpp"

namespace compdef {

// Directory with one subdirectory per class holding PNG/PPM images.
// Labels are assigned by sorted subdirectory name.
LabeledDataset load_image_folder(const std::string& path);

// Writes train/ test/ background/ image trees plus a manifest.json
// (schema version, class names, per-item path/label/split).
void save_dataset_tree(const std::string& dir, const LabeledDataset& train,
                       const LabeledDataset& test, const std::vector<Image>& background);

}  // namespace compdef
