#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "compdef/common.hpp"

namespace compdef {

// RGB image, values in [0,1], channel-last row-major. The layout is part
// of the serialization contract.
struct Image {
    int height = 0;
    int width = 0;
    std::vector<float> data;  // height * width * 3

    Image() = default;
    Image(int h, int w, float fill = 0.0f)
        : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, fill) {}

    float& at(int r, int c, int ch) {
        return data[(static_cast<std::size_t>(r) * width + c) * 3 + ch];
    }
    float at(int r, int c, int ch) const {
        return data[(static_cast<std::size_t>(r) * width + c) * 3 + ch];
    }
    bool valid() const;
};

// Boolean grid at image resolution marking adversarially modified pixels.
struct PatchMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;  // height * width, 0/1

    PatchMask() = default;
    PatchMask(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w, 0) {}

    std::uint8_t& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
    std::uint8_t at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }
    std::size_t count() const;
};

// Bilinear resize to target x target, values clamped to [0,1].
Image resize(const Image& img, int target);

struct LabeledDataset {
    std::vector<Image> images;
    std::vector<int> labels;
    int n_classes = 0;
    std::vector<std::string> class_names;

    std::size_t size() const { return images.size(); }
    void validate() const;  // throws on any invariant violation
};

}  // namespace compdef
