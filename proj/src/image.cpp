#include "compdef/image.hpp"

namespace compdef {

bool Image::valid() const {
    if (height < 16 || width < 16) return false;
    if (data.size() != static_cast<std::size_t>(height) * width * 3) return false;
    for (float v : data)
        if (!(v >= 0.0f && v <= 1.0f)) return false;
    return true;
}

std::size_t PatchMask::count() const {
    std::size_t n = 0;
    for (auto v : data) n += v ? 1 : 0;
    return n;
}

Image resize(const Image& img, int target) {
    if (target < 1) throw std::invalid_argument("resize: target must be >= 1");
    if (img.height == target && img.width == target) return img;
    Image out(target, target);
    // align-corners bilinear; degenerate 1-pixel axes map to coordinate 0
    const double sr = target > 1 ? double(img.height - 1) / (target - 1) : 0.0;
    const double sc = target > 1 ? double(img.width - 1) / (target - 1) : 0.0;
    for (int r = 0; r < target; ++r) {
        double fr = r * sr;
        int r0 = static_cast<int>(fr);
        int r1 = std::min(r0 + 1, img.height - 1);
        double wr = fr - r0;
        for (int c = 0; c < target; ++c) {
            double fc = c * sc;
            int c0 = static_cast<int>(fc);
            int c1 = std::min(c0 + 1, img.width - 1);
            double wc = fc - c0;
            for (int ch = 0; ch < 3; ++ch) {
                double v = (1 - wr) * ((1 - wc) * img.at(r0, c0, ch) + wc * img.at(r0, c1, ch)) +
                           wr * ((1 - wc) * img.at(r1, c0, ch) + wc * img.at(r1, c1, ch));
                out.at(r, c, ch) = static_cast<float>(clamp01(v));
            }
        }
    }
    return out;
}

void LabeledDataset::validate() const {
    if (images.empty()) throw std::invalid_argument("dataset: empty");
    if (images.size() != labels.size()) throw std::invalid_argument("dataset: size mismatch");
    if (n_classes < 1) throw std::invalid_argument("dataset: n_classes < 1");
    for (int lb : labels)
        if (lb < 0 || lb >= n_classes) throw std::invalid_argument("dataset: label out of range");
    for (std::size_t i = 1; i < images.size(); ++i)
        if (images[i].height != images[0].height || images[i].width != images[0].width)
            throw std::invalid_argument("dataset: inconsistent image dimensions");
}

}  // namespace compdef
