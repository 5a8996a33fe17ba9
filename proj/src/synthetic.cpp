#include "compdef/synthetic.hpp"

namespace compdef {

namespace {

struct Rgb {
    float r, g, b;
};

const Rgb kClassColors[] = {
    {0.90f, 0.15f, 0.15f}, {0.15f, 0.80f, 0.20f}, {0.20f, 0.30f, 0.95f},
    {0.95f, 0.85f, 0.10f}, {0.85f, 0.20f, 0.85f}, {0.10f, 0.85f, 0.85f},
    {0.95f, 0.55f, 0.10f}, {0.95f, 0.95f, 0.95f}, {0.55f, 0.25f, 0.05f},
    {0.45f, 0.10f, 0.60f}, {0.65f, 0.75f, 0.15f}, {0.10f, 0.45f, 0.35f},
};
constexpr int kNumColors = 12;

const char* kShapeNames[] = {"circle",  "square", "triangle", "diamond", "cross",  "ring",
                             "bars",    "saltire", "pentagon", "halfmoon", "hourglass", "frame"};
constexpr int kNumShapes = 12;

// 5x5 glyph bitmaps for the fine-grained variant (digit-like, distinct).
const std::uint8_t kGlyphs[12][5] = {
    {0b01110, 0b10001, 0b10001, 0b10001, 0b01110},  // 0
    {0b00100, 0b01100, 0b00100, 0b00100, 0b01110},  // 1
    {0b01110, 0b00001, 0b01110, 0b10000, 0b11111},  // 2
    {0b11110, 0b00001, 0b00110, 0b00001, 0b11110},  // 3
    {0b10010, 0b10010, 0b11111, 0b00010, 0b00010},  // 4
    {0b11111, 0b10000, 0b11110, 0b00001, 0b11110},  // 5
    {0b01110, 0b10000, 0b11110, 0b10001, 0b01110},  // 6
    {0b11111, 0b00010, 0b00100, 0b01000, 0b01000},  // 7
    {0b01110, 0b10001, 0b01110, 0b10001, 0b01110},  // 8
    {0b01110, 0b10001, 0b01111, 0b00001, 0b01110},  // 9
    {0b10001, 0b11011, 0b10101, 0b10001, 0b10001},  // M
    {0b11111, 0b10000, 0b11100, 0b10000, 0b10000},  // F
};

// Smooth low-frequency color field plus clutter blobs. Muted so class
// objects stay the most saturated content in the image.
void render_background(Image& img, double clutter, Rng& rng) {
    const int S = img.height;
    const int G = 5;  // coarse noise grid
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    float grid[G][G][3];
    for (int r = 0; r < G; ++r)
        for (int c = 0; c < G; ++c)
            for (int ch = 0; ch < 3; ++ch)
                grid[r][c][ch] = static_cast<float>(0.35 + 0.3 * uni(rng));
    for (int r = 0; r < S; ++r)
        for (int c = 0; c < S; ++c) {
            double fr = double(r) / (S - 1) * (G - 1);
            double fc = double(c) / (S - 1) * (G - 1);
            int r0 = std::min(static_cast<int>(fr), G - 2);
            int c0 = std::min(static_cast<int>(fc), G - 2);
            double wr = fr - r0, wc = fc - c0;
            for (int ch = 0; ch < 3; ++ch) {
                double v = (1 - wr) * ((1 - wc) * grid[r0][c0][ch] + wc * grid[r0][c0 + 1][ch]) +
                           wr * ((1 - wc) * grid[r0 + 1][c0][ch] + wc * grid[r0 + 1][c0 + 1][ch]);
                img.at(r, c, ch) = static_cast<float>(clamp01(v));
            }
        }
    int n_blobs = static_cast<int>(clutter * 12.0 + 0.5);
    for (int b = 0; b < n_blobs; ++b) {
        int cy = static_cast<int>(uni(rng) * S);
        int cx = static_cast<int>(uni(rng) * S);
        double rad = (0.03 + 0.08 * uni(rng)) * S;
        float col[3];
        for (int ch = 0; ch < 3; ++ch) col[ch] = static_cast<float>(0.25 + 0.5 * uni(rng));
        bool box = uni(rng) < 0.4;
        int lo = static_cast<int>(-rad - 1), hi = static_cast<int>(rad + 1);
        for (int dy = lo; dy <= hi; ++dy)
            for (int dx = lo; dx <= hi; ++dx) {
                int y = cy + dy, x = cx + dx;
                if (y < 0 || y >= S || x < 0 || x >= S) continue;
                bool inside = box ? (std::abs(dy) <= rad * 0.8 && std::abs(dx) <= rad * 0.8)
                                  : (dy * dy + dx * dx <= rad * rad);
                if (!inside) continue;
                for (int ch = 0; ch < 3; ++ch)
                    img.at(y, x, ch) = 0.5f * img.at(y, x, ch) + 0.5f * col[ch];
            }
    }
}

bool in_shape(int shape, double u, double v) {
    // (u, v) in object-local coordinates, roughly [-1, 1]^2
    double a = std::abs(u), b = std::abs(v);
    switch (shape % kNumShapes) {
        case 0: return u * u + v * v <= 1.0;                       // circle
        case 1: return a <= 0.85 && b <= 0.85;                     // square
        case 2: return v >= -0.8 && b <= 1.0 && a <= (v + 0.8) * 0.6;  // triangle (apex down)
        case 3: return a + b <= 1.1;                               // diamond
        case 4: return (a <= 0.32 && b <= 1.0) || (b <= 0.32 && a <= 1.0);  // cross
        case 5: {                                                  // ring
            double d = u * u + v * v;
            return d <= 1.0 && d >= 0.4;
        }
        case 6: return a <= 1.0 && (static_cast<int>((v + 1.0) * 2.5) % 2 == 0) && b <= 1.0;  // bars
        case 7: return std::abs(u - v) <= 0.35 || std::abs(u + v) <= 0.35;  // saltire
        case 8: return u * u + v * v <= 1.0 && v <= 0.55 && a + 0.6 * b <= 1.05;  // pentagon-ish
        case 9: return u * u + v * v <= 1.0 && (u - 0.45) * (u - 0.45) + v * v >= 0.55;  // halfmoon
        case 10: return b <= 1.0 && a <= 0.15 + 0.75 * b;          // hourglass
        default: {                                                 // frame
            return a <= 1.0 && b <= 1.0 && (a >= 0.55 || b >= 0.55);
        }
    }
}

void render_object(Image& img, int cls, bool fine_grained, Rng& rng) {
    const int S = img.height;
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    double scale = (0.30 + 0.08 * uni(rng)) * S;        // object radius in pixels
    double cy = S * 0.5 + (uni(rng) - 0.5) * 0.18 * S;  // jittered center
    double cx = S * 0.5 + (uni(rng) - 0.5) * 0.18 * S;
    double bright = 0.85 + 0.15 * uni(rng);
    int shape = fine_grained ? 0 : cls;
    Rgb col = fine_grained ? kClassColors[0] : kClassColors[cls % kNumColors];

    for (int r = 0; r < S; ++r)
        for (int c = 0; c < S; ++c) {
            double u = (c - cx) / scale, v = (r - cy) / scale;
            if (!in_shape(shape, u, v)) continue;
            float px[3] = {col.r, col.g, col.b};
            if (fine_grained) {
                // white interior disk carrying the class glyph
                double d = u * u + v * v;
                if (d <= 0.72 * 0.72) {
                    px[0] = px[1] = px[2] = 0.95f;
                    double gu = (u + 0.5) / 1.0 * 5.0;  // glyph cell coords in [0,5)
                    double gv = (v + 0.5) / 1.0 * 5.0;
                    int gc = static_cast<int>(gu), gr = static_cast<int>(gv);
                    if (gu >= 0 && gv >= 0 && gc < 5 && gr < 5 &&
                        (kGlyphs[cls % 12][gr] >> (4 - gc)) & 1)
                        px[0] = px[1] = px[2] = 0.05f;
                }
            }
            for (int ch = 0; ch < 3; ++ch)
                img.at(r, c, ch) = static_cast<float>(clamp01(px[ch] * bright));
        }
}

Image render_item(const SyntheticSpec& spec, int cls, std::uint64_t item_seed) {
    Rng rng(item_seed);
    Image img(spec.image_size, spec.image_size);
    render_background(img, spec.clutter, rng);
    render_object(img, cls, spec.fine_grained, rng);
    return img;
}

}  // namespace

void SyntheticSpec::validate() const {
    if (n_classes < 2) throw std::invalid_argument("synthetic: n_classes must be >= 2");
    if (n_classes > kNumShapes) throw std::invalid_argument("synthetic: too many classes");
    if (image_size < 16) throw std::invalid_argument("synthetic: image_size must be >= 16");
    if (clutter < 0.0 || clutter > 1.0) throw std::invalid_argument("synthetic: clutter in [0,1]");
}

std::vector<std::string> synthetic_class_names(const SyntheticSpec& spec) {
    std::vector<std::string> names;
    for (int c = 0; c < spec.n_classes; ++c)
        names.push_back(spec.fine_grained ? "sign" + std::to_string(c) : kShapeNames[c]);
    return names;
}

static LabeledDataset generate_range(const SyntheticSpec& spec, int first, int count) {
    LabeledDataset ds;
    ds.n_classes = spec.n_classes;
    ds.class_names = synthetic_class_names(spec);
    for (int cls = 0; cls < spec.n_classes; ++cls)
        for (int j = first; j < first + count; ++j) {
            std::uint64_t item_seed =
                mix_seed(spec.seed, static_cast<std::uint64_t>(cls) * 1000003u + j);
            ds.images.push_back(render_item(spec, cls, item_seed));
            ds.labels.push_back(cls);
        }
    ds.validate();
    return ds;
}

LabeledDataset generate_synthetic_dataset(const SyntheticSpec& spec, int items_per_class) {
    spec.validate();
    if (items_per_class < 1) throw std::invalid_argument("synthetic: items_per_class >= 1");
    return generate_range(spec, 0, items_per_class);
}

SplitDataset generate_synthetic_splits(const SyntheticSpec& spec, int train_per_class,
                                       int test_per_class) {
    spec.validate();
    if (train_per_class < 1 || test_per_class < 1)
        throw std::invalid_argument("synthetic: split sizes must be >= 1");
    SplitDataset out;
    out.train = generate_range(spec, 0, train_per_class);
    out.test = generate_range(spec, train_per_class, test_per_class);
    return out;
}

std::vector<Image> background_corpus(const SyntheticSpec& spec, std::uint64_t seed, int count) {
    if (count < 0) throw std::invalid_argument("synthetic: negative corpus size");
    std::vector<Image> out;
    out.reserve(count);
    for (int j = 0; j < count; ++j) {
        Rng rng(mix_seed(seed, 0xba5e0000u + j));
        Image img(spec.image_size, spec.image_size);
        render_background(img, std::max(spec.clutter, 0.5), rng);
        out.push_back(std::move(img));
    }
    return out;
}

}  // namespace compdef
