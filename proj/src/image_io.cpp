#include "compdef/image_io.hpp"

#include <zlib.h>

#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace compdef {

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                     std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::uint8_t* data, std::size_t n) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path);
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::uint8_t to_byte(float v) {
    int x = static_cast<int>(clamp01(v) * 255.0f + 0.5f);
    return static_cast<std::uint8_t>(x);
}

inline float from_byte(std::uint8_t b) { return static_cast<float>(b) / 255.0f; }

// ---- PNG helpers ----

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::uint8_t* data, std::size_t n) {
    put_u32(out, static_cast<std::uint32_t>(n));
    std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    if (n) out.insert(out.end(), data, data + n);
    std::uint32_t crc = crc32(0L, out.data() + start, static_cast<uInt>(4 + n));
    put_u32(out, crc);
}

std::vector<std::uint8_t> zlib_deflate(const std::vector<std::uint8_t>& raw) {
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> out(bound);
    if (compress2(out.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw std::runtime_error("png: deflate failed");
    out.resize(bound);
    return out;
}

std::vector<std::uint8_t> zlib_inflate(const std::vector<std::uint8_t>& comp,
                                       std::size_t expected) {
    std::vector<std::uint8_t> out(expected);
    uLongf n = static_cast<uLongf>(expected);
    int rc = uncompress(out.data(), &n, comp.data(), static_cast<uLong>(comp.size()));
    if (rc != Z_OK || n != expected) throw std::runtime_error("png: inflate failed");
    return out;
}

inline int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    return pb <= pc ? b : c;
}

const std::uint8_t kPngSig[8] = {137, 80, 78, 71, 13, 10, 26, 10};

std::string lower_ext(const std::string& path) {
    auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return "";
    std::string ext = path.substr(dot + 1);
    for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return ext;
}

}  // namespace

Image read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::string magic;
    in >> magic;
    if (magic != "P6") throw std::runtime_error("not a binary PPM (P6): " + path);
    auto next_int = [&in, &path]() {
        // skip whitespace and '#' comments
        for (;;) {
            int c = in.peek();
            if (c == '#') {
                std::string line;
                std::getline(in, line);
            } else if (std::isspace(c)) {
                in.get();
            } else {
                break;
            }
        }
        int v;
        if (!(in >> v)) throw std::runtime_error("malformed PPM header: " + path);
        return v;
    };
    int w = next_int(), h = next_int(), maxval = next_int();
    if (w < 1 || h < 1 || maxval != 255) throw std::runtime_error("unsupported PPM: " + path);
    in.get();  // single whitespace after maxval
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) throw std::runtime_error("truncated PPM: " + path);
    Image img(h, w);
    for (std::size_t i = 0; i < raw.size(); ++i) img.data[i] = from_byte(raw[i]);
    return img;
}

void write_ppm(const Image& img, const std::string& path) {
    std::string header = "P6\n" + std::to_string(img.width) + " " +
                         std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + img.data.size());
    for (float v : img.data) out.push_back(to_byte(v));
    write_file(path, out.data(), out.size());
}

Image read_png(const std::string& path) {
    auto buf = read_file(path);
    if (buf.size() < 8 || std::memcmp(buf.data(), kPngSig, 8) != 0)
        throw std::runtime_error("not a PNG file: " + path);
    std::size_t pos = 8;
    int w = 0, h = 0, bit_depth = 0, color_type = 0;
    std::vector<std::uint8_t> idat;
    while (pos + 8 <= buf.size()) {
        std::uint32_t len = get_u32(&buf[pos]);
        if (pos + 12 + len > buf.size()) throw std::runtime_error("truncated PNG: " + path);
        const char* type = reinterpret_cast<const char*>(&buf[pos + 4]);
        const std::uint8_t* data = &buf[pos + 8];
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw std::runtime_error("bad IHDR: " + path);
            w = static_cast<int>(get_u32(data));
            h = static_cast<int>(get_u32(data + 4));
            bit_depth = data[8];
            color_type = data[9];
            if (data[12] != 0) throw std::runtime_error("interlaced PNG unsupported: " + path);
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (w <= 0 || h <= 0 || bit_depth != 8) throw std::runtime_error("unsupported PNG: " + path);
    int nch;
    switch (color_type) {
        case 0: nch = 1; break;
        case 2: nch = 3; break;
        case 6: nch = 4; break;
        default: throw std::runtime_error("unsupported PNG color type: " + path);
    }
    std::size_t stride = static_cast<std::size_t>(w) * nch;
    auto raw = zlib_inflate(idat, (stride + 1) * h);
    // undo per-scanline filters in place
    std::vector<std::uint8_t> px(stride * h);
    for (int r = 0; r < h; ++r) {
        std::uint8_t filter = raw[(stride + 1) * r];
        const std::uint8_t* src = &raw[(stride + 1) * r + 1];
        std::uint8_t* dst = &px[stride * r];
        const std::uint8_t* up = r > 0 ? &px[stride * (r - 1)] : nullptr;
        for (std::size_t i = 0; i < stride; ++i) {
            int a = i >= static_cast<std::size_t>(nch) ? dst[i - nch] : 0;
            int b = up ? up[i] : 0;
            int c = (up && i >= static_cast<std::size_t>(nch)) ? up[i - nch] : 0;
            int v = src[i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw std::runtime_error("bad PNG filter byte: " + path);
            }
            dst[i] = static_cast<std::uint8_t>(v & 0xff);
        }
    }
    Image img(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const std::uint8_t* p = &px[stride * r + static_cast<std::size_t>(c) * nch];
            for (int ch = 0; ch < 3; ++ch)
                img.at(r, c, ch) = from_byte(nch == 1 ? p[0] : p[ch]);
        }
    return img;
}

void write_png(const Image& img, const std::string& path) {
    const int w = img.width, h = img.height;
    std::size_t stride = static_cast<std::size_t>(w) * 3;
    std::vector<std::uint8_t> raw((stride + 1) * h);
    for (int r = 0; r < h; ++r) {
        raw[(stride + 1) * r] = 0;  // filter: none
        std::uint8_t* dst = &raw[(stride + 1) * r + 1];
        for (int c = 0; c < w; ++c)
            for (int ch = 0; ch < 3; ++ch)
                dst[static_cast<std::size_t>(c) * 3 + ch] = to_byte(img.at(r, c, ch));
    }
    auto comp = zlib_deflate(raw);
    std::vector<std::uint8_t> out(kPngSig, kPngSig + 8);
    std::uint8_t ihdr[13];
    ihdr[0] = static_cast<std::uint8_t>(w >> 24);
    ihdr[1] = static_cast<std::uint8_t>(w >> 16);
    ihdr[2] = static_cast<std::uint8_t>(w >> 8);
    ihdr[3] = static_cast<std::uint8_t>(w);
    ihdr[4] = static_cast<std::uint8_t>(h >> 24);
    ihdr[5] = static_cast<std::uint8_t>(h >> 16);
    ihdr[6] = static_cast<std::uint8_t>(h >> 8);
    ihdr[7] = static_cast<std::uint8_t>(h);
    ihdr[8] = 8;   // bit depth
    ihdr[9] = 2;   // RGB
    ihdr[10] = ihdr[11] = ihdr[12] = 0;
    put_chunk(out, "IHDR", ihdr, 13);
    put_chunk(out, "IDAT", comp.data(), comp.size());
    put_chunk(out, "IEND", nullptr, 0);
    write_file(path, out.data(), out.size());
}

Image read_image(const std::string& path) {
    std::string ext = lower_ext(path);
    if (ext == "png") return read_png(path);
    if (ext == "ppm") return read_ppm(path);
    throw std::runtime_error("unsupported image extension: " + path);
}

void write_image(const Image& img, const std::string& path) {
    std::string ext = lower_ext(path);
    if (ext == "png") return write_png(img, path);
    if (ext == "ppm") return write_ppm(img, path);
    throw std::runtime_error("unsupported image extension: " + path);
}

void write_mask_png(const PatchMask& mask, const std::string& path) {
    Image img(mask.height, mask.width);
    for (int r = 0; r < mask.height; ++r)
        for (int c = 0; c < mask.width; ++c)
            for (int ch = 0; ch < 3; ++ch)
                img.at(r, c, ch) = mask.at(r, c) ? 1.0f : 0.0f;
    write_png(img, path);
}

}  // namespace compdef
