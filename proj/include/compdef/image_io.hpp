#pragma once

#include <string>

#include "compdef/image.hpp"

namespace compdef {

// Binary PPM (P6), 8-bit.
Image read_ppm(const std::string& path);
void write_ppm(const Image& img, const std::string& path);

// PNG, 8-bit, non-interlaced. Reads gray / RGB / RGBA (alpha dropped),
// writes RGB. Based on zlib for (de)compression and CRCs.
Image read_png(const std::string& path);
void write_png(const Image& img, const std::string& path);

// Dispatch on extension (.png / .ppm).
Image read_image(const std::string& path);
void write_image(const Image& img, const std::string& path);

// Grayscale PNG of a patch mask (255 = patched).
void write_mask_png(const PatchMask& mask, const std::string& path);

}  // namespace compdef
