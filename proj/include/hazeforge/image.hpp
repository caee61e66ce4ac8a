#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hazeforge/common.hpp"

// In-memory images and the file formats the tools speak: 8-bit RGB PNG and
// binary PPM for color, PFM and 16-bit PGM for depth. Pixel data is float in
// [0,1], row-major, channels interleaved per pixel.

namespace hazeforge {

struct ImageBuffer {
    int width = 0;
    int height = 0;
    int channels = 0; // 1 or 3
    std::vector<float> data;

    static ImageBuffer create(int width, int height, int channels, float fill = 0.0f);

    int pixel_count() const { return width * height; }
    bool empty() const { return data.empty(); }

    float at(int x, int y, int c) const { return data[(y * width + x) * channels + c]; }
    float& at(int x, int y, int c) { return data[(y * width + x) * channels + c]; }
};

// Decodes by extension: .png, .ppm (P6), .pgm (P5, 8- or 16-bit), .pfm.
// Integer formats map to [0,1] by dividing by their maxval; PFM is taken
// as-is. Failures throw RuntimeError naming the file and, for truncated or
// malformed content, the byte offset where parsing stopped.
ImageBuffer read_image(const std::filesystem::path& path);

// Encodes by extension: .png and .ppm store 8-bit RGB (gray is replicated),
// .pgm stores 16-bit gray, .pfm stores float gray as-is. Values are clamped
// to [0,1] before quantization in the integer formats.
void write_image(const std::filesystem::path& path, const ImageBuffer& image);

// Bilinear resample with edge clamp. Returns the input untouched (bit-exact)
// when the target dims equal the source dims.
ImageBuffer resize_bilinear(const ImageBuffer& src, int width, int height);

// Round-half-up quantization to 8 bits used by the PNG/PPM writers, exposed
// so tests can predict exact round trips.
unsigned char quantize8(float v);

} // namespace hazeforge
