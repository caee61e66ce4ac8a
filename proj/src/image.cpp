#include "hazeforge/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <png.h>

namespace hazeforge {

ImageBuffer ImageBuffer::create(int width, int height, int channels, float fill) {
    check(width > 0 && height > 0, "ImageBuffer: non-positive dims ", width, "x", height);
    check(channels == 1 || channels == 3, "ImageBuffer: channels must be 1 or 3, got ", channels);
    ImageBuffer img;
    img.width = width;
    img.height = height;
    img.channels = channels;
    img.data.assign(static_cast<std::size_t>(width) * height * channels, fill);
    return img;
}

unsigned char quantize8(float v) {
    v = std::clamp(v, 0.0f, 1.0f);
    return static_cast<unsigned char>(std::floor(v * 255.0f + 0.5f));
}

namespace {

std::string slurp(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), "cannot open ", path.string());
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    require(!f.bad(), "read failed for ", path.string());
    return bytes;
}

void spit(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    require(f.good(), "cannot open ", path.string(), " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(f.good(), "write failed for ", path.string());
}

// Cursor over netpbm/PFM bytes that reports the offset on any failure.
struct PnmCursor {
    const std::string& bytes;
    const std::string path;
    std::size_t pos = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw RuntimeError(cat(path, ": ", what, " at byte ", pos));
    }
    void skip_space_and_comments() {
        while (pos < bytes.size()) {
            const char c = bytes[pos];
            if (c == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n')
                    ++pos;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos;
            } else {
                break;
            }
        }
    }
    long parse_long(const char* what) {
        skip_space_and_comments();
        if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos])))
            fail(cat("expected ", what));
        long v = 0;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
            v = v * 10 + (bytes[pos] - '0');
            if (v > 1l << 30)
                fail(cat(what, " out of range"));
            ++pos;
        }
        return v;
    }
    double parse_double(const char* what) {
        skip_space_and_comments();
        const char* begin = bytes.data() + pos;
        char* end = nullptr;
        const double v = std::strtod(begin, &end);
        if (end == begin)
            fail(cat("expected ", what));
        pos += static_cast<std::size_t>(end - begin);
        return v;
    }
    // Exactly one whitespace byte separates the header from the raster.
    void expect_single_space() {
        if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
            fail("expected whitespace before raster");
        ++pos;
    }
    const unsigned char* raster(std::size_t need_bytes) {
        if (bytes.size() - pos < need_bytes)
            fail(cat("raster truncated, need ", need_bytes, " bytes, have ",
                     bytes.size() - pos));
        return reinterpret_cast<const unsigned char*>(bytes.data() + pos);
    }
};

ImageBuffer read_pnm(const std::filesystem::path& path, const std::string& bytes) {
    PnmCursor cur{bytes, path.string()};
    if (bytes.size() < 2)
        cur.fail("file too short for a magic number");
    const char m0 = bytes[0], m1 = bytes[1];
    cur.pos = 2;

    if (m0 == 'P' && (m1 == '5' || m1 == '6')) {
        const int channels = m1 == '6' ? 3 : 1;
        const long w = cur.parse_long("width");
        const long h = cur.parse_long("height");
        const long maxval = cur.parse_long("maxval");
        if (w <= 0 || h <= 0)
            cur.fail("non-positive dimensions");
        if (maxval <= 0 || maxval > 65535)
            cur.fail(cat("unsupported maxval ", maxval));
        cur.expect_single_space();
        const int bytes_per_sample = maxval > 255 ? 2 : 1;
        const std::size_t count = static_cast<std::size_t>(w) * h * channels;
        const unsigned char* p = cur.raster(count * bytes_per_sample);
        ImageBuffer img = ImageBuffer::create(static_cast<int>(w), static_cast<int>(h), channels);
        const float scale = 1.0f / static_cast<float>(maxval);
        for (std::size_t i = 0; i < count; ++i) {
            // Multi-byte samples are big-endian per the netpbm formats.
            const unsigned v = bytes_per_sample == 2
                                   ? (static_cast<unsigned>(p[2 * i]) << 8) | p[2 * i + 1]
                                   : p[i];
            img.data[i] = static_cast<float>(v) * scale;
        }
        return img;
    }

    if (m0 == 'P' && m1 == 'f') { // grayscale PFM
        const long w = cur.parse_long("width");
        const long h = cur.parse_long("height");
        const double scale = cur.parse_double("scale");
        if (w <= 0 || h <= 0)
            cur.fail("non-positive dimensions");
        if (scale == 0.0)
            cur.fail("scale must be nonzero");
        cur.expect_single_space();
        const bool little_endian = scale < 0.0;
        const std::size_t count = static_cast<std::size_t>(w) * h;
        const unsigned char* p = cur.raster(count * 4);
        ImageBuffer img = ImageBuffer::create(static_cast<int>(w), static_cast<int>(h), 1);
        for (long y = 0; y < h; ++y) {
            // PFM rasters run bottom-up.
            const long src_row = h - 1 - y;
            for (long x = 0; x < w; ++x) {
                const unsigned char* q = p + (src_row * w + x) * 4;
                std::uint32_t bits = little_endian
                                         ? (std::uint32_t(q[0]) | std::uint32_t(q[1]) << 8 |
                                            std::uint32_t(q[2]) << 16 | std::uint32_t(q[3]) << 24)
                                         : (std::uint32_t(q[3]) | std::uint32_t(q[2]) << 8 |
                                            std::uint32_t(q[1]) << 16 | std::uint32_t(q[0]) << 24);
                float v;
                std::memcpy(&v, &bits, 4);
                img.data[(y * w + x)] = v;
            }
        }
        return img;
    }

    cur.pos = 0;
    cur.fail(cat("unrecognized magic '", m0, m1, "'"));
}

// libpng plumbing: read from an in-memory buffer, tracking the offset so a
// truncated file reports where decoding stopped.
struct PngSource {
    const std::string& bytes;
    std::size_t pos = 0;
    bool truncated = false;
};

extern "C" void hf_png_read(png_structp png, png_bytep out, png_size_t n) {
    auto* src = static_cast<PngSource*>(png_get_io_ptr(png));
    if (src->bytes.size() - src->pos < n) {
        src->truncated = true;
        png_error(png, "unexpected end of file");
    }
    std::memcpy(out, src->bytes.data() + src->pos, n);
    src->pos += n;
}

extern "C" void hf_png_error(png_structp png, png_const_charp msg) {
    auto* err = static_cast<std::string*>(png_get_error_ptr(png));
    if (err)
        *err = msg;
    longjmp(png_jmpbuf(png), 1);
}

extern "C" void hf_png_warn(png_structp, png_const_charp) {}

ImageBuffer read_png(const std::filesystem::path& path, const std::string& bytes) {
    PngSource src{bytes};
    std::string error_msg;
    png_structp png =
        png_create_read_struct(PNG_LIBPNG_VER_STRING, &error_msg, hf_png_error, hf_png_warn);
    require(png != nullptr, "png: cannot allocate decoder for ", path.string());
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw RuntimeError(cat("png: cannot allocate info for ", path.string()));
    }

    std::vector<png_bytep> row_ptrs;
    std::vector<unsigned char> raster;
    ImageBuffer img;
    if (setjmp(png_jmpbuf(png))) {
        const std::size_t at = src.pos;
        const bool truncated = src.truncated;
        png_destroy_read_struct(&png, &info, nullptr);
        if (truncated)
            throw RuntimeError(cat(path.string(), ": truncated PNG at byte ", at));
        throw RuntimeError(cat(path.string(), ": PNG decode failed at byte ", at, ": ",
                               error_msg));
    }

    png_set_read_fn(png, &src, hf_png_read);
    png_read_info(png, info);

    png_uint_32 w = 0, h = 0;
    int bit_depth = 0, color_type = 0;
    png_get_IHDR(png, info, &w, &h, &bit_depth, &color_type, nullptr, nullptr, nullptr);

    if (color_type == PNG_COLOR_TYPE_PALETTE)
        png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS))
        png_set_tRNS_to_alpha(png);
    if (bit_depth == 16)
        png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_interlace_handling(png);
    png_read_update_info(png, info);

    const int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3)
        png_error(png, "unsupported channel count after expansion");

    img = ImageBuffer::create(static_cast<int>(w), static_cast<int>(h), channels);
    raster.resize(static_cast<std::size_t>(w) * h * channels);
    row_ptrs.resize(h);
    for (png_uint_32 y = 0; y < h; ++y)
        row_ptrs[y] = raster.data() + static_cast<std::size_t>(y) * w * channels;
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    for (std::size_t i = 0; i < raster.size(); ++i)
        img.data[i] = static_cast<float>(raster[i]) / 255.0f;
    return img;
}

void write_png(const std::filesystem::path& path, const ImageBuffer& image) {
    std::string out;
    png_structp png =
        png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, hf_png_error, hf_png_warn);
    require(png != nullptr, "png: cannot allocate encoder for ", path.string());
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw RuntimeError(cat("png: cannot allocate info for ", path.string()));
    }

    std::vector<unsigned char> raster;
    std::vector<png_bytep> row_ptrs;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw RuntimeError(cat(path.string(), ": PNG encode failed"));
    }

    png_set_write_fn(
        png, &out,
        [](png_structp p, png_bytep data, png_size_t n) {
            static_cast<std::string*>(png_get_io_ptr(p))
                ->append(reinterpret_cast<const char*>(data), n);
        },
        [](png_structp) {});

    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
                 static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    raster.resize(static_cast<std::size_t>(image.width) * image.height * 3);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < 3; ++c)
                raster[(static_cast<std::size_t>(y) * image.width + x) * 3 + c] =
                    quantize8(image.at(x, y, image.channels == 3 ? c : 0));
    row_ptrs.resize(image.height);
    for (int y = 0; y < image.height; ++y)
        row_ptrs[y] = raster.data() + static_cast<std::size_t>(y) * image.width * 3;
    png_write_image(png, row_ptrs.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);

    spit(path, out);
}

std::string lower_extension(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext;
}

} // namespace

ImageBuffer read_image(const std::filesystem::path& path) {
    const std::string ext = lower_extension(path);
    check(ext == ".png" || ext == ".ppm" || ext == ".pgm" || ext == ".pfm",
          "read_image: unsupported extension '", ext, "' for ", path.string());
    const std::string bytes = slurp(path);
    if (ext == ".png")
        return read_png(path, bytes);
    return read_pnm(path, bytes);
}

void write_image(const std::filesystem::path& path, const ImageBuffer& image) {
    check(!image.empty(), "write_image: empty image for ", path.string());
    const std::string ext = lower_extension(path);

    if (ext == ".png") {
        write_png(path, image);
        return;
    }
    if (ext == ".ppm") {
        std::string out = cat("P6\n", image.width, " ", image.height, "\n255\n");
        for (int y = 0; y < image.height; ++y)
            for (int x = 0; x < image.width; ++x)
                for (int c = 0; c < 3; ++c)
                    out.push_back(static_cast<char>(
                        quantize8(image.at(x, y, image.channels == 3 ? c : 0))));
        spit(path, out);
        return;
    }
    if (ext == ".pgm") {
        check(image.channels == 1, "write_image: .pgm requires 1 channel, got ", image.channels);
        std::string out = cat("P5\n", image.width, " ", image.height, "\n65535\n");
        for (float v : image.data) {
            const unsigned q = static_cast<unsigned>(
                std::floor(std::clamp(v, 0.0f, 1.0f) * 65535.0f + 0.5f));
            out.push_back(static_cast<char>((q >> 8) & 0xff));
            out.push_back(static_cast<char>(q & 0xff));
        }
        spit(path, out);
        return;
    }
    if (ext == ".pfm") {
        check(image.channels == 1, "write_image: .pfm requires 1 channel, got ", image.channels);
        std::string out = cat("Pf\n", image.width, " ", image.height, "\n-1.0\n");
        for (int y = image.height - 1; y >= 0; --y)
            for (int x = 0; x < image.width; ++x) {
                const float v = image.at(x, y, 0);
                std::uint32_t bits;
                std::memcpy(&bits, &v, 4);
                for (int i = 0; i < 4; ++i)
                    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
            }
        spit(path, out);
        return;
    }
    throw ContractError(cat("write_image: unsupported extension '", ext, "' for ",
                            path.string()));
}

ImageBuffer resize_bilinear(const ImageBuffer& src, int width, int height) {
    check(!src.empty(), "resize_bilinear: empty image");
    check(width > 0 && height > 0, "resize_bilinear: non-positive target ", width, "x", height);
    if (width == src.width && height == src.height)
        return src;

    ImageBuffer out = ImageBuffer::create(width, height, src.channels);
    const float sx_scale = static_cast<float>(src.width) / width;
    const float sy_scale = static_cast<float>(src.height) / height;
    for (int y = 0; y < height; ++y) {
        // Half-pixel centers, clamped at the edges.
        const float sy = std::clamp((y + 0.5f) * sy_scale - 0.5f, 0.0f,
                                    static_cast<float>(src.height - 1));
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, src.height - 1);
        const float fy = sy - y0;
        for (int x = 0; x < width; ++x) {
            const float sx = std::clamp((x + 0.5f) * sx_scale - 0.5f, 0.0f,
                                        static_cast<float>(src.width - 1));
            const int x0 = static_cast<int>(sx);
            const int x1 = std::min(x0 + 1, src.width - 1);
            const float fx = sx - x0;
            for (int c = 0; c < src.channels; ++c) {
                const float top = src.at(x0, y0, c) * (1 - fx) + src.at(x1, y0, c) * fx;
                const float bot = src.at(x0, y1, c) * (1 - fx) + src.at(x1, y1, c) * fx;
                out.at(x, y, c) = top * (1 - fy) + bot * fy;
            }
        }
    }
    return out;
}

} // namespace hazeforge
