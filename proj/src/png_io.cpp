#include "pyag/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "pyag/common.hpp"

namespace pyag::png {
namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) fail(ErrorKind::Io, "cannot open " + path.string());
    return f;
}

}  // namespace

Raster read(const std::filesystem::path& path) {
    FilePtr file = open(path, "rb");
    png_byte header[8];
    if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8))
        fail(ErrorKind::CorruptData, path.string() + ": not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) fail(ErrorKind::Io, "libpng allocation failed");
    Raster r;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorKind::CorruptData, path.string() + ": malformed PNG");
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (depth == 16) png_set_swap(png);  // host little-endian samples
    png_read_update_info(png, info);

    r.width = static_cast<int>(png_get_image_width(png, info));
    r.height = static_cast<int>(png_get_image_height(png, info));
    r.channels = png_get_channels(png, info);
    r.bit_depth = png_get_bit_depth(png, info);
    if (r.channels != 1 && r.channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorKind::CorruptData, path.string() + ": unsupported channel count");
    }

    const std::size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<png_byte> buffer(rowbytes * r.height);
    rows.resize(r.height);
    for (int y = 0; y < r.height; ++y) rows[y] = buffer.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    const std::size_t count = static_cast<std::size_t>(r.width) * r.height * r.channels;
    r.samples.resize(count);
    if (r.bit_depth == 16) {
        for (std::size_t i = 0; i < count; ++i)
            r.samples[i] = static_cast<std::uint16_t>(buffer[2 * i] | (buffer[2 * i + 1] << 8));
    } else {
        for (std::size_t i = 0; i < count; ++i) r.samples[i] = buffer[i];
    }
    return r;
}

void write(const std::filesystem::path& path, const Raster& r) {
    FilePtr file = open(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) fail(ErrorKind::Io, "libpng allocation failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorKind::Io, path.string() + ": PNG write failed");
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, r.width, r.height, r.bit_depth,
                 r.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const int bytes = r.bit_depth == 16 ? 2 : 1;
    std::vector<png_byte> row(static_cast<std::size_t>(r.width) * r.channels * bytes);
    for (int y = 0; y < r.height; ++y) {
        const std::size_t base = static_cast<std::size_t>(y) * r.width * r.channels;
        for (std::size_t i = 0; i < static_cast<std::size_t>(r.width) * r.channels; ++i) {
            const std::uint16_t s = r.samples[base + i];
            if (bytes == 2) {
                row[2 * i] = static_cast<png_byte>(s >> 8);  // PNG is big-endian
                row[2 * i + 1] = static_cast<png_byte>(s & 0xff);
            } else {
                row[i] = static_cast<png_byte>(s);
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image read_image(const std::filesystem::path& path) {
    const Raster r = read(path);
    const double scale = r.bit_depth == 16 ? 65535.0 : 255.0;
    Image img(r.height, r.width, r.channels);
    for (int y = 0; y < r.height; ++y)
        for (int x = 0; x < r.width; ++x)
            for (int c = 0; c < r.channels; ++c)
                img.at(y, x, c) = r.samples[(static_cast<std::size_t>(y) * r.width + x) * r.channels + c] / scale;
    return img;
}

void write_image16(const std::filesystem::path& path, const Image& image) {
    Raster r{image.height, image.width, image.channels, 16, {}};
    r.samples.resize(image.pixels.size());
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < image.channels; ++c) {
                const double v = std::clamp(image.at(y, x, c), 0.0, 1.0);
                r.samples[(static_cast<std::size_t>(y) * image.width + x) * image.channels + c] =
                    static_cast<std::uint16_t>(std::lround(v * 65535.0));
            }
    write(path, r);
}

Grid<std::int32_t> read_classes(const std::filesystem::path& path) {
    const Raster r = read(path);
    if (r.channels != 1 || r.bit_depth != 8)
        fail(ErrorKind::CorruptData, path.string() + ": class maps must be 8-bit grayscale");
    Grid<std::int32_t> g(r.height, r.width);
    for (std::size_t i = 0; i < g.size(); ++i)
        g[i] = r.samples[i] == 255 ? -1 : static_cast<std::int32_t>(r.samples[i]);
    return g;
}

void write_classes(const std::filesystem::path& path, const Grid<std::int32_t>& classes) {
    Raster r{classes.h(), classes.w(), 1, 8, {}};
    r.samples.resize(classes.size());
    for (std::size_t i = 0; i < classes.size(); ++i) {
        const auto v = classes[i];
        if (v != -1 && (v < 0 || v > 254)) fail(ErrorKind::InvalidArgument, "class index out of 8-bit range");
        r.samples[i] = v == -1 ? 255 : static_cast<std::uint16_t>(v);
    }
    write(path, r);
}

}  // namespace pyag::png
