#pragma once

#include <cstdint>
#include <filesystem>

#include "pyag/image.hpp"

namespace pyag::png {

struct Raster {
    int height = 0;
    int width = 0;
    int channels = 1;   // 1 (gray) or 3 (rgb)
    int bit_depth = 8;  // 8 or 16
    std::vector<std::uint16_t> samples;  // interleaved, row-major
};

Raster read(const std::filesystem::path& path);
void write(const std::filesystem::path& path, const Raster& raster);

// Intensity image scaled to [0, 1] by the bit depth's maximum.
Image read_image(const std::filesystem::path& path);
// Quantizes to 16 bits after clamping to [0, 1].
void write_image16(const std::filesystem::path& path, const Image& image);

// Raw class indices; 255 carries the unlabeled sentinel for scribbles.
Grid<std::int32_t> read_classes(const std::filesystem::path& path);
void write_classes(const std::filesystem::path& path, const Grid<std::int32_t>& classes);

}  // namespace pyag::png
