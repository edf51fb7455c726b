#include "pyag/image.hpp"

#include <cmath>

#include "pyag/common.hpp"

namespace pyag {

void validate(const Image& image) {
    if (image.channels != 1 && image.channels != 3)
        fail(ErrorKind::InvalidArgument, "image channels must be 1 or 3, got " + std::to_string(image.channels));
    if (image.height < 16 || image.width < 16)
        fail(ErrorKind::InvalidArgument, "image must be at least 16x16, got " + std::to_string(image.height) + "x" +
                                             std::to_string(image.width));
    if (image.pixels.size() != static_cast<std::size_t>(image.height) * image.width * image.channels)
        fail(ErrorKind::InvalidArgument, "image pixel buffer does not match its dimensions");
    for (double v : image.pixels)
        if (!std::isfinite(v)) fail(ErrorKind::InvalidArgument, "image contains non-finite values");
}

std::size_t Scribble::labeled_count() const {
    std::size_t n = 0;
    for (auto v : classes.values()) n += v != kUnlabeled;
    return n;
}

Mask Scribble::labeled_mask() const {
    Mask m(classes.h(), classes.w());
    for (std::size_t i = 0; i < classes.size(); ++i) m[i] = classes[i] != kUnlabeled;
    return m;
}

Scribble dense_scribble(const LabelMap& labels) { return Scribble{labels.classes}; }

Mask class_mask(const Grid<std::int32_t>& classes, std::int32_t k) {
    Mask m(classes.h(), classes.w());
    for (std::size_t i = 0; i < classes.size(); ++i) m[i] = classes[i] == k;
    return m;
}

}  // namespace pyag
