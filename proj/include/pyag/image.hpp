#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace pyag {

/// Row-major H×W grid.
template <class T>
class Grid {
public:
    Grid() = default;
    Grid(int h, int w, T fill = T{}) : h_(h), w_(w), v_(static_cast<std::size_t>(h) * w, fill) {}

    int h() const { return h_; }
    int w() const { return w_; }
    std::size_t size() const { return v_.size(); }

    T& operator()(int y, int x) { return v_[static_cast<std::size_t>(y) * w_ + x]; }
    const T& operator()(int y, int x) const { return v_[static_cast<std::size_t>(y) * w_ + x]; }
    T& operator[](std::size_t i) { return v_[i]; }
    const T& operator[](std::size_t i) const { return v_[i]; }

    bool inside(int y, int x) const { return y >= 0 && x >= 0 && y < h_ && x < w_; }
    bool same_shape(int h, int w) const { return h_ == h && w_ == w; }
    template <class U>
    bool same_shape(const Grid<U>& o) const { return h_ == o.h() && w_ == o.w(); }

    std::span<T> values() { return v_; }
    std::span<const T> values() const { return v_; }

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    int h_ = 0, w_ = 0;
    std::vector<T> v_;
};

using Mask = Grid<std::uint8_t>;

/// Intensity image, stored channel-planar. ch ∈ {1, 3}.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 1;
    std::vector<double> pixels;  // [ch][y][x]
    std::optional<std::pair<double, double>> spacing;  // mm/pixel (row, col)
    std::string subject_id;

    Image() = default;
    Image(int h, int w, int ch = 1, double fill = 0.0)
        : height(h), width(w), channels(ch), pixels(static_cast<std::size_t>(h) * w * ch, fill) {}

    double& at(int y, int x, int c = 0) {
        return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double at(int y, int x, int c = 0) const {
        return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
};

// Throws InvalidArgument when the Image invariants (finite, ≥16×16, ch 1|3) fail.
void validate(const Image& image);

/// Dense per-pixel classes in [0, num_classes-1]; class 0 is background.
struct LabelMap {
    Grid<std::int32_t> classes;
    int num_classes = 0;

    int height() const { return classes.h(); }
    int width() const { return classes.w(); }
};

/// Sparse annotation. Unannotated pixels hold kUnlabeled in memory and 255 on disk.
struct Scribble {
    static constexpr std::int32_t kUnlabeled = -1;
    static constexpr std::uint8_t kUnlabeledFile = 255;

    Grid<std::int32_t> classes;

    int height() const { return classes.h(); }
    int width() const { return classes.w(); }
    std::size_t labeled_count() const;
    Mask labeled_mask() const;
};

// Every pixel labeled: used for full-mask supervision.
Scribble dense_scribble(const LabelMap& labels);

Mask class_mask(const Grid<std::int32_t>& classes, std::int32_t k);

}  // namespace pyag
