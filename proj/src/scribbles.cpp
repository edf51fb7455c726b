#include "pyag/scribbles.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "pyag/common.hpp"
#include "pyag/rng.hpp"

namespace pyag::scribbles {

ForegroundMode parse_fg_mode(const std::string& name) {
    if (name == "skeleton") return ForegroundMode::Skeleton;
    if (name == "iterated_erosion" || name == "erosion") return ForegroundMode::IteratedErosion;
    fail(ErrorKind::Config, "unknown foreground scribble mode '" + name + "'");
}

std::string to_string(ForegroundMode mode) {
    return mode == ForegroundMode::Skeleton ? "skeleton" : "iterated_erosion";
}

int ScribbleConfig::walk_length_for(int h, int w) const {
    if (bg_walk_length) return *bg_walk_length;
    return std::max(1, static_cast<int>(std::lround(0.05 * h * w)));
}

void validate(const ScribbleConfig& config) {
    if (config.max_thickness < 1) fail(ErrorKind::Config, "max_thickness must be >= 1");
    if (config.bg_walk_length && *config.bg_walk_length < 1) fail(ErrorKind::Config, "walk length must be >= 1");
}

namespace {

bool any(const Mask& m) {
    return std::any_of(m.values().begin(), m.values().end(), [](auto v) { return v != 0; });
}

bool on(const Mask& m, int y, int x) { return m.inside(y, x) && m(y, x); }

// Anchored k×k square dilation (extends right/down), clipped to `region`.
Mask thicken(const Mask& line, int k, const Mask& region) {
    Mask out = line;
    for (int y = 0; y < line.h(); ++y)
        for (int x = 0; x < line.w(); ++x) {
            if (!line(y, x)) continue;
            for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx)
                    if (on(region, y + dy, x + dx)) out(y + dy, x + dx) = 1;
        }
    // The stroke can bulge at bends; trim off-line pixels until no (k+1)-square is fully on.
    const int s = k + 1;
    for (bool changed = true; changed;) {
        changed = false;
        for (int y = 0; y + s <= out.h(); ++y)
            for (int x = 0; x + s <= out.w(); ++x) {
                bool full = true;
                for (int i = 0; i < s && full; ++i)
                    for (int j = 0; j < s && full; ++j) full = out(y + i, x + j);
                if (!full) continue;
                for (int i = s - 1, done = 0; i >= 0 && !done; --i)
                    for (int j = s - 1; j >= 0; --j)
                        if (!line(y + i, x + j)) {
                            out(y + i, x + j) = 0;
                            changed = true;
                            done = 1;
                            break;
                        }
            }
    }
    return out;
}

Mask iterated_erosion(const Mask& region) {
    Mask current = region;
    for (;;) {
        Mask next = erode(current);
        if (!any(next)) return current;
        current = std::move(next);
    }
}

}  // namespace

Mask erode(const Mask& m) {
    Mask out(m.h(), m.w());
    for (int y = 0; y < m.h(); ++y)
        for (int x = 0; x < m.w(); ++x)
            out(y, x) = m(y, x) && on(m, y - 1, x) && on(m, y + 1, x) && on(m, y, x - 1) && on(m, y, x + 1);
    return out;
}

Mask thin(const Mask& input) {
    Mask m = input;
    // Neighbours P2..P9 clockwise from north.
    static constexpr std::array<int, 8> ny{-1, -1, 0, 1, 1, 1, 0, -1};
    static constexpr std::array<int, 8> nx{0, 1, 1, 1, 0, -1, -1, -1};
    bool changed = true;
    std::vector<std::size_t> to_delete;
    while (changed) {
        changed = false;
        for (int pass = 0; pass < 2; ++pass) {
            to_delete.clear();
            for (int y = 0; y < m.h(); ++y)
                for (int x = 0; x < m.w(); ++x) {
                    if (!m(y, x)) continue;
                    std::array<int, 8> p{};
                    for (int i = 0; i < 8; ++i) p[i] = on(m, y + ny[i], x + nx[i]);
                    int b = 0, a = 0;
                    for (int i = 0; i < 8; ++i) {
                        b += p[i];
                        a += !p[i] && p[(i + 1) % 8];
                    }
                    if (b < 2 || b > 6 || a != 1) continue;
                    // p[0]=P2 (N), p[2]=P4 (E), p[4]=P6 (S), p[6]=P8 (W)
                    const bool c1 = pass == 0 ? !(p[0] && p[2] && p[4]) : !(p[0] && p[2] && p[6]);
                    const bool c2 = pass == 0 ? !(p[2] && p[4] && p[6]) : !(p[0] && p[4] && p[6]);
                    if (c1 && c2) to_delete.push_back(static_cast<std::size_t>(y) * m.w() + x);
                }
            for (auto i : to_delete) m[i] = 0;
            changed = changed || !to_delete.empty();
        }
    }
    return m;
}

Mask foreground_scribble(const Mask& region, const ScribbleConfig& config) {
    validate(config);
    if (!any(region)) return Mask(region.h(), region.w());
    if (config.fg_mode == ForegroundMode::IteratedErosion) return iterated_erosion(region);

    Mask skeleton = thin(region);
    // Thinning can consume tiny blobs (e.g. 2×2) entirely; keep the deepest core instead.
    if (!any(skeleton)) skeleton = iterated_erosion(region);
    return config.max_thickness > 1 ? thicken(skeleton, config.max_thickness, region) : skeleton;
}

Mask background_scribble(const Mask& region, const ScribbleConfig& config) {
    validate(config);
    Mask out(region.h(), region.w());
    std::vector<std::size_t> cells;
    for (std::size_t i = 0; i < region.size(); ++i)
        if (region[i]) cells.push_back(i);
    if (cells.empty()) return out;

    Rng rng(config.seed);
    const std::size_t start = cells[uniform_index(rng, cells.size())];
    int y = static_cast<int>(start / region.w());
    int x = static_cast<int>(start % region.w());
    out(y, x) = 1;
    if (cells.size() < 4) return out;

    static constexpr std::array<int, 4> dy{-1, 1, 0, 0};
    static constexpr std::array<int, 4> dx{0, 0, -1, 1};
    const int length = config.walk_length_for(region.h(), region.w());
    for (int step = 1; step < length; ++step) {
        const auto dir = uniform_index(rng, 4);
        const int ty = y + dy[dir], tx = x + dx[dir];
        if (!on(region, ty, tx)) continue;  // rejected; the walker stays put
        y = ty;
        x = tx;
        out(y, x) = 1;
    }
    return out;
}

Scribble synthesize_scribbles(const LabelMap& labels, const ScribbleConfig& config, ScribbleStats* stats) {
    validate(config);
    const auto& classes = labels.classes;
    Scribble out{Grid<std::int32_t>(classes.h(), classes.w(), Scribble::kUnlabeled)};
    ScribbleStats local;
    local.total = classes.size();

    int max_class = labels.num_classes - 1;
    for (auto v : classes.values()) max_class = std::max(max_class, static_cast<int>(v));

    for (int k = 0; k <= max_class; ++k) {
        const Mask region = class_mask(classes, k);
        const bool present = any(region);
        if (!present) continue;
        const Mask trace = k == 0 ? background_scribble(region, config) : foreground_scribble(region, config);
        bool hit = false;
        for (std::size_t i = 0; i < trace.size(); ++i)
            if (trace[i]) {
                out.classes[i] = k;
                hit = true;
            }
        if (!hit) local.empty_classes.push_back(k);
    }
    local.labeled = out.labeled_count();
    if (stats) *stats = local;
    return out;
}

std::vector<SampleScribbleStats> annotate_samples(std::vector<datakit::Sample>& samples, const ScribbleConfig& config) {
    std::vector<SampleScribbleStats> out;
    out.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        auto& s = samples[i];
        if (!s.label)
            fail(ErrorKind::InvalidArgument,
                 "sample " + s.subject_id + "/" + std::to_string(s.index) + " has no label map to scribble from");
        ScribbleConfig c = config;
        c.seed = derive_seed(config.seed, {static_cast<std::uint64_t>(i)});
        SampleScribbleStats st{s.subject_id, s.index, {}};
        s.scribble = synthesize_scribbles(*s.label, c, &st.stats);
        out.push_back(std::move(st));
    }
    return out;
}

}  // namespace pyag::scribbles
