#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pyag/datakit.hpp"
#include "pyag/image.hpp"

namespace pyag::scribbles {

enum class ForegroundMode { Skeleton, IteratedErosion };

ForegroundMode parse_fg_mode(const std::string& name);
std::string to_string(ForegroundMode mode);

struct ScribbleConfig {
    ForegroundMode fg_mode = ForegroundMode::Skeleton;
    int max_thickness = 2;
    // Unset means 0.05·H·W for the image at hand.
    std::optional<int> bg_walk_length;
    std::uint64_t seed = 0;

    int walk_length_for(int h, int w) const;
};

void validate(const ScribbleConfig& config);

// Single erosion with the 4-neighbour cross; pixels outside the grid count as background.
Mask erode(const Mask& m);

// Zhang-Suen thinning to a one-pixel-wide medial curve.
Mask thin(const Mask& m);

/// Thin annotation inside a foreground region. Empty region gives an empty mask.
Mask foreground_scribble(const Mask& region, const ScribbleConfig& config);

/// Trace of a seeded 4-neighbour random walk of `walk_length_for` positions that rejects
/// moves leaving the region. Regions smaller than 4 pixels yield a single pixel.
Mask background_scribble(const Mask& region, const ScribbleConfig& config);

struct ScribbleStats {
    std::size_t labeled = 0;
    std::size_t total = 0;
    std::vector<int> empty_classes;  // classes present in the map whose scribble came out empty
    double labeled_fraction() const { return total ? static_cast<double>(labeled) / total : 0.0; }
};

Scribble synthesize_scribbles(const LabelMap& labels, const ScribbleConfig& config, ScribbleStats* stats = nullptr);

struct SampleScribbleStats {
    std::string subject;
    int index = 0;
    ScribbleStats stats;
};

// Fills `scribble` on every sample from its label map. The i-th sample (in the given order)
// uses seed derive_seed(config.seed, {i}). Samples without labels are an InvalidArgument.
std::vector<SampleScribbleStats> annotate_samples(std::vector<datakit::Sample>& samples, const ScribbleConfig& config);

}  // namespace pyag::scribbles
