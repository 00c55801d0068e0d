#pragma once

#include <cstdint>
#include <vector>

#include "r2o/image.hpp"

namespace r2o {

struct SlicConfig {
    int n_segments = 100;
    double compactness = 10.0;
    int max_iters = 10;
    // Fragments smaller than this fraction of the average segment size are
    // merged during connectivity enforcement.
    double min_region_fraction = 0.25;
};

struct SlicCenter {
    double l = 0, a = 0, b = 0, y = 0, x = 0;
};

struct SlicResult {
    LabelMap labels;                  // contiguous 0..n_regions-1, 4-connected
    std::vector<SlicCenter> centers;  // per final region
    int n_regions = 0;
};

// Superpixel segmentation: grid-initialized centers at spacing
// S = sqrt(HW/n), assignment within +-S windows under
// D = sqrt(d_lab^2 + (d_xy / S)^2 * m^2), center updates to cluster means,
// then connectivity enforcement and contiguous relabeling.
// Images smaller than n_segments fall back to n_segments = area.
SlicResult slic_segment(const LabImage& img, const SlicConfig& cfg, std::uint64_t seed = 0);

// n x n spatial grid prior over the same result type (the no-color
// baseline some runs use instead of superpixels).
SlicResult grid_prior(int h, int w, int n);

}  // namespace r2o
