#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "r2o/image.hpp"

namespace r2o {

// Desk-scale stand-in for a photo corpus: colored shapes on a textured
// background, with ground-truth object masks known by construction.
struct SyntheticCorpusSpec {
    int n_images = 512;
    int side = 64;
    int min_shapes = 1, max_shapes = 3;
    double min_area_frac = 0.02, max_area_frac = 0.25;  // per shape, of the canvas
    double noise = 0.03;     // background noise amplitude
    double gradient = 0.15;  // background gradient strength
    std::uint64_t seed = 7;

    void validate() const;
};

struct SyntheticImage {
    ImageTensor image;
    LabelMap gt;  // 0 = background, 1..n = shapes
};

// Deterministic given (spec, index); images are independent of n_images.
SyntheticImage gen_synthetic_image(const SyntheticCorpusSpec& spec, int index);

std::vector<SyntheticImage> gen_synthetic_corpus(const SyntheticCorpusSpec& spec);

// Writes img_%05d.ppm and img_%05d.gt.r2l plus a manifest.txt.
void write_synthetic_corpus(const SyntheticCorpusSpec& spec, const std::string& dir);

}  // namespace r2o
