#pragma once

#include <cstdint>
#include <utility>

#include "r2o/image.hpp"

namespace r2o {

// Crop rectangle + horizontal flip relating an augmented view to the
// full-image frame. Recorded before photometric ops; photometric ops
// never change it.
struct ViewGeometry {
    Rect crop;
    bool hflip = false;
};

struct AugmentationConfig {
    double crop_scale_min = 0.08, crop_scale_max = 1.0;
    double crop_aspect_min = 3.0 / 4.0, crop_aspect_max = 4.0 / 3.0;
    double flip_prob = 0.5;
    double jitter_prob = 0.8;
    double brightness = 0.4, contrast = 0.4, saturation = 0.2, hue = 0.1;
    double grayscale_prob = 0.2;
    int blur_kernel = 23;
    double blur_sigma_min = 0.1, blur_sigma_max = 2.0;
    double blur_prob_view1 = 1.0, blur_prob_view2 = 0.1;
    double solarize_prob_view2 = 0.2;
    double solarize_threshold = 128.0 / 255.0;
    int out_side = 64;
};

struct AugmentedView {
    ImageTensor image;
    ViewGeometry geometry;
};

// Two independent samples of the augmentation policy. Deterministic given
// (image, cfg, seed); the two views use seeds derived from `seed`.
std::pair<AugmentedView, AugmentedView> make_views(const ImageTensor& img,
                                                   const AugmentationConfig& cfg,
                                                   std::uint64_t seed);

// v >= threshold -> 1 - v, else unchanged.
ImageTensor solarize(const ImageTensor& img, double threshold);

// Separable normalized Gaussian, clamp-to-edge borders.
ImageTensor gaussian_blur(const ImageTensor& img, double sigma, int kernel = 23);

// Jitter pieces, exposed for tests. Factors are multiplicative except hue,
// which rotates the HSV hue channel by `shift` (fraction of a full turn).
// All results are clamped to [0,1].
ImageTensor adjust_brightness(const ImageTensor& img, double factor);
ImageTensor adjust_contrast(const ImageTensor& img, double factor);   // pivots on mean luminance
ImageTensor adjust_saturation(const ImageTensor& img, double factor); // blends with per-pixel luminance
ImageTensor adjust_hue(const ImageTensor& img, double shift);
ImageTensor to_grayscale(const ImageTensor& img);

}  // namespace r2o
