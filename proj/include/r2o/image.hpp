#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace r2o {

// H x W x 3 image, channel-last, values in [0, 1], sRGB.
struct ImageTensor {
    int h = 0, w = 0;
    std::vector<double> data;  // h * w * 3

    ImageTensor() = default;
    ImageTensor(int height, int width) : h(height), w(width), data(static_cast<std::size_t>(height) * width * 3, 0.0) {}

    double& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * w + x) * 3 + c]; }
    double at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * w + x) * 3 + c]; }
};

// CIELAB image (L in [0,100]).
struct LabImage {
    int h = 0, w = 0;
    std::vector<double> data;  // h * w * 3 (L, a, b)

    LabImage() = default;
    LabImage(int height, int width) : h(height), w(width), data(static_cast<std::size_t>(height) * width * 3, 0.0) {}

    double& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * w + x) * 3 + c]; }
    double at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * w + x) * 3 + c]; }
};

// Per-pixel region / cluster identifiers, contiguous 0..n_labels-1.
struct LabelMap {
    int h = 0, w = 0;
    std::vector<std::int32_t> labels;  // h * w, row-major
    std::int32_t n_labels = 0;

    LabelMap() = default;
    LabelMap(int height, int width)
        : h(height), w(width), labels(static_cast<std::size_t>(height) * width, 0), n_labels(1) {}

    std::int32_t& at(int y, int x) { return labels[static_cast<std::size_t>(y) * w + x]; }
    std::int32_t at(int y, int x) const { return labels[static_cast<std::size_t>(y) * w + x]; }
};

// Normalized rectangle in the full-image frame, half-open on nothing:
// (y0,x0) top-left, (y1,x1) bottom-right, all in [0,1], y0<y1, x0<x1.
struct Rect {
    double y0 = 0.0, x0 = 0.0, y1 = 1.0, x1 = 1.0;
};

// sRGB (D65) -> CIELAB with the standard piecewise gamma.
LabImage rgb_to_lab(const ImageTensor& img);

// Bilinear resize with half-pixel-center alignment. Identity sizes are
// bit-identical.
ImageTensor resize_bilinear(const ImageTensor& img, int out_h, int out_w);

// Samples `rect` (optionally mirrored horizontally) from `img` on an
// out_h x out_w grid of half-pixel centers. resize_bilinear is the
// rect=(0,0,1,1), no-flip special case; mask alignment uses the same
// geometry so there is exactly one sampling convention in the repo.
ImageTensor sample_region_bilinear(const ImageTensor& img, const Rect& rect, bool hflip,
                                   int out_h, int out_w);

// Recomputes n_labels from the data and checks the ids form a contiguous
// 0..n-1 range; throws std::invalid_argument otherwise.
void finalize_labels(LabelMap& map);

// Versioned binary label-map file (see docs/formats.md). Lossless round
// trip; malformed input throws std::runtime_error with offset and reason.
void save_label_map(const LabelMap& map, const std::string& path);
LabelMap load_label_map(const std::string& path);

// Nearest-neighbor label upsampling (labels are not interpolable).
LabelMap upsample_labels_nearest(const LabelMap& map, int out_h, int out_w);

// Binary PPM (P6, 8-bit). Values scaled to/from [0,1].
ImageTensor load_ppm(const std::string& path);
void save_ppm(const ImageTensor& img, const std::string& path);

}  // namespace r2o
