#pragma once

#include <cstdint>
#include <vector>

#include "r2o/image.hpp"
#include "r2o/tensor.hpp"

namespace r2o {

struct BinaryMask {
    int h = 0, w = 0;
    std::vector<std::uint8_t> v;

    BinaryMask() = default;
    BinaryMask(int height, int width) : h(height), w(width), v(static_cast<std::size_t>(height) * width, 0) {}

    std::uint8_t& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
    std::uint8_t at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

// Binary mask per label id of a label map.
std::vector<BinaryMask> masks_from_labels(const LabelMap& map);

// |a n b| / |a u b|; 1 when both masks are empty.
double iou(const BinaryMask& a, const BinaryMask& b);

struct AboReport {
    std::vector<double> best_iou;  // per GT region
    double abo = 0.0;
};

// For each ground-truth region the best IoU over the proposals; ABO is
// their mean.
AboReport abo(const std::vector<BinaryMask>& gt, const std::vector<BinaryMask>& proposals);

// Minimum-cost assignment. Returns row -> column (-1 for unassigned rows
// when rows > columns); assigns min(rows, cols) pairs.
std::vector<int> hungarian(const std::vector<std::vector<double>>& cost);

struct FgSegResult {
    BinaryMask fg;        // predicted foreground at GT resolution
    double fg_iou = 0.0;
    double bg_iou = 0.0;
    double miou = 0.0;    // mean of the two
    int fg_cluster = -1;
};

// Unsupervised foreground segmentation: per-image k-means over the
// feature-grid vectors (K clusters), nearest upsampling of the cluster map
// to GT resolution, Hungarian on the 2 x K (1 - IoU) matrix against
// {foreground, background}; the foreground row's segment is the
// prediction, everything else merges into background.
FgSegResult unsup_fg_segment(const Tensor& feats, const BinaryMask& gt, int k = 5,
                             std::uint64_t seed = 0);

// Mean over classes of TP / (TP + FP + FN) from a confusion matrix
// (rows = ground truth, cols = prediction); classes absent from both are
// skipped.
double miou(const std::vector<std::vector<long>>& confusion);

}  // namespace r2o
