#pragma once

#include <cstdint>
#include <vector>

#include "r2o/augment.hpp"
#include "r2o/image.hpp"
#include "r2o/tensor.hpp"

namespace r2o {

enum class CurriculumKind { cosine, linear, piecewise, fixed };

struct CurriculumConfig {
    int k0 = 128;
    int kf = 4;
    int t_alpha = -1;  // -1: ceil(0.13 * total_epochs)
    int total_epochs = 300;
    CurriculumKind kind = CurriculumKind::cosine;
    // Uses the bare cosine argument 2(t-t_alpha)/((T-t_alpha)*pi) instead of
    // the half-cosine; kept for comparison, it does not reach kf at t = T.
    bool literal_cosine = false;
    std::vector<std::pair<int, int>> piecewise_steps;  // (epoch, K), ascending epochs

    int effective_t_alpha() const;
    void validate() const;
};

// Scheduled cluster count at epoch t (0 <= t <= total_epochs). Scheduled
// kinds round to nearest and clamp to >= 2; the fixed kind returns k0
// as-is (down to 1, which degenerates to a single global mask).
int k_at(const CurriculumConfig& cfg, int t);

// Mean mid-tap feature over the cells of one prior region.
struct RegionEmbedding {
    int region_id = 0;
    std::vector<double> mean;
    int cells = 0;
};
using RegionEmbeddings = std::vector<RegionEmbedding>;

// Per-region mean pooling of mid features [Hm, Wm, D] over a label map of
// the same grid. Regions with no cells are omitted.
RegionEmbeddings pool_regions(const Tensor& mid, const LabelMap& labels);

// Majority label per covering pixel block; ties to the smaller label id.
LabelMap downsample_labels(const LabelMap& labels, int out_h, int out_w);

struct ClusterModel {
    int k = 0;
    std::vector<std::vector<double>> centroids;
    std::vector<int> assignment;  // per input point
    double inertia = 0.0;         // size-normalized objective: (1/K) sum_k mean within-cluster sqdist
    bool k_clamped = false;       // K exceeded the point count and was clamped
    std::vector<double> iteration_sse;  // total within-cluster SSE after each Lloyd iteration
};

// k-means++ seeded Lloyd iterations. Stops when assignments are stable,
// the relative SSE change falls below tol, or max_iters is reached. Empty
// clusters are reseeded to the point farthest from its centroid.
ClusterModel kmeans(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed,
                    int max_iters = 50, double tol = 1e-6);

// Cluster-id map at the mid-tap grid.
struct RefinedMask {
    int h = 0, w = 0;
    std::vector<std::int32_t> grid;
    std::vector<std::int32_t> present_ids;  // ascending

    std::int32_t& at(int y, int x) { return grid[static_cast<std::size_t>(y) * w + x]; }
    std::int32_t at(int y, int x) const { return grid[static_cast<std::size_t>(y) * w + x]; }
};

// Concatenates per-image embeddings into the point list `kmeans` consumes;
// refine_masks assumes this concatenation order.
std::vector<std::vector<double>> concat_embeddings(const std::vector<RegionEmbeddings>& batch);

// Each feature-grid cell inherits the cluster of its prior region.
std::vector<RefinedMask> refine_masks(const std::vector<RegionEmbeddings>& batch,
                                      const ClusterModel& model,
                                      const std::vector<LabelMap>& labels_ds);

// One-hot expansion over present ids, bilinear sampling of each channel
// over the view's crop rectangle (flip applied), then per-cell argmax with
// ties to the smaller cluster id.
RefinedMask align_mask(const RefinedMask& mask, const ViewGeometry& geom, int out_h, int out_w);

}  // namespace r2o
