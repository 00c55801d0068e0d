#pragma once

#include <vector>

#include "r2o/encoder.hpp"
#include "r2o/refine.hpp"
#include "r2o/tensor.hpp"

namespace r2o {

// Mean of the final-tap feature vectors over the cells carrying
// `cluster_id` in the aligned mask. Throws std::invalid_argument when the
// id is absent (callers filter through valid_pairs).
std::vector<double> mask_pool(const Tensor& final_feats, const RefinedMask& mask, int cluster_id);

// 2 - 2 * <q, z> / (|q| |z|), with a 1e-12 norm guard. q is the online
// predictor output, z the target projection.
double byol_pair_loss(const std::vector<double>& q, const std::vector<double>& z);

// Cluster ids present in both aligned masks of one image's views.
std::vector<int> valid_pairs(const RefinedMask& m1, const RefinedMask& m2);

struct PairLoss {
    int image = 0;
    int cluster_id = 0;
    int direction = 0;  // 0: online view1 vs target view2, 1: the swap
    double loss = 0.0;
};

struct LossReport {
    double total = 0.0;
    std::vector<PairLoss> per_pair;
    long n_pairs = 0;  // (image, id, direction) triples
};

enum class LossNorm {
    triple_mean,  // mean over all (image, id, direction) triples
    image_mean,   // per-image mean first, then mean over images
};

struct MaskedLossGrads {
    Tensor d_final_v1;  // gradient w.r.t. online final features, view 1
    Tensor d_final_v2;
};

// Symmetric masked representation loss. For every image and every cluster
// id present in both aligned masks: pool -> project -> predict on the
// online branch of one view, pool -> project on the target branch of the
// other, in both directions. Each direction runs the heads on its own
// pooled batch (train-mode batch statistics; only the online heads fold
// running stats). When `grads` is given, head parameter gradients are
// accumulated and the feature gradients are returned through it; the
// target branch receives no gradient.
LossReport symmetric_masked_loss(const Tensor& online_f1, const Tensor& online_f2,
                                 const Tensor& target_f1, const Tensor& target_f2,
                                 const std::vector<RefinedMask>& m1,
                                 const std::vector<RefinedMask>& m2, Mlp& online_projector,
                                 Mlp& online_predictor, Mlp& target_projector, bool train,
                                 LossNorm norm, MaskedLossGrads* grads);

}  // namespace r2o
