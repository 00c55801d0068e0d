#include "r2o/objective.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "r2o/kernels.hpp"

namespace r2o {

namespace {

constexpr double kNormEps = 1e-12;

struct PoolRow {
    int image = 0;
    int cluster_id = 0;
    int cells = 0;  // in the online-view mask for this direction
};

std::vector<double> pool_one(const Tensor& feats, int image, const RefinedMask& mask, int id,
                             int* cells_out) {
    const int h = feats.dim(1), w = feats.dim(2), d = feats.dim(3);
    if (mask.h != h || mask.w != w)
        throw std::invalid_argument("mask_pool: mask does not match the feature grid");
    std::vector<double> acc(static_cast<std::size_t>(d), 0.0);
    int cells = 0;
    const double* base = feats.data() + static_cast<std::size_t>(image) * h * w * d;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (mask.at(y, x) == id) {
                kernels::axpy(1.0, base + (static_cast<std::size_t>(y) * w + x) * d, acc.data(),
                              static_cast<std::size_t>(d));
                ++cells;
            }
    if (!cells) throw std::invalid_argument("mask_pool: cluster id absent from the mask");
    kernels::scale(1.0 / cells, acc.data(), acc.size());
    if (cells_out) *cells_out = cells;
    return acc;
}

// dL/dq of the pair loss, given q, z and the row weight.
void byol_grad_q(const std::vector<double>& q, const std::vector<double>& z, double weight,
                 double* dq) {
    const std::size_t d = q.size();
    const double nq = std::max(std::sqrt(kernels::dot(q.data(), q.data(), d)), kNormEps);
    const double nz = std::max(std::sqrt(kernels::dot(z.data(), z.data(), d)), kNormEps);
    const double cos = kernels::dot(q.data(), z.data(), d) / (nq * nz);
    // L = 2 - 2 cos;  dL/dq = -2/nq * (z/nz - cos * q/nq)
    for (std::size_t i = 0; i < d; ++i)
        dq[i] += weight * (-2.0 / nq) * (z[i] / nz - cos * q[i] / nq);
}

}  // namespace

std::vector<double> mask_pool(const Tensor& final_feats, const RefinedMask& mask, int cluster_id) {
    if (final_feats.rank() == 3) {
        Tensor batch({1, final_feats.dim(0), final_feats.dim(1), final_feats.dim(2)});
        std::copy(final_feats.data(), final_feats.data() + final_feats.size(), batch.data());
        return pool_one(batch, 0, mask, cluster_id, nullptr);
    }
    if (final_feats.rank() != 4 || final_feats.dim(0) != 1)
        throw std::invalid_argument("mask_pool: expected [H,W,D] or [1,H,W,D] features");
    return pool_one(final_feats, 0, mask, cluster_id, nullptr);
}

double byol_pair_loss(const std::vector<double>& q, const std::vector<double>& z) {
    if (q.size() != z.size()) throw std::invalid_argument("byol_pair_loss: dimension mismatch");
    const double nq = std::max(std::sqrt(kernels::dot(q.data(), q.data(), q.size())), kNormEps);
    const double nz = std::max(std::sqrt(kernels::dot(z.data(), z.data(), z.size())), kNormEps);
    return 2.0 - 2.0 * kernels::dot(q.data(), z.data(), q.size()) / (nq * nz);
}

std::vector<int> valid_pairs(const RefinedMask& m1, const RefinedMask& m2) {
    std::vector<int> out;
    std::set_intersection(m1.present_ids.begin(), m1.present_ids.end(), m2.present_ids.begin(),
                          m2.present_ids.end(), std::back_inserter(out));
    return out;
}

LossReport symmetric_masked_loss(const Tensor& online_f1, const Tensor& online_f2,
                                 const Tensor& target_f1, const Tensor& target_f2,
                                 const std::vector<RefinedMask>& m1,
                                 const std::vector<RefinedMask>& m2, Mlp& online_projector,
                                 Mlp& online_predictor, Mlp& target_projector, bool train,
                                 LossNorm norm, MaskedLossGrads* grads) {
    const int b = online_f1.dim(0);
    if (static_cast<std::size_t>(b) != m1.size() || m1.size() != m2.size())
        throw std::invalid_argument("symmetric_masked_loss: batch size mismatch");
    const int d_final = online_f1.dim(3);

    // One row per (image, shared cluster id); both directions reuse it.
    std::vector<PoolRow> rows;
    std::vector<int> ids_per_image(static_cast<std::size_t>(b), 0);
    for (int i = 0; i < b; ++i) {
        for (int id : valid_pairs(m1[static_cast<std::size_t>(i)], m2[static_cast<std::size_t>(i)])) {
            rows.push_back({i, id, 0});
            ++ids_per_image[static_cast<std::size_t>(i)];
        }
    }
    if (rows.empty())
        throw std::runtime_error("symmetric_masked_loss: no valid pairs in the batch (degenerate step)");
    const int r = static_cast<int>(rows.size());

    int images_with_pairs = 0;
    for (int i = 0; i < b; ++i)
        if (ids_per_image[static_cast<std::size_t>(i)]) ++images_with_pairs;

    LossReport report;
    report.n_pairs = 2L * r;

    // Per-row normalization weight (both directions weigh the same).
    std::vector<double> row_weight(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) {
        if (norm == LossNorm::triple_mean)
            row_weight[static_cast<std::size_t>(i)] = 1.0 / (2.0 * r);
        else
            row_weight[static_cast<std::size_t>(i)] =
                1.0 / (2.0 * ids_per_image[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)].image)] *
                       images_with_pairs);
    }

    const bool update_online_stats = train && grads != nullptr;
    std::vector<double> pair_losses[2];  // per direction, row order

    if (grads) {
        grads->d_final_v1 = Tensor(online_f1.shape());
        grads->d_final_v2 = Tensor(online_f2.shape());
    }

    for (int dir = 0; dir < 2; ++dir) {
        const Tensor& on_feats = dir == 0 ? online_f1 : online_f2;
        const Tensor& tg_feats = dir == 0 ? target_f2 : target_f1;
        const std::vector<RefinedMask>& on_masks = dir == 0 ? m1 : m2;
        const std::vector<RefinedMask>& tg_masks = dir == 0 ? m2 : m1;

        Tensor p_on({r, d_final}), p_tg({r, d_final});
        std::vector<int> on_cells(static_cast<std::size_t>(r));
        for (int i = 0; i < r; ++i) {
            const PoolRow& row = rows[static_cast<std::size_t>(i)];
            int cells = 0;
            std::vector<double> von = pool_one(on_feats, row.image,
                                               on_masks[static_cast<std::size_t>(row.image)],
                                               row.cluster_id, &cells);
            on_cells[static_cast<std::size_t>(i)] = cells;
            std::vector<double> vtg = pool_one(tg_feats, row.image,
                                               tg_masks[static_cast<std::size_t>(row.image)],
                                               row.cluster_id, nullptr);
            std::copy(von.begin(), von.end(), p_on.data() + static_cast<std::size_t>(i) * d_final);
            std::copy(vtg.begin(), vtg.end(), p_tg.data() + static_cast<std::size_t>(i) * d_final);
        }

        MlpCache proj_cache, pred_cache;
        Tensor z = mlp_forward(online_projector, p_on, train, update_online_stats,
                               grads ? &proj_cache : nullptr);
        Tensor q = mlp_forward(online_predictor, z, train, update_online_stats,
                               grads ? &pred_cache : nullptr);
        // Target branch: batch statistics in train mode, never updates its
        // running stats (those follow the online ones through the EMA),
        // and receives no gradient.
        Tensor zt = mlp_forward(target_projector, p_tg, train, false, nullptr);

        const int d_out = q.dim(1);
        pair_losses[dir].resize(static_cast<std::size_t>(r));
        Tensor dq({r, d_out});
        for (int i = 0; i < r; ++i) {
            std::vector<double> qv(q.data() + static_cast<std::size_t>(i) * d_out,
                                   q.data() + static_cast<std::size_t>(i + 1) * d_out);
            std::vector<double> zv(zt.data() + static_cast<std::size_t>(i) * d_out,
                                   zt.data() + static_cast<std::size_t>(i + 1) * d_out);
            pair_losses[dir][static_cast<std::size_t>(i)] = byol_pair_loss(qv, zv);
            if (grads)
                byol_grad_q(qv, zv, row_weight[static_cast<std::size_t>(i)],
                            dq.data() + static_cast<std::size_t>(i) * d_out);
        }

        if (grads) {
            Tensor dz = mlp_backward(online_predictor, pred_cache, dq);
            Tensor dp = mlp_backward(online_projector, proj_cache, dz);
            Tensor& d_feats = dir == 0 ? grads->d_final_v1 : grads->d_final_v2;
            const int fh = on_feats.dim(1), fw = on_feats.dim(2);
            for (int i = 0; i < r; ++i) {
                const PoolRow& row = rows[static_cast<std::size_t>(i)];
                const RefinedMask& mask = on_masks[static_cast<std::size_t>(row.image)];
                const double inv = 1.0 / on_cells[static_cast<std::size_t>(i)];
                const double* src = dp.data() + static_cast<std::size_t>(i) * d_final;
                double* base = d_feats.data() + static_cast<std::size_t>(row.image) * fh * fw * d_final;
                for (int y = 0; y < fh; ++y)
                    for (int x = 0; x < fw; ++x)
                        if (mask.at(y, x) == row.cluster_id)
                            kernels::axpy(inv, src,
                                          base + (static_cast<std::size_t>(y) * fw + x) * d_final,
                                          static_cast<std::size_t>(d_final));
            }
        }
    }

    // Accumulate (l_dir0 + l_dir1) per row so swapping the views permutes
    // nothing but the direction tags and the total is exactly unchanged.
    double total = 0.0;
    for (int i = 0; i < r; ++i) {
        const PoolRow& row = rows[static_cast<std::size_t>(i)];
        const double l0 = pair_losses[0][static_cast<std::size_t>(i)];
        const double l1 = pair_losses[1][static_cast<std::size_t>(i)];
        total += (l0 + l1) * row_weight[static_cast<std::size_t>(i)];
        report.per_pair.push_back({row.image, row.cluster_id, 0, l0});
        report.per_pair.push_back({row.image, row.cluster_id, 1, l1});
    }
    report.total = total;
    return report;
}

}  // namespace r2o
