#include "r2o/refine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "r2o/kernels.hpp"
#include "r2o/rng.hpp"

namespace r2o {

int CurriculumConfig::effective_t_alpha() const {
    if (t_alpha >= 0) return t_alpha;
    return static_cast<int>(std::ceil(0.13 * total_epochs));
}

void CurriculumConfig::validate() const {
    if (total_epochs < 1) throw std::invalid_argument("curriculum: total_epochs must be >= 1");
    if (effective_t_alpha() < 0 || effective_t_alpha() >= total_epochs)
        throw std::invalid_argument("curriculum: t_alpha must lie in [0, total_epochs)");
    if (kind == CurriculumKind::fixed) {
        if (k0 < 1) throw std::invalid_argument("curriculum: fixed K must be >= 1");
        return;
    }
    if (k0 < 2 || kf < 2) throw std::invalid_argument("curriculum: scheduled K endpoints must be >= 2");
    if (kind == CurriculumKind::piecewise) {
        int prev = -1;
        for (const auto& [epoch, k] : piecewise_steps) {
            if (epoch <= prev) throw std::invalid_argument("curriculum: piecewise epochs must be ascending");
            if (k < 2) throw std::invalid_argument("curriculum: piecewise K must be >= 2");
            prev = epoch;
        }
    }
}

int k_at(const CurriculumConfig& cfg, int t) {
    if (t < 0 || t > cfg.total_epochs) throw std::invalid_argument("k_at: epoch out of range");
    if (cfg.kind == CurriculumKind::fixed) return cfg.k0;

    const int ta = cfg.effective_t_alpha();
    if (cfg.kind == CurriculumKind::piecewise) {
        int k = cfg.k0;
        for (const auto& [epoch, kv] : cfg.piecewise_steps)
            if (epoch <= t) k = kv;
        return std::max(2, k);
    }
    if (t < ta) return std::max(2, cfg.k0);

    const double progress = static_cast<double>(t - ta) / static_cast<double>(cfg.total_epochs - ta);
    double k;
    if (cfg.kind == CurriculumKind::linear) {
        k = cfg.k0 + (cfg.kf - cfg.k0) * progress;
    } else if (cfg.literal_cosine) {
        // Bare transcription: the argument ends at 2/pi, not pi/2, so the
        // schedule never reaches kf.
        const double arg = 2.0 * (t - ta) / ((cfg.total_epochs - ta) * M_PI);
        k = cfg.kf + std::cos(arg) * (cfg.k0 - cfg.kf);
    } else {
        k = cfg.kf + std::cos(M_PI / 2.0 * progress) * (cfg.k0 - cfg.kf);
    }
    return std::max(2, static_cast<int>(std::lround(k)));
}

RegionEmbeddings pool_regions(const Tensor& mid, const LabelMap& labels) {
    if (mid.rank() != 3) throw std::invalid_argument("pool_regions: expected [H, W, D] features");
    const int h = mid.dim(0), w = mid.dim(1), d = mid.dim(2);
    if (labels.h != h || labels.w != w)
        throw std::invalid_argument("pool_regions: label map does not match the feature grid");

    std::vector<std::vector<double>> sums(static_cast<std::size_t>(labels.n_labels),
                                          std::vector<double>(static_cast<std::size_t>(d), 0.0));
    std::vector<int> counts(static_cast<std::size_t>(labels.n_labels), 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::int32_t r = labels.at(y, x);
            const double* f = mid.data() + (static_cast<std::size_t>(y) * w + x) * d;
            kernels::axpy(1.0, f, sums[static_cast<std::size_t>(r)].data(), static_cast<std::size_t>(d));
            ++counts[static_cast<std::size_t>(r)];
        }

    RegionEmbeddings out;
    for (std::int32_t r = 0; r < labels.n_labels; ++r) {
        if (!counts[static_cast<std::size_t>(r)]) continue;
        RegionEmbedding e;
        e.region_id = r;
        e.cells = counts[static_cast<std::size_t>(r)];
        e.mean = std::move(sums[static_cast<std::size_t>(r)]);
        kernels::scale(1.0 / e.cells, e.mean.data(), e.mean.size());
        out.push_back(std::move(e));
    }
    return out;
}

LabelMap downsample_labels(const LabelMap& labels, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1 || labels.h < out_h || labels.w < out_w)
        throw std::invalid_argument("downsample_labels: output grid larger than input");
    LabelMap out(out_h, out_w);
    std::vector<int> counts(static_cast<std::size_t>(labels.n_labels));
    for (int oy = 0; oy < out_h; ++oy) {
        const int y0 = oy * labels.h / out_h, y1 = (oy + 1) * labels.h / out_h;
        for (int ox = 0; ox < out_w; ++ox) {
            const int x0 = ox * labels.w / out_w, x1 = (ox + 1) * labels.w / out_w;
            std::fill(counts.begin(), counts.end(), 0);
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) ++counts[static_cast<std::size_t>(labels.at(y, x))];
            int best = 0;
            for (int l = 1; l < labels.n_labels; ++l)
                if (counts[static_cast<std::size_t>(l)] > counts[static_cast<std::size_t>(best)]) best = l;
            out.at(oy, ox) = best;
        }
    }
    out.n_labels = labels.n_labels;
    return out;
}

namespace {

double sse_of(const std::vector<std::vector<double>>& pts,
              const std::vector<std::vector<double>>& centroids, const std::vector<int>& assign) {
    double sse = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i)
        sse += kernels::sqdist(pts[i].data(), centroids[static_cast<std::size_t>(assign[i])].data(),
                               pts[i].size());
    return sse;
}

}  // namespace

ClusterModel kmeans(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed,
                    int max_iters, double tol) {
    if (points.empty()) throw std::invalid_argument("kmeans: no points");
    if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
    const std::size_t n = points.size();
    const std::size_t dim = points[0].size();
    for (const auto& p : points)
        if (p.size() != dim) throw std::invalid_argument("kmeans: inconsistent dimensions");

    ClusterModel model;
    model.k_clamped = static_cast<std::size_t>(k) > n;
    if (model.k_clamped) k = static_cast<int>(n);
    model.k = k;

    // k-means++ seeding.
    Rng rng(seed);
    std::vector<std::size_t> chosen;
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    chosen.push_back(rng.uniform_int(n));
    std::vector<char> is_chosen(n, 0);
    is_chosen[chosen.back()] = 1;
    while (chosen.size() < static_cast<std::size_t>(k)) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = kernels::sqdist(points[i].data(), points[chosen.back()].data(), dim);
            d2[i] = std::min(d2[i], d);
            total += d2[i];
        }
        std::size_t next = n;
        if (total > 0.0) {
            const double r = rng.uniform() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= r) {
                    next = i;
                    break;
                }
            }
            if (next == n) next = n - 1;
        } else {
            // All remaining mass is zero (duplicate points): first unchosen.
            for (std::size_t i = 0; i < n; ++i)
                if (!is_chosen[i]) {
                    next = i;
                    break;
                }
            if (next == n) next = 0;
        }
        chosen.push_back(next);
        is_chosen[next] = 1;
    }
    model.centroids.assign(static_cast<std::size_t>(k), std::vector<double>(dim, 0.0));
    for (int c = 0; c < k; ++c) model.centroids[static_cast<std::size_t>(c)] = points[chosen[static_cast<std::size_t>(c)]];

    model.assignment.assign(n, -1);
    double prev_sse = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < max_iters; ++iter) {
        // Assign to the nearest centroid (ties to the smaller index).
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int bc = 0;
            for (int c = 0; c < k; ++c) {
                const double d = kernels::sqdist(points[i].data(), model.centroids[static_cast<std::size_t>(c)].data(), dim);
                if (d < best) {
                    best = d;
                    bc = c;
                }
            }
            if (model.assignment[i] != bc) changed = true;
            model.assignment[i] = bc;
        }

        // Means update. Clusters whose members are bitwise identical snap
        // to that point: the accumulated mean can drift by an ulp, which
        // would otherwise make the empty-cluster reseed below fire on
        // duplicate-only data.
        std::vector<std::vector<double>> sums(static_cast<std::size_t>(k), std::vector<double>(dim, 0.0));
        std::vector<long> counts(static_cast<std::size_t>(k), 0);
        std::vector<std::size_t> first_member(static_cast<std::size_t>(k), n);
        std::vector<char> uniform_cluster(static_cast<std::size_t>(k), 1);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = static_cast<std::size_t>(model.assignment[i]);
            kernels::axpy(1.0, points[i].data(), sums[c].data(), dim);
            ++counts[c];
            if (first_member[c] == n)
                first_member[c] = i;
            else if (uniform_cluster[c] && points[i] != points[first_member[c]])
                uniform_cluster[c] = 0;
        }
        for (int c = 0; c < k; ++c) {
            if (!counts[static_cast<std::size_t>(c)]) continue;
            if (uniform_cluster[static_cast<std::size_t>(c)]) {
                model.centroids[static_cast<std::size_t>(c)] = points[first_member[static_cast<std::size_t>(c)]];
                continue;
            }
            model.centroids[static_cast<std::size_t>(c)] = sums[static_cast<std::size_t>(c)];
            kernels::scale(1.0 / static_cast<double>(counts[static_cast<std::size_t>(c)]),
                           model.centroids[static_cast<std::size_t>(c)].data(), dim);
        }

        // Empty clusters: reseed to the point farthest from its centroid.
        // A farthest distance of zero means every point already sits on a
        // centroid (duplicates); splitting would only mint spurious
        // singleton clusters, so such clusters stay empty.
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)]) continue;
            double worst = 0.0;
            std::size_t worst_i = n;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = kernels::sqdist(points[i].data(), model.centroids[static_cast<std::size_t>(model.assignment[i])].data(), dim);
                if (d > worst) {
                    worst = d;
                    worst_i = i;
                }
            }
            if (worst_i == n) continue;
            model.centroids[static_cast<std::size_t>(c)] = points[worst_i];
            model.assignment[worst_i] = c;
            counts[static_cast<std::size_t>(c)] = 1;
            changed = true;
        }

        const double sse = sse_of(points, model.centroids, model.assignment);
        model.iteration_sse.push_back(sse);
        const bool tol_hit = prev_sse < std::numeric_limits<double>::infinity() &&
                             std::abs(prev_sse - sse) <= tol * std::max(prev_sse, 1e-300);
        prev_sse = sse;
        if (!changed || tol_hit) break;
    }

    // Size-normalized objective over the final assignment.
    std::vector<double> sse_k(static_cast<std::size_t>(k), 0.0);
    std::vector<long> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
        sse_k[static_cast<std::size_t>(model.assignment[i])] +=
            kernels::sqdist(points[i].data(), model.centroids[static_cast<std::size_t>(model.assignment[i])].data(), dim);
        ++counts[static_cast<std::size_t>(model.assignment[i])];
    }
    model.inertia = 0.0;
    for (int c = 0; c < k; ++c)
        if (counts[static_cast<std::size_t>(c)])
            model.inertia += sse_k[static_cast<std::size_t>(c)] / static_cast<double>(counts[static_cast<std::size_t>(c)]);
    model.inertia /= static_cast<double>(k);
    return model;
}

std::vector<std::vector<double>> concat_embeddings(const std::vector<RegionEmbeddings>& batch) {
    std::vector<std::vector<double>> pts;
    for (const RegionEmbeddings& embs : batch)
        for (const RegionEmbedding& e : embs) pts.push_back(e.mean);
    return pts;
}

std::vector<RefinedMask> refine_masks(const std::vector<RegionEmbeddings>& batch,
                                      const ClusterModel& model,
                                      const std::vector<LabelMap>& labels_ds) {
    if (batch.size() != labels_ds.size())
        throw std::invalid_argument("refine_masks: batch/label count mismatch");
    std::vector<RefinedMask> out(batch.size());
    std::size_t offset = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const LabelMap& labels = labels_ds[i];
        std::vector<std::int32_t> cluster_of(static_cast<std::size_t>(labels.n_labels), -1);
        for (const RegionEmbedding& e : batch[i]) {
            cluster_of[static_cast<std::size_t>(e.region_id)] =
                static_cast<std::int32_t>(model.assignment[offset]);
            ++offset;
        }
        RefinedMask& mask = out[i];
        mask.h = labels.h;
        mask.w = labels.w;
        mask.grid.resize(static_cast<std::size_t>(labels.h) * labels.w);
        for (std::size_t px = 0; px < mask.grid.size(); ++px) {
            const std::int32_t c = cluster_of[static_cast<std::size_t>(labels.labels[px])];
            if (c < 0) throw std::logic_error("refine_masks: cell belongs to a region with no embedding");
            mask.grid[px] = c;
        }
        std::vector<std::int32_t> ids = mask.grid;
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        mask.present_ids = std::move(ids);
    }
    if (offset != model.assignment.size())
        throw std::invalid_argument("refine_masks: cluster model does not match the batch embeddings");
    return out;
}

RefinedMask align_mask(const RefinedMask& mask, const ViewGeometry& geom, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("align_mask: output size must be >= 1");
    const Rect& r = geom.crop;
    if (!(r.y0 < r.y1 && r.x0 < r.x1) || r.y0 < 0.0 || r.x0 < 0.0 || r.y1 > 1.0 || r.x1 > 1.0)
        throw std::invalid_argument("align_mask: invalid crop rectangle");

    const int nc = static_cast<int>(mask.present_ids.size());
    // Same coordinate factoring as sample_region_bilinear: identity
    // geometry is exact and flips mirror the sample grid exactly.
    const double y_scale = (r.y1 - r.y0) * mask.h / out_h;
    const double y_off = r.y0 * mask.h - 0.5;
    const double x_scale = (r.x1 - r.x0) * mask.w / out_w;
    const double x_off = r.x0 * mask.w - 0.5;

    RefinedMask out;
    out.h = out_h;
    out.w = out_w;
    out.grid.resize(static_cast<std::size_t>(out_h) * out_w);

    std::vector<double> weight(static_cast<std::size_t>(nc));
    for (int oy = 0; oy < out_h; ++oy) {
        const double sy = (oy + 0.5) * y_scale + y_off;
        const double syc = std::clamp(sy, 0.0, static_cast<double>(mask.h - 1));
        const int y0 = static_cast<int>(syc);
        const int y1 = std::min(y0 + 1, mask.h - 1);
        const double fy = syc - y0;
        for (int ox = 0; ox < out_w; ++ox) {
            const int sxi = geom.hflip ? out_w - 1 - ox : ox;
            const double sx = (sxi + 0.5) * x_scale + x_off;
            const double sxc = std::clamp(sx, 0.0, static_cast<double>(mask.w - 1));
            const int x0 = static_cast<int>(sxc);
            const int x1 = std::min(x0 + 1, mask.w - 1);
            const double fx = sxc - x0;

            std::fill(weight.begin(), weight.end(), 0.0);
            auto add = [&](int yy, int xx, double wgt) {
                const std::int32_t id = mask.at(yy, xx);
                const auto it = std::lower_bound(mask.present_ids.begin(), mask.present_ids.end(), id);
                weight[static_cast<std::size_t>(it - mask.present_ids.begin())] += wgt;
            };
            add(y0, x0, (1.0 - fy) * (1.0 - fx));
            add(y0, x1, (1.0 - fy) * fx);
            add(y1, x0, fy * (1.0 - fx));
            add(y1, x1, fy * fx);

            int best = 0;
            for (int c = 1; c < nc; ++c)
                if (weight[static_cast<std::size_t>(c)] > weight[static_cast<std::size_t>(best)]) best = c;
            out.at(oy, ox) = mask.present_ids[static_cast<std::size_t>(best)];
        }
    }

    std::vector<std::int32_t> ids = out.grid;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    out.present_ids = std::move(ids);
    return out;
}

}  // namespace r2o
