#include "r2o/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "r2o/refine.hpp"

namespace r2o {

std::vector<BinaryMask> masks_from_labels(const LabelMap& map) {
    std::vector<BinaryMask> out(static_cast<std::size_t>(map.n_labels), BinaryMask(map.h, map.w));
    for (int y = 0; y < map.h; ++y)
        for (int x = 0; x < map.w; ++x) out[static_cast<std::size_t>(map.at(y, x))].at(y, x) = 1;
    return out;
}

double iou(const BinaryMask& a, const BinaryMask& b) {
    if (a.h != b.h || a.w != b.w) throw std::invalid_argument("iou: dimension mismatch");
    long inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        const bool av = a.v[i] != 0, bv = b.v[i] != 0;
        inter += av && bv;
        uni += av || bv;
    }
    if (uni == 0) return 1.0;  // both empty
    return static_cast<double>(inter) / static_cast<double>(uni);
}

AboReport abo(const std::vector<BinaryMask>& gt, const std::vector<BinaryMask>& proposals) {
    if (gt.empty()) throw std::invalid_argument("abo: no ground-truth regions");
    if (proposals.empty()) throw std::invalid_argument("abo: no proposals");
    AboReport report;
    report.best_iou.reserve(gt.size());
    for (const BinaryMask& g : gt) {
        double best = 0.0;
        for (const BinaryMask& p : proposals) best = std::max(best, iou(g, p));
        report.best_iou.push_back(best);
    }
    double sum = 0.0;
    for (double b : report.best_iou) sum += b;
    report.abo = sum / static_cast<double>(report.best_iou.size());
    return report;
}

namespace {

// Potential-based O(n^2 m) assignment for n <= m, 1-indexed internally.
std::vector<int> hungarian_rows_le_cols(const std::vector<std::vector<double>>& a) {
    const int n = static_cast<int>(a.size());
    const int m = static_cast<int>(a[0].size());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(m) + 1, 0.0);
    std::vector<int> p(static_cast<std::size_t>(m) + 1, 0), way(static_cast<std::size_t>(m) + 1, 0);

    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(m) + 1, inf);
        std::vector<char> used(static_cast<std::size_t>(m) + 1, 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            const int i0 = p[static_cast<std::size_t>(j0)];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= m; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                const double cur = a[static_cast<std::size_t>(i0 - 1)][static_cast<std::size_t>(j - 1)] -
                                   u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0);
    }

    std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
    for (int j = 1; j <= m; ++j)
        if (p[static_cast<std::size_t>(j)] > 0) row_to_col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
    return row_to_col;
}

}  // namespace

std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
    if (cost.empty() || cost[0].empty()) throw std::invalid_argument("hungarian: empty matrix");
    const std::size_t n = cost.size(), m = cost[0].size();
    for (const auto& row : cost) {
        if (row.size() != m) throw std::invalid_argument("hungarian: ragged matrix");
        for (double c : row)
            if (!std::isfinite(c)) throw std::invalid_argument("hungarian: non-finite cost");
    }
    if (n <= m) return hungarian_rows_le_cols(cost);

    // Transpose, solve, invert the mapping.
    std::vector<std::vector<double>> t(m, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) t[j][i] = cost[i][j];
    const std::vector<int> col_to_row = hungarian_rows_le_cols(t);
    std::vector<int> row_to_col(n, -1);
    for (std::size_t j = 0; j < m; ++j)
        if (col_to_row[j] >= 0) row_to_col[static_cast<std::size_t>(col_to_row[j])] = static_cast<int>(j);
    return row_to_col;
}

FgSegResult unsup_fg_segment(const Tensor& feats, const BinaryMask& gt, int k, std::uint64_t seed) {
    if (feats.rank() != 3) throw std::invalid_argument("unsup_fg_segment: expected [H, W, D] features");
    const int fh = feats.dim(0), fw = feats.dim(1), d = feats.dim(2);

    std::vector<std::vector<double>> points;
    points.reserve(static_cast<std::size_t>(fh) * fw);
    for (int y = 0; y < fh; ++y)
        for (int x = 0; x < fw; ++x) {
            const double* f = feats.data() + (static_cast<std::size_t>(y) * fw + x) * d;
            points.emplace_back(f, f + d);
        }
    const ClusterModel model = kmeans(points, k, seed);

    LabelMap grid(fh, fw);
    for (int y = 0; y < fh; ++y)
        for (int x = 0; x < fw; ++x)
            grid.at(y, x) = model.assignment[static_cast<std::size_t>(y) * fw + x];
    grid.n_labels = model.k;
    const LabelMap up = upsample_labels_nearest(grid, gt.h, gt.w);

    // 2 x K cost = 1 - IoU against {foreground, background}.
    BinaryMask gt_bg(gt.h, gt.w);
    for (std::size_t i = 0; i < gt.v.size(); ++i) gt_bg.v[i] = gt.v[i] ? 0 : 1;

    std::vector<BinaryMask> clusters(static_cast<std::size_t>(model.k), BinaryMask(gt.h, gt.w));
    for (int y = 0; y < gt.h; ++y)
        for (int x = 0; x < gt.w; ++x) clusters[static_cast<std::size_t>(up.at(y, x))].at(y, x) = 1;

    std::vector<std::vector<double>> cost(2, std::vector<double>(static_cast<std::size_t>(model.k)));
    for (int c = 0; c < model.k; ++c) {
        cost[0][static_cast<std::size_t>(c)] = 1.0 - iou(gt, clusters[static_cast<std::size_t>(c)]);
        cost[1][static_cast<std::size_t>(c)] = 1.0 - iou(gt_bg, clusters[static_cast<std::size_t>(c)]);
    }
    const std::vector<int> assign = hungarian(cost);

    FgSegResult res;
    res.fg_cluster = assign[0];
    res.fg = clusters[static_cast<std::size_t>(assign[0])];
    BinaryMask pred_bg(gt.h, gt.w);
    for (std::size_t i = 0; i < pred_bg.v.size(); ++i) pred_bg.v[i] = res.fg.v[i] ? 0 : 1;
    res.fg_iou = iou(res.fg, gt);
    res.bg_iou = iou(pred_bg, gt_bg);
    res.miou = 0.5 * (res.fg_iou + res.bg_iou);
    return res;
}

double miou(const std::vector<std::vector<long>>& confusion) {
    const std::size_t k = confusion.size();
    for (const auto& row : confusion)
        if (row.size() != k) throw std::invalid_argument("miou: confusion matrix must be square");
    double sum = 0.0;
    int kept = 0;
    for (std::size_t c = 0; c < k; ++c) {
        long tp = confusion[c][c];
        long fn = 0, fp = 0;
        for (std::size_t j = 0; j < k; ++j) {
            if (j != c) {
                fn += confusion[c][j];
                fp += confusion[j][c];
            }
        }
        const long denom = tp + fp + fn;
        if (denom == 0) continue;  // absent from both GT and prediction
        sum += static_cast<double>(tp) / static_cast<double>(denom);
        ++kept;
    }
    return kept ? sum / kept : 1.0;
}

}  // namespace r2o
