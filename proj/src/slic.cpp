#include "r2o/slic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace r2o {

namespace {

double gradient_mag(const LabImage& img, int y, int x) {
    const int xm = std::max(0, x - 1), xp = std::min(img.w - 1, x + 1);
    const int ym = std::max(0, y - 1), yp = std::min(img.h - 1, y + 1);
    double g = 0.0;
    for (int c = 0; c < 3; ++c) {
        const double dx = img.at(y, xp, c) - img.at(y, xm, c);
        const double dy = img.at(yp, x, c) - img.at(ym, x, c);
        g += dx * dx + dy * dy;
    }
    return g;
}

struct Component {
    std::int32_t label;
    std::vector<int> pixels;  // flat indices, discovery order
};

}  // namespace

SlicResult slic_segment(const LabImage& img, const SlicConfig& cfg, std::uint64_t) {
    if (cfg.n_segments < 1) throw std::invalid_argument("slic_segment: n_segments must be >= 1");
    if (cfg.compactness <= 0.0) throw std::invalid_argument("slic_segment: compactness must be positive");
    if (cfg.max_iters < 1) throw std::invalid_argument("slic_segment: max_iters must be >= 1");

    const int h = img.h, w = img.w;
    const long area = static_cast<long>(h) * w;
    const int n = static_cast<int>(std::min<long>(cfg.n_segments, area));

    // Grid of at most n seeds, ny*nx <= n, aspect following the image.
    int ny = std::clamp(static_cast<int>(std::sqrt(static_cast<double>(n) * h / w)), 1, h);
    int nx = std::clamp(n / ny, 1, w);
    const double spacing = std::sqrt(static_cast<double>(area) / n);

    std::vector<SlicCenter> centers;
    centers.reserve(static_cast<std::size_t>(ny) * nx);
    for (int gy = 0; gy < ny; ++gy) {
        for (int gx = 0; gx < nx; ++gx) {
            int cy = std::min(h - 1, static_cast<int>((gy + 0.5) * h / ny));
            int cx = std::min(w - 1, static_cast<int>((gx + 0.5) * w / nx));
            // Move to the lowest-gradient pixel in the 3x3 neighborhood
            // (strict improvement only, so flat images keep the grid).
            double best = gradient_mag(img, cy, cx);
            int by = cy, bx = cx;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int yy = cy + dy, xx = cx + dx;
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    const double g = gradient_mag(img, yy, xx);
                    if (g < best) {
                        best = g;
                        by = yy;
                        bx = xx;
                    }
                }
            centers.push_back({img.at(by, bx, 0), img.at(by, bx, 1), img.at(by, bx, 2),
                               static_cast<double>(by), static_cast<double>(bx)});
        }
    }
    const int k = static_cast<int>(centers.size());

    std::vector<std::int32_t> assign(static_cast<std::size_t>(area), -1);
    std::vector<double> dist(static_cast<std::size_t>(area));
    const double m2s2 = (cfg.compactness * cfg.compactness) / (spacing * spacing);

    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
        for (int ci = 0; ci < k; ++ci) {
            const SlicCenter& c = centers[static_cast<std::size_t>(ci)];
            const int y0 = std::max(0, static_cast<int>(std::floor(c.y - spacing)));
            const int y1 = std::min(h - 1, static_cast<int>(std::ceil(c.y + spacing)));
            const int x0 = std::max(0, static_cast<int>(std::floor(c.x - spacing)));
            const int x1 = std::min(w - 1, static_cast<int>(std::ceil(c.x + spacing)));
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    const double dl = img.at(y, x, 0) - c.l;
                    const double da = img.at(y, x, 1) - c.a;
                    const double db = img.at(y, x, 2) - c.b;
                    const double dy = y - c.y, dx = x - c.x;
                    const double d = dl * dl + da * da + db * db + (dy * dy + dx * dx) * m2s2;
                    const std::size_t px = static_cast<std::size_t>(y) * w + x;
                    // Ties go to the later center; with an even grid this
                    // splits midlines the way the seed layout implies.
                    if (d <= dist[px]) {
                        dist[px] = d;
                        assign[px] = ci;
                    }
                }
        }
        // Pixels outside every window (possible with sparse grids): nearest
        // center globally.
        for (long px = 0; px < area; ++px) {
            if (assign[static_cast<std::size_t>(px)] >= 0 &&
                dist[static_cast<std::size_t>(px)] < std::numeric_limits<double>::infinity())
                continue;
            const int y = static_cast<int>(px / w), x = static_cast<int>(px % w);
            double best = std::numeric_limits<double>::infinity();
            std::int32_t bi = 0;
            for (int ci = 0; ci < k; ++ci) {
                const SlicCenter& c = centers[static_cast<std::size_t>(ci)];
                const double dl = img.at(y, x, 0) - c.l;
                const double da = img.at(y, x, 1) - c.a;
                const double db = img.at(y, x, 2) - c.b;
                const double dy = y - c.y, dx = x - c.x;
                const double d = dl * dl + da * da + db * db + (dy * dy + dx * dx) * m2s2;
                if (d <= best) {
                    best = d;
                    bi = ci;
                }
            }
            assign[static_cast<std::size_t>(px)] = bi;
        }
        // Update centers to cluster means; empty clusters keep their state.
        std::vector<SlicCenter> sums(static_cast<std::size_t>(k));
        std::vector<long> counts(static_cast<std::size_t>(k), 0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const std::int32_t ci = assign[static_cast<std::size_t>(y) * w + x];
                SlicCenter& s = sums[static_cast<std::size_t>(ci)];
                s.l += img.at(y, x, 0);
                s.a += img.at(y, x, 1);
                s.b += img.at(y, x, 2);
                s.y += y;
                s.x += x;
                ++counts[static_cast<std::size_t>(ci)];
            }
        for (int ci = 0; ci < k; ++ci) {
            if (!counts[static_cast<std::size_t>(ci)]) continue;
            const double inv = 1.0 / static_cast<double>(counts[static_cast<std::size_t>(ci)]);
            SlicCenter& c = centers[static_cast<std::size_t>(ci)];
            const SlicCenter& s = sums[static_cast<std::size_t>(ci)];
            c = {s.l * inv, s.a * inv, s.b * inv, s.y * inv, s.x * inv};
        }
    }

    // Connectivity enforcement. Fragments are components that are not the
    // largest piece of their label or fall below the size threshold; each
    // merges into the adjacent final region with the longest shared
    // boundary.
    std::vector<int> comp_of(static_cast<std::size_t>(area), -1);
    std::vector<Component> comps;
    std::vector<int> stack;
    for (long start = 0; start < area; ++start) {
        if (comp_of[static_cast<std::size_t>(start)] >= 0) continue;
        const int id = static_cast<int>(comps.size());
        comps.push_back({assign[static_cast<std::size_t>(start)], {}});
        stack.assign(1, static_cast<int>(start));
        comp_of[static_cast<std::size_t>(start)] = id;
        while (!stack.empty()) {
            const int px = stack.back();
            stack.pop_back();
            comps[static_cast<std::size_t>(id)].pixels.push_back(px);
            const int y = px / w, x = px % w;
            const int nb[4] = {y > 0 ? px - w : -1, y < h - 1 ? px + w : -1,
                               x > 0 ? px - 1 : -1, x < w - 1 ? px + 1 : -1};
            for (int q : nb) {
                if (q < 0 || comp_of[static_cast<std::size_t>(q)] >= 0) continue;
                if (assign[static_cast<std::size_t>(q)] != comps[static_cast<std::size_t>(id)].label) continue;
                comp_of[static_cast<std::size_t>(q)] = id;
                stack.push_back(q);
            }
        }
    }

    const double threshold = cfg.min_region_fraction * static_cast<double>(area) / n;
    std::vector<int> largest_comp(static_cast<std::size_t>(k), -1);
    for (int ci = 0; ci < static_cast<int>(comps.size()); ++ci) {
        const auto& comp = comps[static_cast<std::size_t>(ci)];
        int& cur = largest_comp[static_cast<std::size_t>(comp.label)];
        if (cur < 0 || comps[static_cast<std::size_t>(cur)].pixels.size() < comp.pixels.size()) cur = ci;
    }

    // region_of[component] = final region id, -1 while pending.
    std::vector<int> region_of(comps.size(), -1);
    int n_regions = 0;
    for (std::int32_t label = 0; label < k; ++label) {
        const int ci = largest_comp[static_cast<std::size_t>(label)];
        if (ci < 0) continue;
        if (static_cast<double>(comps[static_cast<std::size_t>(ci)].pixels.size()) >= threshold)
            region_of[static_cast<std::size_t>(ci)] = n_regions++;
    }
    if (n_regions == 0) {
        // Everything undersized; keep the single largest component.
        int best = 0;
        for (int ci = 1; ci < static_cast<int>(comps.size()); ++ci)
            if (comps[static_cast<std::size_t>(ci)].pixels.size() >
                comps[static_cast<std::size_t>(best)].pixels.size())
                best = ci;
        region_of[static_cast<std::size_t>(best)] = n_regions++;
    }

    bool pending = true;
    while (pending) {
        pending = false;
        bool progressed = false;
        for (int ci = 0; ci < static_cast<int>(comps.size()); ++ci) {
            if (region_of[static_cast<std::size_t>(ci)] >= 0) continue;
            // Shared boundary length with each adjacent assigned region.
            std::map<int, long> boundary;
            for (int px : comps[static_cast<std::size_t>(ci)].pixels) {
                const int y = px / w, x = px % w;
                const int nb[4] = {y > 0 ? px - w : -1, y < h - 1 ? px + w : -1,
                                   x > 0 ? px - 1 : -1, x < w - 1 ? px + 1 : -1};
                for (int q : nb) {
                    if (q < 0) continue;
                    const int qc = comp_of[static_cast<std::size_t>(q)];
                    const int qr = region_of[static_cast<std::size_t>(qc)];
                    if (qr >= 0 && qc != ci) ++boundary[qr];
                }
            }
            if (boundary.empty()) {
                pending = true;
                continue;
            }
            int target = -1;
            long best_len = -1;
            for (const auto& [region, len] : boundary)
                if (len > best_len) {  // map iterates regions ascending, so ties keep the smaller id
                    best_len = len;
                    target = region;
                }
            region_of[static_cast<std::size_t>(ci)] = target;
            progressed = true;
        }
        if (pending && !progressed)
            throw std::logic_error("slic_segment: connectivity merge failed to make progress");
    }

    SlicResult res;
    res.labels = LabelMap(h, w);
    for (long px = 0; px < area; ++px)
        res.labels.labels[static_cast<std::size_t>(px)] =
            region_of[static_cast<std::size_t>(comp_of[static_cast<std::size_t>(px)])];
    finalize_labels(res.labels);
    res.n_regions = res.labels.n_labels;

    res.centers.assign(static_cast<std::size_t>(res.n_regions), SlicCenter{});
    std::vector<long> counts(static_cast<std::size_t>(res.n_regions), 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            SlicCenter& s = res.centers[static_cast<std::size_t>(res.labels.at(y, x))];
            s.l += img.at(y, x, 0);
            s.a += img.at(y, x, 1);
            s.b += img.at(y, x, 2);
            s.y += y;
            s.x += x;
            ++counts[static_cast<std::size_t>(res.labels.at(y, x))];
        }
    for (int r = 0; r < res.n_regions; ++r) {
        const double inv = 1.0 / static_cast<double>(counts[static_cast<std::size_t>(r)]);
        SlicCenter& c = res.centers[static_cast<std::size_t>(r)];
        c = {c.l * inv, c.a * inv, c.b * inv, c.y * inv, c.x * inv};
    }
    return res;
}

SlicResult grid_prior(int h, int w, int n) {
    if (h < 1 || w < 1 || n < 1) throw std::invalid_argument("grid_prior: bad arguments");
    n = std::min({n, h, w});
    SlicResult res;
    res.labels = LabelMap(h, w);
    for (int y = 0; y < h; ++y) {
        const int gy = std::min(n - 1, y * n / h);
        for (int x = 0; x < w; ++x) {
            const int gx = std::min(n - 1, x * n / w);
            res.labels.at(y, x) = gy * n + gx;
        }
    }
    finalize_labels(res.labels);
    res.n_regions = res.labels.n_labels;
    res.centers.assign(static_cast<std::size_t>(res.n_regions), SlicCenter{});
    std::vector<long> counts(static_cast<std::size_t>(res.n_regions), 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            SlicCenter& c = res.centers[static_cast<std::size_t>(res.labels.at(y, x))];
            c.y += y;
            c.x += x;
            ++counts[static_cast<std::size_t>(res.labels.at(y, x))];
        }
    for (int r = 0; r < res.n_regions; ++r) {
        res.centers[static_cast<std::size_t>(r)].y /= static_cast<double>(counts[static_cast<std::size_t>(r)]);
        res.centers[static_cast<std::size_t>(r)].x /= static_cast<double>(counts[static_cast<std::size_t>(r)]);
    }
    return res;
}

}  // namespace r2o
