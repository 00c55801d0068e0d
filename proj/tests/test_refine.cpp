#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "r2o/refine.hpp"
#include "r2o/rng.hpp"

using namespace r2o;

namespace {

// Brute-force minimum of the size-normalized clustering objective over all
// assignments of n points to k clusters: (1/k) sum over nonempty clusters
// of the mean within-cluster squared distance to the cluster mean.
double normalized_objective(const std::vector<std::vector<double>>& pts,
                            const std::vector<int>& assign, int k) {
    const std::size_t dim = pts[0].size();
    std::vector<std::vector<double>> mean(static_cast<std::size_t>(k), std::vector<double>(dim, 0.0));
    std::vector<int> count(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        for (std::size_t d = 0; d < dim; ++d) mean[static_cast<std::size_t>(assign[i])][d] += pts[i][d];
        ++count[static_cast<std::size_t>(assign[i])];
    }
    for (int c = 0; c < k; ++c)
        if (count[static_cast<std::size_t>(c)])
            for (std::size_t d = 0; d < dim; ++d)
                mean[static_cast<std::size_t>(c)][d] /= count[static_cast<std::size_t>(c)];
    double obj = 0.0;
    for (int c = 0; c < k; ++c) {
        if (!count[static_cast<std::size_t>(c)]) continue;
        double sse = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (assign[i] != c) continue;
            for (std::size_t d = 0; d < dim; ++d) {
                const double diff = pts[i][d] - mean[static_cast<std::size_t>(c)][d];
                sse += diff * diff;
            }
        }
        obj += sse / count[static_cast<std::size_t>(c)];
    }
    return obj / k;
}

double brute_force_optimum(const std::vector<std::vector<double>>& pts, int k) {
    const int n = static_cast<int>(pts.size());
    std::vector<int> assign(static_cast<std::size_t>(n), 0);
    double best = 1e300;
    const long total = static_cast<long>(std::pow(k, n));
    for (long code = 0; code < total; ++code) {
        long c = code;
        for (int i = 0; i < n; ++i) {
            assign[static_cast<std::size_t>(i)] = static_cast<int>(c % k);
            c /= k;
        }
        best = std::min(best, normalized_objective(pts, assign, k));
    }
    return best;
}

CurriculumConfig paper_scale_curriculum() {
    CurriculumConfig cfg;
    cfg.k0 = 128;
    cfg.kf = 4;
    cfg.t_alpha = 40;
    cfg.total_epochs = 300;
    cfg.kind = CurriculumKind::cosine;
    return cfg;
}

LabelMap labels_of(int h, int w, const std::vector<std::int32_t>& v, int n) {
    LabelMap map(h, w);
    map.labels = v;
    map.n_labels = n;
    return map;
}

}  // namespace

TEST_CASE("cosine schedule hits the documented endpoints") {
    const CurriculumConfig cfg = paper_scale_curriculum();
    CHECK(k_at(cfg, 0) == 128);
    CHECK(k_at(cfg, 39) == 128);
    CHECK(k_at(cfg, 40) == 128);  // cos 0 = 1 restores K0
    CHECK(k_at(cfg, 300) == 4);
    // Midpoint: round(4 + cos(pi/4) * 124) = 92.
    CHECK(k_at(cfg, 170) == 92);
}

TEST_CASE("literal cosine transcription does not reach kf") {
    CurriculumConfig cfg = paper_scale_curriculum();
    cfg.literal_cosine = true;
    CHECK(k_at(cfg, 0) == 128);
    CHECK(k_at(cfg, 40) == 128);
    CHECK(k_at(cfg, 300) > 100);  // cos(2/pi) ~ 0.804 leaves K near 104
}

TEST_CASE("cosine schedule is non-increasing for region-to-object configs") {
    const CurriculumConfig cfg = paper_scale_curriculum();
    int prev = k_at(cfg, 0);
    for (int t = 1; t <= 300; ++t) {
        const int k = k_at(cfg, t);
        CHECK(k <= prev);
        prev = k;
    }
}

TEST_CASE("linear schedule endpoints and monotonicity") {
    CurriculumConfig cfg = paper_scale_curriculum();
    cfg.kind = CurriculumKind::linear;
    CHECK(k_at(cfg, 0) == 128);
    CHECK(k_at(cfg, 300) == 4);
    int prev = k_at(cfg, 0);
    for (int t = 1; t <= 300; ++t) {
        const int k = k_at(cfg, t);
        CHECK(k <= prev);
        prev = k;
    }
}

TEST_CASE("piecewise schedule steps at the configured epochs") {
    CurriculumConfig cfg = paper_scale_curriculum();
    cfg.kind = CurriculumKind::piecewise;
    cfg.piecewise_steps = {{100, 64}, {200, 16}, {280, 4}};
    CHECK(k_at(cfg, 0) == 128);
    CHECK(k_at(cfg, 99) == 128);
    CHECK(k_at(cfg, 100) == 64);
    CHECK(k_at(cfg, 250) == 16);
    CHECK(k_at(cfg, 300) == 4);
}

TEST_CASE("fixed schedule allows K = 1") {
    CurriculumConfig cfg;
    cfg.k0 = 1;
    cfg.kind = CurriculumKind::fixed;
    cfg.total_epochs = 10;
    cfg.t_alpha = 0;
    CHECK(k_at(cfg, 0) == 1);
    CHECK(k_at(cfg, 10) == 1);
}

TEST_CASE("scheduled K is clamped to at least 2") {
    CurriculumConfig cfg = paper_scale_curriculum();
    cfg.k0 = 3;
    cfg.kf = 2;
    CHECK(k_at(cfg, 300) == 2);
    for (int t = 0; t <= 300; ++t) CHECK(k_at(cfg, t) >= 2);
}

TEST_CASE("k_at rejects out-of-range epochs") {
    const CurriculumConfig cfg = paper_scale_curriculum();
    CHECK_THROWS_AS(k_at(cfg, -1), std::invalid_argument);
    CHECK_THROWS_AS(k_at(cfg, 301), std::invalid_argument);
}

TEST_CASE("object-to-region cosine rises from kf to k0") {
    CurriculumConfig cfg = paper_scale_curriculum();
    std::swap(cfg.k0, cfg.kf);  // 4 -> 128
    CHECK(k_at(cfg, 0) == 4);
    CHECK(k_at(cfg, 300) == 128);
}

TEST_CASE("pool_regions over a uniform map gives the global mean") {
    Tensor mid({2, 2, 3});
    Rng rng(3);
    for (std::size_t i = 0; i < mid.size(); ++i) mid.data()[i] = rng.uniform();
    const LabelMap labels = labels_of(2, 2, {0, 0, 0, 0}, 1);
    const RegionEmbeddings embs = pool_regions(mid, labels);
    REQUIRE(embs.size() == 1);
    CHECK(embs[0].cells == 4);
    for (int d = 0; d < 3; ++d) {
        double mean = 0.0;
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 2; ++x) mean += mid(y, x, d);
        CHECK(embs[0].mean[static_cast<std::size_t>(d)] == doctest::Approx(mean / 4.0).epsilon(1e-15));
    }
}

TEST_CASE("pool_regions single-cell region returns that cell") {
    Tensor mid({2, 2, 2});
    mid(0, 0, 0) = 5.0;
    mid(0, 0, 1) = -1.0;
    mid(1, 1, 0) = 2.0;
    const LabelMap labels = labels_of(2, 2, {0, 1, 1, 1}, 2);
    const RegionEmbeddings embs = pool_regions(mid, labels);
    REQUIRE(embs.size() == 2);
    CHECK(embs[0].region_id == 0);
    CHECK(embs[0].cells == 1);
    CHECK(embs[0].mean[0] == 5.0);
    CHECK(embs[0].mean[1] == -1.0);
}

TEST_CASE("pool_regions on a constant map gives equal embeddings") {
    Tensor mid({2, 2, 2});
    for (std::size_t i = 0; i < mid.size(); ++i) mid.data()[i] = 0.25;
    const LabelMap labels = labels_of(2, 2, {0, 0, 1, 1}, 2);
    const RegionEmbeddings embs = pool_regions(mid, labels);
    REQUIRE(embs.size() == 2);
    CHECK(embs[0].mean == embs[1].mean);
}

TEST_CASE("pool_regions omits regions with no cells") {
    Tensor mid({1, 2, 1});
    const LabelMap labels = labels_of(1, 2, {0, 2}, 3);  // label 1 unused
    const RegionEmbeddings embs = pool_regions(mid, labels);
    REQUIRE(embs.size() == 2);
    CHECK(embs[0].region_id == 0);
    CHECK(embs[1].region_id == 2);
}

TEST_CASE("downsample_labels keeps uniform maps uniform") {
    const LabelMap map = labels_of(4, 4, std::vector<std::int32_t>(16, 3 % 1), 1);
    const LabelMap ds = downsample_labels(map, 2, 2);
    for (std::int32_t l : ds.labels) CHECK(l == 0);
}

TEST_CASE("downsample_labels reproduces blockwise-constant maps") {
    LabelMap map(4, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) map.at(y, x) = (y / 2) * 2 + (x / 2);
    map.n_labels = 4;
    const LabelMap ds = downsample_labels(map, 2, 2);
    CHECK(ds.at(0, 0) == 0);
    CHECK(ds.at(0, 1) == 1);
    CHECK(ds.at(1, 0) == 2);
    CHECK(ds.at(1, 1) == 3);
}

TEST_CASE("downsample_labels majority with counting oracle") {
    // 2x2 block with labels {1,1,1,0}: majority 1. Block {0,1,2,2}: 2.
    LabelMap map(2, 4);
    map.labels = {1, 1, 0, 1, 1, 0, 2, 2};
    map.n_labels = 3;
    const LabelMap ds = downsample_labels(map, 1, 2);
    CHECK(ds.at(0, 0) == 1);
    CHECK(ds.at(0, 1) == 2);
    // Tie case: {0,0,1,1} -> smaller label id.
    LabelMap tie(2, 2);
    tie.labels = {0, 1, 1, 0};
    tie.n_labels = 2;
    CHECK(downsample_labels(tie, 1, 1).at(0, 0) == 0);
}

TEST_CASE("kmeans attains the brute-force optimum on the 1-D fixture") {
    const std::vector<std::vector<double>> pts{{0.0}, {0.1}, {10.0}};
    const ClusterModel model = kmeans(pts, 2, 42);
    // Expected partition {{0, 0.1}, {10}}: objective (1/2) * (0.005/2 + 0).
    CHECK(model.inertia == doctest::Approx(0.00125).epsilon(1e-9));
    CHECK(model.assignment[0] == model.assignment[1]);
    CHECK(model.assignment[0] != model.assignment[2]);
    CHECK(model.inertia == doctest::Approx(brute_force_optimum(pts, 2)).epsilon(1e-9));
}

TEST_CASE("kmeans matches brute force on seeded small fixtures") {
    struct Fixture {
        std::vector<std::vector<double>> pts;
        int k;
        std::uint64_t seed;
    };
    const std::vector<Fixture> fixtures{
        {{{0, 0}, {0.2, 0}, {5, 5}, {5.3, 5.1}, {-4, 6}, {-4.2, 6.3}}, 3, 1},
        {{{0}, {0.5}, {8}, {8.4}, {20}}, 3, 2},
        {{{1, 1}, {1.1, 0.9}, {7, 7}, {7.2, 7.2}}, 2, 3},
        {{{0}, {3}, {6}, {9}, {12}, {15}, {18}, {21}}, 3, 4},
    };
    for (const Fixture& f : fixtures) {
        const ClusterModel model = kmeans(f.pts, f.k, f.seed);
        const double best = brute_force_optimum(f.pts, f.k);
        CHECK(model.inertia == doctest::Approx(best).epsilon(1e-9));

        // Exhaustive single-move search: no reassignment of one point may
        // lower the objective (implied by global optimality).
        std::vector<int> assign = model.assignment;
        const double base = normalized_objective(f.pts, assign, model.k);
        for (std::size_t i = 0; i < f.pts.size(); ++i) {
            const int orig = assign[i];
            for (int c = 0; c < model.k; ++c) {
                if (c == orig) continue;
                assign[i] = c;
                CHECK(normalized_objective(f.pts, assign, model.k) >= base - 1e-12);
            }
            assign[i] = orig;
        }
    }
}

TEST_CASE("kmeans with K = n puts every distinct point in its own cluster") {
    const std::vector<std::vector<double>> pts{{0, 1}, {2, 3}, {4, 5}, {6, 7}};
    const ClusterModel model = kmeans(pts, 4, 9);
    CHECK(model.inertia == doctest::Approx(0.0));
    std::vector<int> seen = model.assignment;
    std::sort(seen.begin(), seen.end());
    CHECK(std::unique(seen.begin(), seen.end()) == seen.end());
}

TEST_CASE("kmeans on identical points has zero inertia") {
    const std::vector<std::vector<double>> pts(5, std::vector<double>{1.0, 2.0});
    for (int k : {1, 2, 5}) {
        const ClusterModel model = kmeans(pts, k, 11);
        CHECK(model.inertia == doctest::Approx(0.0));
    }
}

TEST_CASE("kmeans clamps K above the point count and flags it") {
    const std::vector<std::vector<double>> pts{{0.0}, {1.0}};
    const ClusterModel model = kmeans(pts, 5, 13);
    CHECK(model.k == 2);
    CHECK(model.k_clamped);
}

TEST_CASE("kmeans total SSE is non-increasing across Lloyd iterations") {
    Rng rng(17);
    for (int inst = 0; inst < 200; ++inst) {
        const int n = 5 + static_cast<int>(rng.uniform_int(40));
        const int d = 1 + static_cast<int>(rng.uniform_int(4));
        const int k = 2 + static_cast<int>(rng.uniform_int(4));
        std::vector<std::vector<double>> pts(static_cast<std::size_t>(n),
                                             std::vector<double>(static_cast<std::size_t>(d)));
        for (auto& p : pts)
            for (double& v : p) v = rng.uniform(-5.0, 5.0);
        const ClusterModel model = kmeans(pts, std::min(k, n), derive_seed(17, {static_cast<std::uint64_t>(inst)}));
        for (std::size_t i = 1; i < model.iteration_sse.size(); ++i)
            CHECK(model.iteration_sse[i] <= model.iteration_sse[i - 1] + 1e-9);
    }
}

TEST_CASE("kmeans is deterministic given the seed") {
    Rng rng(23);
    std::vector<std::vector<double>> pts(30, std::vector<double>(3));
    for (auto& p : pts)
        for (double& v : p) v = rng.uniform();
    const ClusterModel a = kmeans(pts, 5, 99);
    const ClusterModel b = kmeans(pts, 5, 99);
    CHECK(a.assignment == b.assignment);
    CHECK(a.inertia == b.inertia);
}

TEST_CASE("kmeans rejects empty input") {
    CHECK_THROWS_AS(kmeans({}, 2, 0), std::invalid_argument);
}

TEST_CASE("refine_masks: K = 1 labels every cell 0") {
    Tensor mid({2, 2, 2});
    Rng rng(29);
    for (std::size_t i = 0; i < mid.size(); ++i) mid.data()[i] = rng.uniform();
    const LabelMap labels = labels_of(2, 2, {0, 1, 2, 3}, 4);
    std::vector<RegionEmbeddings> batch{pool_regions(mid, labels)};
    const ClusterModel model = kmeans(concat_embeddings(batch), 1, 0);
    const auto masks = refine_masks(batch, model, {labels});
    REQUIRE(masks.size() == 1);
    for (std::int32_t id : masks[0].grid) CHECK(id == 0);
    CHECK(masks[0].present_ids == std::vector<std::int32_t>{0});
}

TEST_CASE("refine_masks with mutually distant regions equals the prior up to relabeling") {
    // Four regions with far-apart embeddings, K = 4.
    Tensor mid({2, 2, 2});
    mid(0, 0, 0) = 0.0;
    mid(0, 1, 0) = 10.0;
    mid(1, 0, 0) = 20.0;
    mid(1, 1, 0) = 30.0;
    const LabelMap labels = labels_of(2, 2, {0, 1, 2, 3}, 4);
    std::vector<RegionEmbeddings> batch{pool_regions(mid, labels)};
    const ClusterModel model = kmeans(concat_embeddings(batch), 4, 31);
    const auto masks = refine_masks(batch, model, {labels});

    // Permutation-matching oracle: the mask must be a relabeling of the prior.
    std::map<std::int32_t, std::int32_t> perm;
    for (int i = 0; i < 4; ++i) {
        const std::int32_t from = labels.labels[static_cast<std::size_t>(i)];
        const std::int32_t to = masks[0].grid[static_cast<std::size_t>(i)];
        if (perm.count(from)) CHECK(perm[from] == to);
        perm[from] = to;
    }
    std::vector<std::int32_t> targets;
    for (const auto& [from, to] : perm) targets.push_back(to);
    std::sort(targets.begin(), targets.end());
    CHECK(std::unique(targets.begin(), targets.end()) == targets.end());
}

TEST_CASE("two identical images get identical refined masks") {
    Tensor mid({2, 2, 2});
    Rng rng(37);
    for (std::size_t i = 0; i < mid.size(); ++i) mid.data()[i] = rng.uniform();
    const LabelMap labels = labels_of(2, 2, {0, 0, 1, 1}, 2);
    const RegionEmbeddings embs = pool_regions(mid, labels);
    std::vector<RegionEmbeddings> batch{embs, embs};
    const ClusterModel model = kmeans(concat_embeddings(batch), 2, 41);
    const auto masks = refine_masks(batch, model, {labels, labels});
    CHECK(masks[0].grid == masks[1].grid);
}

TEST_CASE("refine_masks is batch-order invariant up to cluster permutation") {
    Rng rng(43);
    LabelMap labels = labels_of(2, 2, {0, 1, 2, 3}, 4);
    auto make_embs = [&]() {
        Tensor mid({2, 2, 3});
        for (std::size_t i = 0; i < mid.size(); ++i) mid.data()[i] = rng.uniform(-3.0, 3.0);
        return pool_regions(mid, labels);
    };
    const RegionEmbeddings a = make_embs(), b = make_embs(), c = make_embs();

    std::vector<RegionEmbeddings> fwd{a, b, c}, rev{c, b, a};
    const ClusterModel mf = kmeans(concat_embeddings(fwd), 3, 47);
    const ClusterModel mr = kmeans(concat_embeddings(rev), 3, 47);
    const auto masks_f = refine_masks(fwd, mf, {labels, labels, labels});
    const auto masks_r = refine_masks(rev, mr, {labels, labels, labels});

    // Same partition: cells sharing a cluster in one ordering must share
    // one in the other (compare via pairwise co-membership of image a).
    const RefinedMask& fa = masks_f[0];
    const RefinedMask& ra = masks_r[2];
    for (std::size_t i = 0; i < fa.grid.size(); ++i)
        for (std::size_t j = 0; j < fa.grid.size(); ++j)
            CHECK((fa.grid[i] == fa.grid[j]) == (ra.grid[i] == ra.grid[j]));
}

TEST_CASE("align_mask identity geometry is the identity") {
    RefinedMask mask;
    mask.h = mask.w = 4;
    mask.grid = {0, 0, 1, 1, 0, 0, 1, 1, 2, 2, 3, 3, 2, 2, 3, 3};
    mask.present_ids = {0, 1, 2, 3};
    const RefinedMask out = align_mask(mask, {Rect{0, 0, 1, 1}, false}, 4, 4);
    CHECK(out.grid == mask.grid);
    CHECK(out.present_ids == mask.present_ids);
}

TEST_CASE("align_mask full-frame flip mirrors the mask") {
    RefinedMask mask;
    mask.h = 2;
    mask.w = 4;
    mask.grid = {0, 1, 2, 3, 0, 1, 2, 3};
    mask.present_ids = {0, 1, 2, 3};
    const RefinedMask out = align_mask(mask, {Rect{0, 0, 1, 1}, true}, 2, 4);
    CHECK(out.grid == std::vector<std::int32_t>{3, 2, 1, 0, 3, 2, 1, 0});
}

TEST_CASE("crop strictly inside one cluster gives a uniform mask") {
    RefinedMask mask;
    mask.h = mask.w = 8;
    mask.grid.assign(64, 0);
    // Cluster 5 occupies the lower-right 4x4 block.
    for (int y = 4; y < 8; ++y)
        for (int x = 4; x < 8; ++x) mask.grid[static_cast<std::size_t>(y) * 8 + x] = 5;
    mask.present_ids = {0, 5};
    // Geometric containment: the crop [0.6, 0.95] x [0.6, 0.95] stays well
    // inside the block (cells 4.8..7.6 at mask resolution).
    const RefinedMask out = align_mask(mask, {Rect{0.6, 0.6, 0.95, 0.95}, false}, 4, 4);
    for (std::int32_t id : out.grid) CHECK(id == 5);
    CHECK(out.present_ids == std::vector<std::int32_t>{5});
}

TEST_CASE("align_mask commutes with cluster relabeling") {
    Rng rng(53);
    RefinedMask mask;
    mask.h = mask.w = 6;
    mask.grid.resize(36);
    for (std::int32_t& id : mask.grid) id = static_cast<std::int32_t>(rng.uniform_int(4));
    mask.present_ids = {0, 1, 2, 3};
    const std::vector<std::int32_t> perm{7, 3, 9, 1};  // injective relabel

    for (int trial = 0; trial < 10; ++trial) {
        // Random non-degenerate crop with coordinates that avoid exact
        // bilinear ties.
        const double y0 = rng.uniform(0.0, 0.4) + 0.013;
        const double x0 = rng.uniform(0.0, 0.4) + 0.017;
        const ViewGeometry geom{Rect{y0, x0, y0 + rng.uniform(0.3, 0.55), x0 + rng.uniform(0.3, 0.55)},
                                trial % 2 == 1};

        RefinedMask relabeled = mask;
        for (std::int32_t& id : relabeled.grid) id = perm[static_cast<std::size_t>(id)];
        std::vector<std::int32_t> ids = relabeled.grid;
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        relabeled.present_ids = ids;

        const RefinedMask out_then_perm = align_mask(mask, geom, 5, 5);
        const RefinedMask perm_then_out = align_mask(relabeled, geom, 5, 5);
        for (std::size_t i = 0; i < out_then_perm.grid.size(); ++i)
            CHECK(perm[static_cast<std::size_t>(out_then_perm.grid[i])] == perm_then_out.grid[i]);
    }
}

TEST_CASE("align_mask rejects invalid rectangles") {
    RefinedMask mask;
    mask.h = mask.w = 2;
    mask.grid = {0, 0, 0, 0};
    mask.present_ids = {0};
    CHECK_THROWS_AS(align_mask(mask, {Rect{0.5, 0.0, 0.5, 1.0}, false}, 2, 2), std::invalid_argument);
    CHECK_THROWS_AS(align_mask(mask, {Rect{0.0, 0.0, 1.1, 1.0}, false}, 2, 2), std::invalid_argument);
}
