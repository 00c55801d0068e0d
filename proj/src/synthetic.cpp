#include "r2o/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "r2o/rng.hpp"

namespace r2o {

void SyntheticCorpusSpec::validate() const {
    if (n_images < 0) throw std::invalid_argument("synthetic: n_images must be >= 0");
    if (side < 16) throw std::invalid_argument("synthetic: side must be >= 16");
    if (min_shapes < 1 || max_shapes < min_shapes || max_shapes > 3)
        throw std::invalid_argument("synthetic: shapes per image must be within 1..3");
    if (!(0.01 <= min_area_frac && min_area_frac <= max_area_frac && max_area_frac <= 0.6))
        throw std::invalid_argument("synthetic: per-shape area fraction must stay within [0.01, 0.6]");
    if (noise < 0.0 || noise > 0.2) throw std::invalid_argument("synthetic: noise outside [0, 0.2]");
    if (gradient < 0.0 || gradient > 0.5) throw std::invalid_argument("synthetic: gradient outside [0, 0.5]");
}

namespace {

struct Hsv {
    double h, s, v;
};

void hsv_to_rgb_local(const Hsv& c, double& r, double& g, double& b) {
    const double hh = std::fmod(c.h, 1.0) * 6.0;
    const int i = std::min(5, static_cast<int>(hh));
    const double f = hh - i;
    const double p = c.v * (1.0 - c.s);
    const double q = c.v * (1.0 - c.s * f);
    const double t = c.v * (1.0 - c.s * (1.0 - f));
    switch (i) {
        case 0: r = c.v; g = t; b = p; break;
        case 1: r = q; g = c.v; b = p; break;
        case 2: r = p; g = c.v; b = t; break;
        case 3: r = p; g = q; b = c.v; break;
        case 4: r = t; g = p; b = c.v; break;
        default: r = c.v; g = p; b = q; break;
    }
}

struct Placed {
    int y0, x0, y1, x1;  // bbox, half-open
};

bool bbox_overlaps(const Placed& a, const Placed& b) {
    return a.y0 < b.y1 && b.y0 < a.y1 && a.x0 < b.x1 && b.x0 < a.x1;
}

// Rasterizes one shape into gt with the given label; returns its bbox.
// kind: 0 disk, 1 rectangle, 2 triangle.
bool try_place_shape(Rng& rng, LabelMap& gt, std::int32_t label, int kind, double area,
                     const std::vector<Placed>& taken, Placed* out) {
    const int side = gt.h;
    for (int attempt = 0; attempt < 40; ++attempt) {
        Placed box{};
        std::vector<std::pair<int, int>> pixels;
        if (kind == 0) {
            const double r = std::sqrt(area / M_PI);
            const int ri = std::max(2, static_cast<int>(std::lround(r)));
            if (2 * ri + 2 >= side) continue;
            const int cy = 1 + ri + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(side - 2 * ri - 2)));
            const int cx = 1 + ri + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(side - 2 * ri - 2)));
            box = {cy - ri, cx - ri, cy + ri + 1, cx + ri + 1};
            for (int y = box.y0; y < box.y1; ++y)
                for (int x = box.x0; x < box.x1; ++x)
                    if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= ri * ri) pixels.emplace_back(y, x);
        } else if (kind == 1) {
            const double aspect = std::exp(rng.uniform(std::log(0.5), std::log(2.0)));
            const int w = std::max(2, static_cast<int>(std::lround(std::sqrt(area * aspect))));
            const int h = std::max(2, static_cast<int>(std::lround(area / w)));
            if (w + 2 >= side || h + 2 >= side) continue;
            const int y0 = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(side - h - 2)));
            const int x0 = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(side - w - 2)));
            box = {y0, x0, y0 + h, x0 + w};
            for (int y = box.y0; y < box.y1; ++y)
                for (int x = box.x0; x < box.x1; ++x) pixels.emplace_back(y, x);
        } else {
            // Isoceles triangle with random rotation, sized for the target area.
            const double aspect = std::exp(rng.uniform(std::log(0.6), std::log(1.7)));
            const double base = std::sqrt(2.0 * area * aspect);
            const double height = 2.0 * area / base;
            const double theta = rng.uniform(0.0, 2.0 * M_PI);
            const double ct = std::cos(theta), st = std::sin(theta);
            // Local vertices around the centroid.
            const double vx[3] = {-base / 2.0, base / 2.0, 0.0};
            const double vy[3] = {height / 3.0, height / 3.0, -2.0 * height / 3.0};
            double ry[3], rx[3];
            double max_r = 0.0;
            for (int i = 0; i < 3; ++i) {
                rx[i] = ct * vx[i] - st * vy[i];
                ry[i] = st * vx[i] + ct * vy[i];
                max_r = std::max(max_r, std::max(std::abs(rx[i]), std::abs(ry[i])));
            }
            const int ri = static_cast<int>(std::ceil(max_r));
            if (2 * ri + 2 >= side) continue;
            const int cy = 1 + ri + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(side - 2 * ri - 2)));
            const int cx = 1 + ri + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(side - 2 * ri - 2)));
            auto inside = [&](double py, double px) {
                // Sign tests against the three edges.
                bool pos = false, neg = false;
                for (int e = 0; e < 3; ++e) {
                    const int f = (e + 1) % 3;
                    const double cross = (rx[f] - rx[e]) * (py - ry[e]) - (ry[f] - ry[e]) * (px - rx[e]);
                    if (cross > 0) pos = true;
                    if (cross < 0) neg = true;
                }
                return !(pos && neg);
            };
            box = {cy - ri, cx - ri, cy + ri + 1, cx + ri + 1};
            for (int y = box.y0; y < box.y1; ++y)
                for (int x = box.x0; x < box.x1; ++x)
                    if (inside(y - cy + 0.0, x - cx + 0.0)) pixels.emplace_back(y, x);
        }

        if (pixels.size() < static_cast<std::size_t>(0.01 * side * side) ||
            pixels.size() > static_cast<std::size_t>(0.6 * side * side))
            continue;
        bool clash = false;
        for (const Placed& t : taken)
            if (bbox_overlaps(box, t)) {
                clash = true;
                break;
            }
        if (clash) continue;

        for (const auto& [y, x] : pixels) gt.at(y, x) = label;
        *out = box;
        return true;
    }
    return false;
}

}  // namespace

SyntheticImage gen_synthetic_image(const SyntheticCorpusSpec& spec, int index) {
    spec.validate();
    Rng rng(derive_seed(spec.seed, {0x5e7, static_cast<std::uint64_t>(index)}));
    const int side = spec.side;

    SyntheticImage out;
    out.image = ImageTensor(side, side);
    out.gt = LabelMap(side, side);

    // Background: mid gray with a random linear gradient plus noise.
    const double base = rng.uniform(0.35, 0.65);
    const double gy = rng.uniform(-spec.gradient, spec.gradient);
    const double gx = rng.uniform(-spec.gradient, spec.gradient);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            const double v = base + gy * (static_cast<double>(y) / side - 0.5) +
                             gx * (static_cast<double>(x) / side - 0.5);
            for (int c = 0; c < 3; ++c)
                out.image.at(y, x, c) = std::clamp(v + rng.uniform(-spec.noise, spec.noise), 0.0, 1.0);
        }

    const int want = spec.min_shapes +
                     static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(spec.max_shapes - spec.min_shapes) + 1));
    std::vector<Placed> taken;
    std::int32_t label = 1;
    for (int s = 0; s < want; ++s) {
        const int kind = static_cast<int>(rng.uniform_int(3));
        const double frac = rng.uniform(spec.min_area_frac, spec.max_area_frac);
        Placed box{};
        if (!try_place_shape(rng, out.gt, label, kind, frac * side * side, taken, &box)) continue;
        taken.push_back(box);

        // Saturated color, clearly apart from the gray background.
        const Hsv color{rng.uniform(0.0, 1.0), rng.uniform(0.65, 0.95), rng.uniform(0.55, 0.95)};
        double r, g, b;
        hsv_to_rgb_local(color, r, g, b);
        for (int y = box.y0; y < box.y1; ++y)
            for (int x = box.x0; x < box.x1; ++x)
                if (out.gt.at(y, x) == label) {
                    out.image.at(y, x, 0) = std::clamp(r + rng.uniform(-spec.noise, spec.noise), 0.0, 1.0);
                    out.image.at(y, x, 1) = std::clamp(g + rng.uniform(-spec.noise, spec.noise), 0.0, 1.0);
                    out.image.at(y, x, 2) = std::clamp(b + rng.uniform(-spec.noise, spec.noise), 0.0, 1.0);
                }
        ++label;
    }
    finalize_labels(out.gt);
    return out;
}

std::vector<SyntheticImage> gen_synthetic_corpus(const SyntheticCorpusSpec& spec) {
    spec.validate();
    std::vector<SyntheticImage> out;
    out.reserve(static_cast<std::size_t>(spec.n_images));
    for (int i = 0; i < spec.n_images; ++i) out.push_back(gen_synthetic_image(spec, i));
    return out;
}

void write_synthetic_corpus(const SyntheticCorpusSpec& spec, const std::string& dir) {
    spec.validate();
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir + "/manifest.txt", std::ios::trunc);
    if (!manifest) throw std::runtime_error("write_synthetic_corpus: cannot write manifest in " + dir);
    manifest << "n_images " << spec.n_images << "\nside " << spec.side << "\nseed " << spec.seed << "\n";
    char name[64];
    for (int i = 0; i < spec.n_images; ++i) {
        const SyntheticImage img = gen_synthetic_image(spec, i);
        std::snprintf(name, sizeof(name), "img_%05d", i);
        save_ppm(img.image, dir + "/" + name + ".ppm");
        save_label_map(img.gt, dir + "/" + name + ".gt.r2l");
    }
}

}  // namespace r2o
