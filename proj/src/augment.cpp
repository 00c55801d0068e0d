#include "r2o/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "r2o/rng.hpp"

namespace r2o {

namespace {

constexpr double kLumaR = 0.299, kLumaG = 0.587, kLumaB = 0.114;

double luminance(const ImageTensor& img, std::size_t px) {
    return kLumaR * img.data[px * 3 + 0] + kLumaG * img.data[px * 3 + 1] + kLumaB * img.data[px * 3 + 2];
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double d = mx - mn;
    v = mx;
    s = mx > 0.0 ? d / mx : 0.0;
    if (d <= 0.0) {
        h = 0.0;
        return;
    }
    if (mx == r)
        h = std::fmod((g - b) / d, 6.0);
    else if (mx == g)
        h = (b - r) / d + 2.0;
    else
        h = (r - g) / d + 4.0;
    h /= 6.0;
    if (h < 0.0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    if (s <= 0.0) {
        r = g = b = v;
        return;
    }
    h = std::fmod(h, 1.0);
    if (h < 0.0) h += 1.0;
    const double hh = h * 6.0;
    const int i = std::min(5, static_cast<int>(hh));
    const double f = hh - i;
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    switch (i) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

// Area/aspect crop sampler. Falls back to a centered square crop after a
// bounded number of rejections.
Rect sample_crop(Rng& rng, const AugmentationConfig& cfg, int h, int w) {
    const double area = static_cast<double>(h) * w;
    for (int attempt = 0; attempt < 10; ++attempt) {
        const double target = area * rng.uniform(cfg.crop_scale_min, cfg.crop_scale_max);
        const double aspect = std::exp(rng.uniform(std::log(cfg.crop_aspect_min), std::log(cfg.crop_aspect_max)));
        const int cw = static_cast<int>(std::lround(std::sqrt(target * aspect)));
        const int ch = static_cast<int>(std::lround(std::sqrt(target / aspect)));
        if (cw >= 1 && ch >= 1 && cw <= w && ch <= h) {
            const int x0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(w - cw) + 1));
            const int y0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(h - ch) + 1));
            return Rect{static_cast<double>(y0) / h, static_cast<double>(x0) / w,
                        static_cast<double>(y0 + ch) / h, static_cast<double>(x0 + cw) / w};
        }
    }
    const int side = std::min(h, w);
    const int y0 = (h - side) / 2, x0 = (w - side) / 2;
    return Rect{static_cast<double>(y0) / h, static_cast<double>(x0) / w,
                static_cast<double>(y0 + side) / h, static_cast<double>(x0 + side) / w};
}

AugmentedView make_one_view(const ImageTensor& img, const AugmentationConfig& cfg,
                            std::uint64_t seed, bool is_view2) {
    Rng rng(seed);

    AugmentedView view;
    view.geometry.crop = sample_crop(rng, cfg, img.h, img.w);
    view.geometry.hflip = rng.bernoulli(cfg.flip_prob);
    view.image = sample_region_bilinear(img, view.geometry.crop, view.geometry.hflip,
                                        cfg.out_side, cfg.out_side);

    if (rng.bernoulli(cfg.jitter_prob)) {
        const double fb = rng.uniform(std::max(0.0, 1.0 - cfg.brightness), 1.0 + cfg.brightness);
        const double fc = rng.uniform(std::max(0.0, 1.0 - cfg.contrast), 1.0 + cfg.contrast);
        const double fs = rng.uniform(std::max(0.0, 1.0 - cfg.saturation), 1.0 + cfg.saturation);
        const double fh = rng.uniform(-cfg.hue, cfg.hue);
        view.image = adjust_brightness(view.image, fb);
        view.image = adjust_contrast(view.image, fc);
        view.image = adjust_saturation(view.image, fs);
        view.image = adjust_hue(view.image, fh);
    }
    if (rng.bernoulli(cfg.grayscale_prob)) view.image = to_grayscale(view.image);

    const double blur_prob = is_view2 ? cfg.blur_prob_view2 : cfg.blur_prob_view1;
    if (rng.bernoulli(blur_prob)) {
        const double sigma = rng.uniform(cfg.blur_sigma_min, cfg.blur_sigma_max);
        view.image = gaussian_blur(view.image, sigma, cfg.blur_kernel);
    }
    if (is_view2 && rng.bernoulli(cfg.solarize_prob_view2))
        view.image = solarize(view.image, cfg.solarize_threshold);

    return view;
}

}  // namespace

std::pair<AugmentedView, AugmentedView> make_views(const ImageTensor& img,
                                                   const AugmentationConfig& cfg,
                                                   std::uint64_t seed) {
    if (img.h < 2 || img.w < 2) throw std::invalid_argument("make_views: image must be at least 2x2");
    return {make_one_view(img, cfg, derive_seed(seed, {1}), false),
            make_one_view(img, cfg, derive_seed(seed, {2}), true)};
}

ImageTensor solarize(const ImageTensor& img, double threshold) {
    if (threshold < 0.0 || threshold > 1.0) throw std::invalid_argument("solarize: threshold outside [0,1]");
    ImageTensor out = img;
    for (double& v : out.data)
        if (v >= threshold) v = 1.0 - v;
    return out;
}

ImageTensor gaussian_blur(const ImageTensor& img, double sigma, int kernel) {
    if (sigma <= 0.0) throw std::invalid_argument("gaussian_blur: sigma must be positive");
    if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("gaussian_blur: kernel size must be odd");

    const int r = kernel / 2;
    std::vector<double> wgt(static_cast<std::size_t>(kernel));
    double total = 0.0;
    for (int i = 0; i < kernel; ++i) {
        const double d = i - r;
        wgt[static_cast<std::size_t>(i)] = std::exp(-(d * d) / (2.0 * sigma * sigma));
        total += wgt[static_cast<std::size_t>(i)];
    }
    for (double& w : wgt) w /= total;

    ImageTensor tmp(img.h, img.w), out(img.h, img.w);
    // horizontal pass
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int i = -r; i <= r; ++i) {
                    const int sx = std::clamp(x + i, 0, img.w - 1);
                    acc += wgt[static_cast<std::size_t>(i + r)] * img.at(y, sx, c);
                }
                tmp.at(y, x, c) = acc;
            }
    // vertical pass
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int i = -r; i <= r; ++i) {
                    const int sy = std::clamp(y + i, 0, img.h - 1);
                    acc += wgt[static_cast<std::size_t>(i + r)] * tmp.at(sy, x, c);
                }
                out.at(y, x, c) = clamp01(acc);
            }
    return out;
}

ImageTensor adjust_brightness(const ImageTensor& img, double factor) {
    ImageTensor out = img;
    for (double& v : out.data) v = clamp01(v * factor);
    return out;
}

ImageTensor adjust_contrast(const ImageTensor& img, double factor) {
    const std::size_t n = static_cast<std::size_t>(img.h) * img.w;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += luminance(img, i);
    mean /= static_cast<double>(n);
    ImageTensor out = img;
    for (double& v : out.data) v = clamp01((v - mean) * factor + mean);
    return out;
}

ImageTensor adjust_saturation(const ImageTensor& img, double factor) {
    const std::size_t n = static_cast<std::size_t>(img.h) * img.w;
    ImageTensor out = img;
    for (std::size_t i = 0; i < n; ++i) {
        const double lum = luminance(img, i);
        for (int c = 0; c < 3; ++c)
            out.data[i * 3 + c] = clamp01(lum + (img.data[i * 3 + c] - lum) * factor);
    }
    return out;
}

ImageTensor adjust_hue(const ImageTensor& img, double shift) {
    const std::size_t n = static_cast<std::size_t>(img.h) * img.w;
    ImageTensor out = img;
    for (std::size_t i = 0; i < n; ++i) {
        double h, s, v;
        rgb_to_hsv(img.data[i * 3 + 0], img.data[i * 3 + 1], img.data[i * 3 + 2], h, s, v);
        double r, g, b;
        hsv_to_rgb(h + shift, s, v, r, g, b);
        out.data[i * 3 + 0] = clamp01(r);
        out.data[i * 3 + 1] = clamp01(g);
        out.data[i * 3 + 2] = clamp01(b);
    }
    return out;
}

ImageTensor to_grayscale(const ImageTensor& img) {
    const std::size_t n = static_cast<std::size_t>(img.h) * img.w;
    ImageTensor out(img.h, img.w);
    for (std::size_t i = 0; i < n; ++i) {
        const double lum = clamp01(luminance(img, i));
        out.data[i * 3 + 0] = out.data[i * 3 + 1] = out.data[i * 3 + 2] = lum;
    }
    return out;
}

}  // namespace r2o
