#include "r2o/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace r2o {

namespace {

double srgb_to_linear(double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
    constexpr double delta = 6.0 / 29.0;
    constexpr double delta3 = delta * delta * delta;
    return t > delta3 ? std::cbrt(t) : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

}  // namespace

LabImage rgb_to_lab(const ImageTensor& img) {
    // D65 reference white; the XYZ matrix rows sum exactly to the
    // whitepoint so neutral grays map to a = b = 0.
    constexpr double xn = 0.4124564 + 0.3575761 + 0.1804375;
    constexpr double yn = 0.2126729 + 0.7151522 + 0.0721750;
    constexpr double zn = 0.0193339 + 0.1191920 + 0.9503041;

    LabImage out(img.h, img.w);
    const std::size_t n = static_cast<std::size_t>(img.h) * img.w;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = srgb_to_linear(img.data[i * 3 + 0]);
        const double g = srgb_to_linear(img.data[i * 3 + 1]);
        const double b = srgb_to_linear(img.data[i * 3 + 2]);

        if (img.data[i * 3 + 0] == img.data[i * 3 + 1] && img.data[i * 3 + 1] == img.data[i * 3 + 2]) {
            // Neutral input: all three whitepoint ratios equal the linear
            // value, so a = b = 0 exactly rather than up to rounding.
            out.data[i * 3 + 0] = 116.0 * lab_f(r) - 16.0;
            out.data[i * 3 + 1] = 0.0;
            out.data[i * 3 + 2] = 0.0;
            continue;
        }

        const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
        const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
        const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;

        const double fx = lab_f(x / xn);
        const double fy = lab_f(y / yn);
        const double fz = lab_f(z / zn);

        out.data[i * 3 + 0] = 116.0 * fy - 16.0;
        out.data[i * 3 + 1] = 500.0 * (fx - fy);
        out.data[i * 3 + 2] = 200.0 * (fy - fz);
    }
    return out;
}

ImageTensor sample_region_bilinear(const ImageTensor& img, const Rect& rect, bool hflip,
                                   int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("sample_region_bilinear: output size must be >= 1");
    // Coordinates are factored as (i + 0.5) * scale + offset so that the
    // full-frame identity case yields exact integer source positions
    // (scale collapses to 1.0, offset to -0.5) and the output is
    // bit-identical to the input.
    const double y_scale = (rect.y1 - rect.y0) * img.h / out_h;
    const double y_off = rect.y0 * img.h - 0.5;
    const double x_scale = (rect.x1 - rect.x0) * img.w / out_w;
    const double x_off = rect.x0 * img.w - 0.5;

    ImageTensor out(out_h, out_w);
    for (int oy = 0; oy < out_h; ++oy) {
        const double sy = (oy + 0.5) * y_scale + y_off;
        const double syc = std::clamp(sy, 0.0, static_cast<double>(img.h - 1));
        const int y0 = static_cast<int>(syc);
        const int y1 = std::min(y0 + 1, img.h - 1);
        const double fy = syc - y0;
        for (int ox = 0; ox < out_w; ++ox) {
            // A flipped sample at ox equals the unflipped sample at the
            // mirrored column, which keeps flips exact.
            const int sxi = hflip ? out_w - 1 - ox : ox;
            const double sx = (sxi + 0.5) * x_scale + x_off;
            const double sxc = std::clamp(sx, 0.0, static_cast<double>(img.w - 1));
            const int x0 = static_cast<int>(sxc);
            const int x1 = std::min(x0 + 1, img.w - 1);
            const double fx = sxc - x0;
            for (int c = 0; c < 3; ++c) {
                const double top = img.at(y0, x0, c) * (1.0 - fx) + img.at(y0, x1, c) * fx;
                const double bot = img.at(y1, x0, c) * (1.0 - fx) + img.at(y1, x1, c) * fx;
                out.at(oy, ox, c) = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    return out;
}

ImageTensor resize_bilinear(const ImageTensor& img, int out_h, int out_w) {
    return sample_region_bilinear(img, Rect{0.0, 0.0, 1.0, 1.0}, false, out_h, out_w);
}

void finalize_labels(LabelMap& map) {
    std::int32_t max_label = -1;
    for (std::int32_t l : map.labels) {
        if (l < 0) throw std::invalid_argument("finalize_labels: negative label");
        max_label = std::max(max_label, l);
    }
    if (max_label < 0) throw std::invalid_argument("finalize_labels: empty map");
    std::vector<bool> seen(static_cast<std::size_t>(max_label) + 1, false);
    for (std::int32_t l : map.labels) seen[static_cast<std::size_t>(l)] = true;
    for (std::int32_t l = 0; l <= max_label; ++l)
        if (!seen[static_cast<std::size_t>(l)])
            throw std::invalid_argument("finalize_labels: label range not contiguous at id " + std::to_string(l));
    map.n_labels = max_label + 1;
}

namespace {

constexpr char kLabelMagic[4] = {'R', '2', 'O', 'L'};
constexpr std::uint32_t kLabelVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& buf, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
    return v;
}

[[noreturn]] void malformed(const std::string& path, std::size_t offset, const std::string& reason) {
    throw std::runtime_error("malformed label map '" + path + "' at offset " + std::to_string(offset) + ": " + reason);
}

}  // namespace

void save_label_map(const LabelMap& map, const std::string& path) {
    if (map.h < 1 || map.w < 1) throw std::invalid_argument("save_label_map: empty map");
    std::int32_t max_label = 0;
    for (std::int32_t l : map.labels) max_label = std::max(max_label, l);
    const std::uint32_t width = max_label <= 0xff ? 1u : max_label <= 0xffff ? 2u : 4u;

    std::string buf;
    buf.append(kLabelMagic, 4);
    put_u32(buf, kLabelVersion);
    put_u32(buf, static_cast<std::uint32_t>(map.h));
    put_u32(buf, static_cast<std::uint32_t>(map.w));
    put_u32(buf, static_cast<std::uint32_t>(map.n_labels));
    buf.push_back(static_cast<char>(width));
    for (std::int32_t l : map.labels)
        for (std::uint32_t i = 0; i < width; ++i)
            buf.push_back(static_cast<char>((static_cast<std::uint32_t>(l) >> (8 * i)) & 0xff));

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("save_label_map: cannot open '" + path + "' for writing");
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw std::runtime_error("save_label_map: short write to '" + path + "'");
}

LabelMap load_label_map(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_label_map: cannot open '" + path + "'");
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    if (buf.size() < 21) malformed(path, buf.size(), "truncated header");
    if (std::memcmp(buf.data(), kLabelMagic, 4) != 0) malformed(path, 0, "bad magic");
    const std::uint32_t version = get_u32(buf, 4);
    if (version != kLabelVersion) malformed(path, 4, "unsupported version " + std::to_string(version));
    const std::uint32_t h = get_u32(buf, 8);
    const std::uint32_t w = get_u32(buf, 12);
    const std::uint32_t n_labels = get_u32(buf, 16);
    if (h < 1 || w < 1 || h > 1u << 20 || w > 1u << 20) malformed(path, 8, "implausible dimensions");
    const std::uint32_t width = static_cast<unsigned char>(buf[20]);
    if (width != 1 && width != 2 && width != 4) malformed(path, 20, "bad label width " + std::to_string(width));

    const std::size_t need = 21 + static_cast<std::size_t>(h) * w * width;
    if (buf.size() != need)
        malformed(path, buf.size(), "expected " + std::to_string(need) + " bytes, have " + std::to_string(buf.size()));

    LabelMap map(static_cast<int>(h), static_cast<int>(w));
    map.n_labels = static_cast<std::int32_t>(n_labels);
    std::size_t off = 21;
    for (std::size_t i = 0; i < static_cast<std::size_t>(h) * w; ++i) {
        std::uint32_t v = 0;
        for (std::uint32_t b = 0; b < width; ++b)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + b])) << (8 * b);
        off += width;
        if (v >= n_labels) malformed(path, off - width, "label " + std::to_string(v) + " out of range");
        map.labels[i] = static_cast<std::int32_t>(v);
    }
    return map;
}

LabelMap upsample_labels_nearest(const LabelMap& map, int out_h, int out_w) {
    LabelMap out(out_h, out_w);
    out.n_labels = map.n_labels;
    for (int y = 0; y < out_h; ++y) {
        const int sy = std::min(static_cast<int>((y + 0.5) * map.h / out_h), map.h - 1);
        for (int x = 0; x < out_w; ++x) {
            const int sx = std::min(static_cast<int>((x + 0.5) * map.w / out_w), map.w - 1);
            out.at(y, x) = map.at(sy, sx);
        }
    }
    return out;
}

ImageTensor load_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_ppm: cannot open '" + path + "'");

    auto next_token = [&]() -> std::string {
        std::string tok;
        int c;
        while ((c = f.get()) != EOF) {
            if (c == '#') {
                while ((c = f.get()) != EOF && c != '\n') {}
            } else if (!std::isspace(c)) {
                tok.push_back(static_cast<char>(c));
                while ((c = f.peek()) != EOF && !std::isspace(c)) tok.push_back(static_cast<char>(f.get()));
                return tok;
            }
        }
        throw std::runtime_error("load_ppm: truncated header in '" + path + "'");
    };

    if (next_token() != "P6") throw std::runtime_error("load_ppm: '" + path + "' is not binary PPM (P6)");
    const int w = std::stoi(next_token());
    const int h = std::stoi(next_token());
    const int maxval = std::stoi(next_token());
    if (w < 1 || h < 1) throw std::runtime_error("load_ppm: bad dimensions in '" + path + "'");
    if (maxval != 255) throw std::runtime_error("load_ppm: only 8-bit PPM supported ('" + path + "')");
    f.get();  // single whitespace after maxval

    std::vector<unsigned char> raw(static_cast<std::size_t>(h) * w * 3);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (f.gcount() != static_cast<std::streamsize>(raw.size()))
        throw std::runtime_error("load_ppm: truncated pixel data in '" + path + "'");

    ImageTensor img(h, w);
    for (std::size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i] / 255.0;
    return img;
}

void save_ppm(const ImageTensor& img, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("save_ppm: cannot open '" + path + "' for writing");
    f << "P6\n" << img.w << " " << img.h << "\n255\n";
    std::vector<unsigned char> raw(img.data.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const double v = std::clamp(img.data[i], 0.0, 1.0);
        raw[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    f.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!f) throw std::runtime_error("save_ppm: short write to '" + path + "'");
}

}  // namespace r2o
