#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "r2o/image.hpp"
#include "r2o/rng.hpp"

using namespace r2o;

namespace {

// Independent evaluation of the published sRGB -> XYZ(D65) -> CIELAB chain,
// written separately from the implementation as the test oracle. The
// whitepoint is the image of sRGB white under the matrix (its row sums),
// the convention the library uses so white lands exactly on L = 100.
// Setting textbook = true swaps in the usual truncated constants
// (0.95047, 1, 1.08883), which agree only to ~1e-7 in the ratios.
void srgb_to_lab_oracle(double r, double g, double b, double& L, double& A, double& B,
                        bool textbook = false) {
    auto lin = [](double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); };
    const double rl = lin(r), gl = lin(g), bl = lin(b);
    const double x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
    const double y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
    const double z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;
    const double xn = textbook ? 0.95047 : 0.4124564 + 0.3575761 + 0.1804375;
    const double yn = textbook ? 1.0 : 0.2126729 + 0.7151522 + 0.0721750;
    const double zn = textbook ? 1.08883 : 0.0193339 + 0.1191920 + 0.9503041;
    auto f = [](double t) {
        return t > std::pow(6.0 / 29.0, 3) ? std::cbrt(t)
                                           : t / (3.0 * std::pow(6.0 / 29.0, 2)) + 4.0 / 29.0;
    };
    L = 116.0 * f(y / yn) - 16.0;
    A = 500.0 * (f(x / xn) - f(y / yn));
    B = 200.0 * (f(y / yn) - f(z / zn));
}

ImageTensor solid(int h, int w, double r, double g, double b) {
    ImageTensor img(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            img.at(y, x, 0) = r;
            img.at(y, x, 1) = g;
            img.at(y, x, 2) = b;
        }
    return img;
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("rgb_to_lab maps white to L=100, a=b=0") {
    const LabImage lab = rgb_to_lab(solid(2, 2, 1.0, 1.0, 1.0));
    CHECK(lab.at(0, 0, 0) == doctest::Approx(100.0).epsilon(1e-9));
    CHECK(lab.at(0, 0, 1) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(lab.at(0, 0, 2) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("rgb_to_lab maps black to (0,0,0)") {
    const LabImage lab = rgb_to_lab(solid(1, 1, 0.0, 0.0, 0.0));
    CHECK(lab.at(0, 0, 0) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(lab.at(0, 0, 1) == doctest::Approx(0.0));
    CHECK(lab.at(0, 0, 2) == doctest::Approx(0.0));
}

TEST_CASE("rgb_to_lab mid gray matches the closed-form oracle") {
    double L, A, B;
    srgb_to_lab_oracle(0.5, 0.5, 0.5, L, A, B);
    const LabImage lab = rgb_to_lab(solid(1, 1, 0.5, 0.5, 0.5));
    CHECK(lab.at(0, 0, 0) == doctest::Approx(L).epsilon(1e-9));
    CHECK(lab.at(0, 0, 1) == doctest::Approx(0.0));
    CHECK(lab.at(0, 0, 2) == doctest::Approx(0.0));
}

TEST_CASE("rgb_to_lab neutral grays have a=b=0 exactly") {
    for (double v : {0.1, 0.25, 0.5, 0.73, 0.9}) {
        const LabImage lab = rgb_to_lab(solid(1, 1, v, v, v));
        CHECK(lab.at(0, 0, 1) == 0.0);
        CHECK(lab.at(0, 0, 2) == 0.0);
    }
}

TEST_CASE("rgb_to_lab on random colors matches the oracle") {
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        const double r = rng.uniform(), g = rng.uniform(), b = rng.uniform();
        double L, A, B;
        srgb_to_lab_oracle(r, g, b, L, A, B);
        const LabImage lab = rgb_to_lab(solid(1, 1, r, g, b));
        CHECK(lab.at(0, 0, 0) == doctest::Approx(L).epsilon(1e-9));
        CHECK(lab.at(0, 0, 1) == doctest::Approx(A).epsilon(1e-9));
        CHECK(lab.at(0, 0, 2) == doctest::Approx(B).epsilon(1e-9));
        // The textbook-constant variant of the chain agrees to ~1e-5.
        srgb_to_lab_oracle(r, g, b, L, A, B, true);
        CHECK(lab.at(0, 0, 0) == doctest::Approx(L).epsilon(2e-5));
    }
}

TEST_CASE("resize_bilinear identity is bit-identical") {
    Rng rng(17);
    ImageTensor img(5, 7);
    for (double& v : img.data) v = rng.uniform();
    const ImageTensor out = resize_bilinear(img, 5, 7);
    REQUIRE(out.data.size() == img.data.size());
    for (std::size_t i = 0; i < img.data.size(); ++i) CHECK(out.data[i] == img.data[i]);
}

TEST_CASE("resize_bilinear of a constant image is constant") {
    const ImageTensor img = solid(4, 6, 0.37, 0.37, 0.37);
    for (const auto& [oh, ow] : {std::pair{1, 1}, {3, 9}, {8, 2}, {16, 16}}) {
        const ImageTensor out = resize_bilinear(img, oh, ow);
        for (double v : out.data) CHECK(v == doctest::Approx(0.37).epsilon(1e-15));
    }
}

TEST_CASE("2x2 checker to 1x1 averages to 0.5") {
    ImageTensor img(2, 2);
    for (int c = 0; c < 3; ++c) {
        img.at(0, 0, c) = 0.0;
        img.at(0, 1, c) = 1.0;
        img.at(1, 0, c) = 1.0;
        img.at(1, 1, c) = 0.0;
    }
    // Output center (0.5, 0.5) in normalized coords -> source (0.5, 0.5):
    // equal bilinear weights on all four pixels.
    const ImageTensor out = resize_bilinear(img, 1, 1);
    for (int c = 0; c < 3; ++c) CHECK(out.at(0, 0, c) == doctest::Approx(0.5));
}

TEST_CASE("resize output range never exceeds the input range") {
    Rng rng(23);
    ImageTensor img(9, 13);
    for (double& v : img.data) v = rng.uniform(0.2, 0.8);
    for (const auto& [oh, ow] : {std::pair{3, 5}, {17, 2}, {30, 30}}) {
        const ImageTensor out = resize_bilinear(img, oh, ow);
        for (double v : out.data) {
            CHECK(v >= 0.2 - 1e-12);
            CHECK(v <= 0.8 + 1e-12);
        }
    }
}

TEST_CASE("label map round trip is exact") {
    Rng rng(31);
    for (const auto& [h, w, labels] :
         {std::tuple{1, 1, 1}, {7, 5, 4}, {64, 64, 300}, {33, 61, 65535}, {1024, 1024, 65535}}) {
        LabelMap map(h, w);
        for (auto& l : map.labels) l = static_cast<std::int32_t>(rng.uniform_int(static_cast<std::uint64_t>(labels)));
        map.n_labels = labels;
        const std::string path = temp_path("r2o_test_map.r2l");
        save_label_map(map, path);
        const LabelMap back = load_label_map(path);
        CHECK(back.h == map.h);
        CHECK(back.w == map.w);
        CHECK(back.n_labels == map.n_labels);
        CHECK(back.labels == map.labels);
    }
}

TEST_CASE("label map file round trip is byte exact") {
    LabelMap map(16, 9);
    Rng rng(77);
    for (auto& l : map.labels) l = static_cast<std::int32_t>(rng.uniform_int(300));
    map.n_labels = 300;
    const std::string p1 = temp_path("r2o_bytes1.r2l"), p2 = temp_path("r2o_bytes2.r2l");
    save_label_map(map, p1);
    save_label_map(load_label_map(p1), p2);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    CHECK(!b1.empty());
}

TEST_CASE("truncated label map reports offset and reason") {
    LabelMap map(4, 4);
    map.n_labels = 1;
    const std::string path = temp_path("r2o_trunc.r2l");
    save_label_map(map, path);
    // Chop the file mid-payload.
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    bytes.resize(bytes.size() - 5);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << bytes;
    out.close();
    CHECK_THROWS_WITH_AS(load_label_map(path), doctest::Contains("offset"), std::runtime_error);
}

TEST_CASE("corrupt magic is rejected") {
    const std::string path = temp_path("r2o_magic.r2l");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "NOTAMAPXXXXXXXXXXXXXXXXXXXXXX";
    out.close();
    CHECK_THROWS_AS(load_label_map(path), std::runtime_error);
}

TEST_CASE("1x1 label map with label 0 round trips") {
    LabelMap map(1, 1);
    map.n_labels = 1;
    const std::string path = temp_path("r2o_tiny.r2l");
    save_label_map(map, path);
    const LabelMap back = load_label_map(path);
    CHECK(back.h == 1);
    CHECK(back.w == 1);
    CHECK(back.labels[0] == 0);
}

TEST_CASE("ppm round trip at 8-bit precision") {
    Rng rng(91);
    ImageTensor img(11, 6);
    for (double& v : img.data) v = rng.uniform();
    const std::string path = temp_path("r2o_test.ppm");
    save_ppm(img, path);
    const ImageTensor back = load_ppm(path);
    REQUIRE(back.h == img.h);
    REQUIRE(back.w == img.w);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        CHECK(back.data[i] == doctest::Approx(img.data[i]).epsilon(0.5 / 255.0 + 1e-9));
}

TEST_CASE("sample_region_bilinear full frame with flip mirrors columns exactly") {
    Rng rng(13);
    ImageTensor img(6, 8);
    for (double& v : img.data) v = rng.uniform();
    const ImageTensor flipped = sample_region_bilinear(img, Rect{0, 0, 1, 1}, true, 6, 8);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 8; ++x)
            for (int c = 0; c < 3; ++c) CHECK(flipped.at(y, x, c) == img.at(y, 7 - x, c));
}

TEST_CASE("upsample_labels_nearest covers exact blocks") {
    LabelMap map(2, 2);
    map.at(0, 0) = 0;
    map.at(0, 1) = 1;
    map.at(1, 0) = 2;
    map.at(1, 1) = 3;
    map.n_labels = 4;
    const LabelMap up = upsample_labels_nearest(map, 4, 4);
    CHECK(up.at(0, 0) == 0);
    CHECK(up.at(1, 1) == 0);
    CHECK(up.at(0, 3) == 1);
    CHECK(up.at(3, 0) == 2);
    CHECK(up.at(3, 3) == 3);
}
