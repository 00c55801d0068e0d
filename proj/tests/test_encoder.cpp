#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "r2o/encoder.hpp"
#include "r2o/rng.hpp"

using namespace r2o;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-scale, scale);
    return t;
}

double weighted_sum(const Tensor& out, const Tensor& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out.data()[i] * w.data()[i];
    return s;
}

// Central-difference check of an analytic gradient. `loss` must be pure.
void check_grad(Tensor& param, const Tensor& analytic, const std::function<double()>& loss,
                double step = 1e-5, double tol = 1e-4) {
    REQUIRE(param.size() == analytic.size());
    double max_rel = 0.0;
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double keep = param.data()[i];
        param.data()[i] = keep + step;
        const double up = loss();
        param.data()[i] = keep - step;
        const double down = loss();
        param.data()[i] = keep;
        const double fd = (up - down) / (2.0 * step);
        const double rel = std::abs(fd - analytic.data()[i]) /
                           std::max({std::abs(fd), std::abs(analytic.data()[i]), 1e-8});
        max_rel = std::max(max_rel, rel);
    }
    CHECK(max_rel < tol);
}

}  // namespace

TEST_CASE("trunk forward shape contract") {
    EncoderConfig cfg;
    cfg.input_side = 64;
    cfg.stem_channels = 8;
    cfg.stage_widths = {8, 16, 24};
    cfg.mid_stage = 2;
    cfg.final_stage = 3;
    NetworkPair pair = NetworkPair::init(cfg, HeadConfig{16, 8, 16}, 1);

    Rng rng(3);
    const Tensor x = random_tensor({2, 64, 64, 3}, rng);
    const FeaturePair taps = trunk_forward(pair.online.trunk, x, false, false, nullptr);
    CHECK(taps.mid.shape() == std::vector<int>{2, 8, 8, 16});
    CHECK(taps.final.shape() == std::vector<int>{2, 4, 4, 24});
}

TEST_CASE("zero-weight network yields all-zero features") {
    EncoderConfig cfg;
    cfg.input_side = 16;
    cfg.stem_channels = 4;
    cfg.stage_widths = {4, 8, 8};
    NetworkPair pair = NetworkPair::init(cfg, HeadConfig{8, 4, 8}, 1);
    for (ParamRef& p : pair.online_params())
        if (p.name.find("gamma") == std::string::npos) p.value->zero();

    Rng rng(5);
    const Tensor x = random_tensor({2, 16, 16, 3}, rng);
    const FeaturePair taps = trunk_forward(pair.online.trunk, x, true, false, nullptr);
    for (std::size_t i = 0; i < taps.final.size(); ++i) CHECK(taps.final.data()[i] == 0.0);
    for (std::size_t i = 0; i < taps.mid.size(); ++i) CHECK(taps.mid.data()[i] == 0.0);
}

TEST_CASE("eval-mode forward is deterministic and pure") {
    EncoderConfig cfg;
    cfg.input_side = 16;
    cfg.stem_channels = 4;
    cfg.stage_widths = {4, 8, 8};
    NetworkPair pair = NetworkPair::init(cfg, HeadConfig{8, 4, 8}, 2);

    Rng rng(7);
    const Tensor x = random_tensor({3, 16, 16, 3}, rng);
    const FeaturePair a = trunk_forward(pair.online.trunk, x, false, false, nullptr);
    const FeaturePair b = trunk_forward(pair.online.trunk, x, false, false, nullptr);
    for (std::size_t i = 0; i < a.final.size(); ++i) CHECK(a.final.data()[i] == b.final.data()[i]);
}

TEST_CASE("conv gradients match finite differences") {
    Rng rng(11);
    Conv3x3 conv = make_conv(2, 3, 1, rng);
    Tensor x = random_tensor({2, 5, 5, 2}, rng);
    const Tensor w = random_tensor({2, 5, 5, 3}, rng);

    auto loss = [&]() {
        Conv3x3 c = conv;
        return weighted_sum(conv_forward(c, x, nullptr), w);
    };
    ConvCache cache;
    conv.gw.zero();
    conv_forward(conv, x, &cache);
    const Tensor dx = conv_backward(conv, cache, w);

    check_grad(conv.w, conv.gw, loss);
    check_grad(x, dx, loss);
}

TEST_CASE("strided conv gradients match finite differences") {
    Rng rng(13);
    Conv3x3 conv = make_conv(3, 2, 2, rng);
    Tensor x = random_tensor({1, 6, 6, 3}, rng);
    const Tensor w = random_tensor({1, 3, 3, 2}, rng);

    auto loss = [&]() {
        Conv3x3 c = conv;
        return weighted_sum(conv_forward(c, x, nullptr), w);
    };
    ConvCache cache;
    conv.gw.zero();
    conv_forward(conv, x, &cache);
    const Tensor dx = conv_backward(conv, cache, w);
    check_grad(conv.w, conv.gw, loss);
    check_grad(x, dx, loss);
}

TEST_CASE("batch-norm gradients match finite differences") {
    Rng rng(17);
    BatchNorm bn = make_bn(3);
    for (int c = 0; c < 3; ++c) {
        bn.gamma(c) = rng.uniform(0.5, 1.5);
        bn.beta(c) = rng.uniform(-0.5, 0.5);
    }
    Tensor x = random_tensor({4, 3}, rng);
    const Tensor w = random_tensor({4, 3}, rng);

    auto loss = [&]() {
        BatchNorm b = bn;
        return weighted_sum(bn_forward(b, x, true, false, nullptr), w);
    };
    BnCache cache;
    bn.ggamma.zero();
    bn.gbeta.zero();
    bn_forward(bn, x, true, false, &cache);
    const Tensor dx = bn_backward(bn, cache, w);
    check_grad(bn.gamma, bn.ggamma, loss);
    check_grad(bn.beta, bn.gbeta, loss);
    check_grad(x, dx, loss);
}

TEST_CASE("linear gradients match finite differences") {
    Rng rng(19);
    Linear lin = make_linear(4, 3, true, rng);
    Tensor x = random_tensor({5, 4}, rng);
    const Tensor w = random_tensor({5, 3}, rng);

    auto loss = [&]() {
        Linear l = lin;
        return weighted_sum(linear_forward(l, x), w);
    };
    lin.gw.zero();
    lin.gb.zero();
    linear_forward(lin, x);
    const Tensor dx = linear_backward(lin, x, w);
    check_grad(lin.w, lin.gw, loss);
    check_grad(lin.b, lin.gb, loss);
    check_grad(x, dx, loss);
}

TEST_CASE("mlp gradients match finite differences") {
    Rng rng(23);
    Mlp mlp = make_mlp(4, 6, 3, rng);
    Tensor x = random_tensor({5, 4}, rng);
    const Tensor w = random_tensor({5, 3}, rng);

    auto loss = [&]() {
        Mlp m = mlp;
        return weighted_sum(mlp_forward(m, x, true, false, nullptr), w);
    };
    for (Tensor* g : {&mlp.fc1.gw, &mlp.bn.ggamma, &mlp.bn.gbeta, &mlp.fc2.gw, &mlp.fc2.gb}) g->zero();
    MlpCache cache;
    mlp_forward(mlp, x, true, false, &cache);
    const Tensor dx = mlp_backward(mlp, cache, w);
    check_grad(mlp.fc1.w, mlp.fc1.gw, loss);
    check_grad(mlp.bn.gamma, mlp.bn.ggamma, loss);
    check_grad(mlp.bn.beta, mlp.bn.gbeta, loss);
    check_grad(mlp.fc2.w, mlp.fc2.gw, loss);
    check_grad(mlp.fc2.b, mlp.fc2.gb, loss);
    check_grad(x, dx, loss);
}

namespace {

// Smallest |pre-ReLU activation| across the trunk. Finite differences are
// only valid when every kink is farther from zero than the probe step.
double relu_margin(const Trunk& trunk, const TrunkCache& cache) {
    double margin = 1e300;
    for (std::size_t b = 0; b < trunk.blocks.size(); ++b) {
        const BatchNorm& bn = trunk.blocks[b].bn;
        const Tensor& x_hat = cache.blocks[b].bn.x_hat;
        const int c = x_hat.shape().back();
        for (std::size_t i = 0; i < x_hat.size(); ++i) {
            const int ch = static_cast<int>(i % static_cast<std::size_t>(c));
            margin = std::min(margin, std::abs(bn.gamma(ch) * x_hat.data()[i] + bn.beta(ch)));
        }
    }
    return margin;
}

}  // namespace

TEST_CASE("trunk gradients match finite differences on a tiny config") {
    EncoderConfig cfg;
    cfg.input_side = 8;
    cfg.stem_channels = 2;
    cfg.stage_widths = {2, 3};
    cfg.mid_stage = 1;
    cfg.final_stage = 2;

    // Pick a seeded instance whose activations clear the kink margin so
    // central differences are trustworthy.
    NetworkPair pair = NetworkPair::init(cfg, HeadConfig{4, 3, 4}, 31);
    Tensor x;
    bool found = false;
    for (std::uint64_t seed = 31; seed < 131 && !found; ++seed) {
        pair = NetworkPair::init(cfg, HeadConfig{4, 3, 4}, seed);
        Rng rng(seed + 1000);
        x = random_tensor({2, 8, 8, 3}, rng);
        TrunkCache probe;
        trunk_forward(pair.online.trunk, x, true, false, &probe);
        found = relu_margin(pair.online.trunk, probe) > 1e-3;
    }
    REQUIRE(found);
    Trunk& trunk = pair.online.trunk;

    Rng rng(37);
    const Tensor w = random_tensor({2, cfg.final_grid(), cfg.final_grid(), cfg.d_final()}, rng);

    auto loss = [&]() {
        Trunk t = trunk;
        return weighted_sum(trunk_forward(t, x, true, false, nullptr).final, w);
    };
    pair.zero_grads();
    TrunkCache cache;
    trunk_forward(trunk, x, true, false, &cache);
    trunk_backward(trunk, cache, w);

    for (Block& blk : trunk.blocks) {
        check_grad(blk.conv.w, blk.conv.gw, loss, 1e-5, 2e-4);
        check_grad(blk.bn.gamma, blk.bn.ggamma, loss, 1e-5, 2e-4);
        check_grad(blk.bn.beta, blk.bn.gbeta, loss, 1e-5, 2e-4);
    }
}

TEST_CASE("identity-built head reproduces the hand-composed affine map") {
    // fc1 = identity (no bias), frozen unit-variance normalization in eval
    // mode, fc2 with bias: y = relu(x / sqrt(1 + eps)) * W2^T + b2.
    Rng rng(41);
    Mlp mlp = make_mlp(3, 3, 2, rng);
    mlp.fc1.w.zero();
    for (int i = 0; i < 3; ++i) mlp.fc1.w(i, i) = 1.0;

    Tensor x({2, 3});
    x(0, 0) = 0.3;
    x(0, 1) = 0.9;
    x(0, 2) = 0.1;
    x(1, 0) = 0.5;
    x(1, 1) = 0.2;
    x(1, 2) = 0.8;
    const Tensor y = mlp_forward(mlp, x, false, false, nullptr);

    const double scale = 1.0 / std::sqrt(1.0 + 1e-5);
    for (int r = 0; r < 2; ++r)
        for (int o = 0; o < 2; ++o) {
            double expect = mlp.fc2.b(o);
            for (int i = 0; i < 3; ++i) {
                const double h = std::max(0.0, x(r, i) * scale);
                expect += mlp.fc2.w(o, i) * h;
            }
            CHECK(y(r, o) == doctest::Approx(expect).epsilon(1e-12));
        }
}

TEST_CASE("zero input with zero biases gives zero head output") {
    Rng rng(43);
    Mlp mlp = make_mlp(3, 4, 2, rng);
    mlp.fc2.b.zero();
    Tensor x({2, 3});
    const Tensor y = mlp_forward(mlp, x, false, false, nullptr);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y.data()[i] == 0.0);
}

TEST_CASE("identical vectors in train mode stay finite (degenerate batch)") {
    Rng rng(47);
    Mlp mlp = make_mlp(3, 4, 2, rng);
    Tensor x({3, 3});
    for (int r = 0; r < 3; ++r) {
        x(r, 0) = 0.4;
        x(r, 1) = -0.2;
        x(r, 2) = 0.9;
    }
    const Tensor y = mlp_forward(mlp, x, true, false, nullptr);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::isfinite(y.data()[i]));
}

TEST_CASE("ema_update endpoint and midpoint behavior") {
    EncoderConfig cfg;
    cfg.input_side = 16;
    cfg.stem_channels = 2;
    cfg.stage_widths = {2, 2, 2};
    NetworkPair pair = NetworkPair::init(cfg, HeadConfig{4, 3, 4}, 51);

    // Make the two sides differ.
    Rng rng(53);
    for (ParamRef& p : pair.online_params())
        for (std::size_t i = 0; i < p.value->size(); ++i) p.value->data()[i] += rng.uniform(-0.1, 0.1);

    auto snapshot = [](std::vector<ParamRef> refs) {
        std::vector<std::vector<double>> out;
        for (ParamRef& p : refs) out.emplace_back(p.value->data(), p.value->data() + p.value->size());
        return out;
    };
    const auto theta = snapshot(pair.online_params());
    const auto xi_before = snapshot(pair.target_params());

    SUBCASE("tau = 1 leaves the target unchanged") {
        pair.ema_update(1.0);
        const auto xi = snapshot(pair.target_params());
        CHECK(xi == xi_before);
    }
    SUBCASE("tau = 0 copies the online parameters") {
        pair.ema_update(0.0);
        const auto xi = snapshot(pair.target_params());
        for (std::size_t t = 0; t < xi.size(); ++t)
            for (std::size_t i = 0; i < xi[t].size(); ++i)
                CHECK(xi[t][i] == doctest::Approx(theta[t][i]).epsilon(1e-15));
    }
    SUBCASE("tau = 0.5 is the elementwise midpoint") {
        pair.ema_update(0.5);
        const auto xi = snapshot(pair.target_params());
        for (std::size_t t = 0; t < xi.size(); ++t)
            for (std::size_t i = 0; i < xi[t].size(); ++i)
                CHECK(xi[t][i] == doctest::Approx(0.5 * theta[t][i] + 0.5 * xi_before[t][i]).epsilon(1e-15));
    }
    SUBCASE("tau outside [0,1] is rejected") {
        CHECK_THROWS_AS(pair.ema_update(1.5), std::invalid_argument);
    }
}

TEST_CASE("train forward plus backward leaves parameters untouched") {
    EncoderConfig cfg;
    cfg.input_side = 16;
    cfg.stem_channels = 2;
    cfg.stage_widths = {2, 2, 2};
    NetworkPair pair = NetworkPair::init(cfg, HeadConfig{4, 3, 4}, 61);

    std::vector<double> before;
    for (ParamRef& p : pair.online_params())
        before.insert(before.end(), p.value->data(), p.value->data() + p.value->size());

    Rng rng(67);
    const Tensor x = random_tensor({2, 16, 16, 3}, rng);
    pair.zero_grads();
    TrunkCache cache;
    const FeaturePair taps = trunk_forward(pair.online.trunk, x, true, true, &cache);
    trunk_backward(pair.online.trunk, cache, Tensor(taps.final.shape()));

    std::vector<double> after;
    for (ParamRef& p : pair.online_params())
        after.insert(after.end(), p.value->data(), p.value->data() + p.value->size());
    CHECK(before == after);
}

TEST_CASE("backward without a forward cache is an error") {
    EncoderConfig cfg;
    cfg.input_side = 16;
    cfg.stem_channels = 2;
    cfg.stage_widths = {2, 2, 2};
    NetworkPair pair = NetworkPair::init(cfg, HeadConfig{4, 3, 4}, 71);
    TrunkCache empty;
    Tensor d({1, cfg.final_grid(), cfg.final_grid(), cfg.d_final()});
    CHECK_THROWS_AS(trunk_backward(pair.online.trunk, empty, d), std::invalid_argument);
}

TEST_CASE("config validation rejects bad tap layouts") {
    EncoderConfig cfg;
    cfg.input_side = 64;
    cfg.stage_widths = {8, 8};
    cfg.mid_stage = 2;
    cfg.final_stage = 2;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.mid_stage = 1;
    CHECK_NOTHROW(cfg.validate());
    cfg.input_side = 60;  // not divisible by the downsampling
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("stack_images rejects size mismatches") {
    ImageTensor a(4, 4), b(5, 4);
    CHECK_THROWS_AS(stack_images({&a, &b}, 4), std::invalid_argument);
}
