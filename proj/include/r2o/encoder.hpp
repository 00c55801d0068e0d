#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "r2o/image.hpp"
#include "r2o/tensor.hpp"

namespace r2o {

// Siamese trunk: stem conv (stride 2) followed by stages of two
// conv-BN-ReLU blocks each, the first block of each stage downsampling by
// 2. Two taps are exposed: a mid tap feeding region refinement and a final
// tap feeding mask pooling.
struct EncoderConfig {
    int input_side = 64;
    int stem_channels = 16;
    std::vector<int> stage_widths = {16, 32, 64};
    int mid_stage = 2;    // 1-based; tap after this stage
    int final_stage = 3;  // 1-based; must be > mid_stage

    int n_stages() const { return static_cast<int>(stage_widths.size()); }
    int grid_after(int stage) const { return input_side >> (1 + stage); }
    int mid_grid() const { return grid_after(mid_stage); }
    int final_grid() const { return grid_after(final_stage); }
    int d_mid() const { return stage_widths[static_cast<std::size_t>(mid_stage - 1)]; }
    int d_final() const { return stage_widths[static_cast<std::size_t>(final_stage - 1)]; }

    void validate() const;
};

struct HeadConfig {
    int proj_hidden = 64;
    int proj_out = 32;
    int pred_hidden = 64;

    void validate() const;
};

// ---- layers ----------------------------------------------------------

struct Conv3x3 {
    int in_c = 0, out_c = 0, stride = 1;
    Tensor w;   // [out_c, in_c*9], k index = c*9 + ky*3 + kx
    Tensor gw;  // gradient, same shape
};

struct BatchNorm {
    int c = 0;
    double eps = 1e-5;
    double momentum = 0.1;
    Tensor gamma, beta;        // [c]
    Tensor ggamma, gbeta;      // gradients
    Tensor run_mean, run_var;  // running statistics
};

struct Linear {
    int in = 0, out = 0;
    bool has_bias = true;
    Tensor w;       // [out, in]
    Tensor b;       // [out] (empty when !has_bias)
    Tensor gw, gb;  // gradients
};

struct ConvCache {
    Tensor x;  // input [B,H,W,C]
    int out_h = 0, out_w = 0;
};

struct BnCache {
    Tensor x_hat;          // same shape as input
    std::vector<double> inv_std;  // [c]
};

struct BlockCache {
    ConvCache conv;
    BnCache bn;
    Tensor relu_out;
};

// conv-BN-ReLU block.
struct Block {
    Conv3x3 conv;
    BatchNorm bn;
};

struct Trunk {
    EncoderConfig cfg;
    std::vector<Block> blocks;  // stem + 2 per stage

    // Block index ranges: block 0 = stem; stage s (1-based) occupies
    // blocks 2s-1 and 2s.
    int blocks_through_stage(int stage) const { return 1 + 2 * stage; }
};

struct TrunkCache {
    std::vector<BlockCache> blocks;
};

struct FeaturePair {
    Tensor mid;    // [B, Hm, Wm, D_mid]
    Tensor final;  // [B, Hf, Wf, D_final]
};

// 2-layer MLP: Linear (no bias) -> BN -> ReLU -> Linear (bias).
struct Mlp {
    Linear fc1;
    BatchNorm bn;
    Linear fc2;
};

struct MlpCache {
    Tensor x;         // input [B, in]
    BnCache bn;
    Tensor relu_out;  // [B, hidden]
};

// ---- networks --------------------------------------------------------

struct OnlineNet {
    Trunk trunk;
    Mlp projector;
    Mlp predictor;
};

struct TargetNet {
    Trunk trunk;
    Mlp projector;
};

struct ParamRef {
    std::string name;
    Tensor* value = nullptr;
    Tensor* grad = nullptr;
    bool bn_or_bias = false;  // excluded from LARS adaptation and decay
};

struct StatRef {
    std::string name;
    Tensor* value = nullptr;
};

// Online parameters (encoder + projector + predictor) and EMA target
// parameters (encoder + projector only).
struct NetworkPair {
    OnlineNet online;
    TargetNet target;

    static NetworkPair init(const EncoderConfig& enc, const HeadConfig& heads, std::uint64_t seed);

    std::vector<ParamRef> online_params();
    std::vector<ParamRef> target_params();  // grads unused
    std::vector<StatRef> online_stats();
    std::vector<StatRef> target_stats();

    void zero_grads();
    // xi <- (1 - tau) * theta + tau * xi over encoder+projector params and
    // BN running statistics. The predictor has no target counterpart.
    void ema_update(double tau);
};

// ---- layer ops ---------------------------------------------------------

Conv3x3 make_conv(int in_c, int out_c, int stride, class Rng& rng);
BatchNorm make_bn(int c);
Linear make_linear(int in, int out, bool bias, class Rng& rng);
Mlp make_mlp(int in, int hidden, int out, class Rng& rng);

// 3x3 convolution, padding 1. Forward caches the input for backward;
// backward accumulates the weight gradient and returns dx.
Tensor conv_forward(Conv3x3& conv, const Tensor& x, ConvCache* cache);
Tensor conv_backward(Conv3x3& conv, const ConvCache& cache, const Tensor& dy);

// Batch normalization over all dims but the trailing channel dim.
Tensor bn_forward(BatchNorm& bn, const Tensor& x, bool train, bool update_running, BnCache* cache);
Tensor bn_backward(BatchNorm& bn, const BnCache& cache, const Tensor& dy);

Tensor linear_forward(Linear& lin, const Tensor& x);
Tensor linear_backward(Linear& lin, const Tensor& x, const Tensor& dy);

Tensor relu_forward(const Tensor& x);
Tensor relu_backward_t(const Tensor& y, const Tensor& dy);

// ---- ops --------------------------------------------------------------

// Stacks images (all input_side x input_side) into [B, S, S, 3].
Tensor stack_images(const std::vector<const ImageTensor*>& batch, int side);

// Forward through the trunk. train=true uses batch BN statistics and, when
// update_running is set, folds them into the running stats (the target
// branch normalizes with batch stats but leaves its running stats to the
// EMA). cache may be null in eval.
FeaturePair trunk_forward(Trunk& trunk, const Tensor& x, bool train, bool update_running,
                          TrunkCache* cache);

// Backpropagates d_final (gradient at the final tap) and accumulates
// parameter gradients. No gradient is injected at the mid tap: refinement
// masks are constants during the representation step.
void trunk_backward(Trunk& trunk, const TrunkCache& cache, const Tensor& d_final);

Tensor mlp_forward(Mlp& mlp, const Tensor& x, bool train, bool update_running, MlpCache* cache);
// Returns gradient w.r.t. the input batch.
Tensor mlp_backward(Mlp& mlp, const MlpCache& cache, const Tensor& dy);

}  // namespace r2o
