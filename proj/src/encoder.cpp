#include "r2o/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "r2o/kernels.hpp"
#include "r2o/parallel.hpp"
#include "r2o/rng.hpp"

namespace r2o {

namespace {

// Fixed chunk grid: gradient reductions run per chunk then fold in chunk
// order, so results do not depend on the worker count.
constexpr std::size_t kChunks = 8;

int conv_out_size(int in, int stride) { return (in + 2 - 3) / stride + 1; }

void im2col(const double* x, int h, int w, int c, int stride, double* col, int out_h, int out_w) {
    // col[(oy*out_w+ox), ci*9 + ky*3 + kx], zero padding of 1.
    const int k_dim = c * 9;
    for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
            double* row = col + (static_cast<std::size_t>(oy) * out_w + ox) * k_dim;
            for (int ky = 0; ky < 3; ++ky) {
                const int iy = oy * stride - 1 + ky;
                for (int kx = 0; kx < 3; ++kx) {
                    const int ix = ox * stride - 1 + kx;
                    if (iy < 0 || iy >= h || ix < 0 || ix >= w) {
                        for (int ci = 0; ci < c; ++ci) row[ci * 9 + ky * 3 + kx] = 0.0;
                    } else {
                        const double* px = x + (static_cast<std::size_t>(iy) * w + ix) * c;
                        for (int ci = 0; ci < c; ++ci) row[ci * 9 + ky * 3 + kx] = px[ci];
                    }
                }
            }
        }
    }
}

void col2im_add(const double* col, int h, int w, int c, int stride, double* dx, int out_h, int out_w) {
    const int k_dim = c * 9;
    for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
            const double* row = col + (static_cast<std::size_t>(oy) * out_w + ox) * k_dim;
            for (int ky = 0; ky < 3; ++ky) {
                const int iy = oy * stride - 1 + ky;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < 3; ++kx) {
                    const int ix = ox * stride - 1 + kx;
                    if (ix < 0 || ix >= w) continue;
                    double* px = dx + (static_cast<std::size_t>(iy) * w + ix) * c;
                    for (int ci = 0; ci < c; ++ci) px[ci] += row[ci * 9 + ky * 3 + kx];
                }
            }
        }
    }
}

}  // namespace

Tensor conv_forward(Conv3x3& conv, const Tensor& x, ConvCache* cache) {
    const int b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    if (c != conv.in_c) throw std::invalid_argument("conv_forward: channel mismatch");
    const int oh = conv_out_size(h, conv.stride), ow = conv_out_size(w, conv.stride);
    Tensor y({b, oh, ow, conv.out_c});

    // Transposed weights [K, out_c] so the per-image product is a plain
    // row-major GEMM.
    const int k_dim = conv.in_c * 9;
    Tensor wt({k_dim, conv.out_c});
    for (int n = 0; n < conv.out_c; ++n)
        for (int k = 0; k < k_dim; ++k) wt(k, n) = conv.w(n, k);

    const std::size_t m = static_cast<std::size_t>(oh) * ow;
    parallel_chunks(static_cast<std::size_t>(b), kChunks, [&](std::size_t, std::size_t lo, std::size_t hi) {
        std::vector<double> col(m * static_cast<std::size_t>(k_dim));
        for (std::size_t i = lo; i < hi; ++i) {
            const double* xi = x.data() + i * static_cast<std::size_t>(h) * w * c;
            im2col(xi, h, w, c, conv.stride, col.data(), oh, ow);
            double* yi = y.data() + i * m * static_cast<std::size_t>(conv.out_c);
            kernels::gemm_nn(col.data(), wt.data(), yi, m, static_cast<std::size_t>(k_dim),
                             static_cast<std::size_t>(conv.out_c));
        }
    });

    if (cache) {
        cache->x = x;
        cache->out_h = oh;
        cache->out_w = ow;
    }
    return y;
}

// Returns dx; accumulates conv.gw.
Tensor conv_backward(Conv3x3& conv, const ConvCache& cache, const Tensor& dy) {
    const Tensor& x = cache.x;
    const int b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const int oh = cache.out_h, ow = cache.out_w;
    const int k_dim = conv.in_c * 9;
    const std::size_t m = static_cast<std::size_t>(oh) * ow;

    Tensor dx({b, h, w, c});
    const std::size_t n_chunks = std::min<std::size_t>(kChunks, static_cast<std::size_t>(b));
    std::vector<Tensor> gw_parts(n_chunks, Tensor({conv.out_c, k_dim}));

    parallel_chunks(static_cast<std::size_t>(b), kChunks, [&](std::size_t chunk, std::size_t lo, std::size_t hi) {
        std::vector<double> col(m * static_cast<std::size_t>(k_dim));
        std::vector<double> dcol(m * static_cast<std::size_t>(k_dim));
        for (std::size_t i = lo; i < hi; ++i) {
            const double* xi = x.data() + i * static_cast<std::size_t>(h) * w * c;
            const double* dyi = dy.data() + i * m * static_cast<std::size_t>(conv.out_c);
            im2col(xi, h, w, c, conv.stride, col.data(), oh, ow);
            // dW[n,k] += sum_m dy[m,n] col[m,k]
            kernels::gemm_tn(dyi, col.data(), gw_parts[chunk].data(), m,
                             static_cast<std::size_t>(conv.out_c), static_cast<std::size_t>(k_dim));
            // dcol[m,k] = sum_n dy[m,n] w[n,k]
            std::fill(dcol.begin(), dcol.end(), 0.0);
            kernels::gemm_nn(dyi, conv.w.data(), dcol.data(), m, static_cast<std::size_t>(conv.out_c),
                             static_cast<std::size_t>(k_dim));
            col2im_add(dcol.data(), h, w, c, conv.stride,
                       dx.data() + i * static_cast<std::size_t>(h) * w * c, oh, ow);
        }
    });
    for (const Tensor& part : gw_parts)
        kernels::axpy(1.0, part.data(), conv.gw.data(), conv.gw.size());
    return dx;
}

namespace {
// rows = product of all dims except the channel (last) dim.
std::size_t bn_rows(const Tensor& x) { return x.size() / static_cast<std::size_t>(x.shape().back()); }
}  // namespace

Tensor bn_forward(BatchNorm& bn, const Tensor& x, bool train, bool update_running, BnCache* cache) {
    const int c = x.shape().back();
    if (c != bn.c) throw std::invalid_argument("bn_forward: channel mismatch");
    const std::size_t rows = bn_rows(x);
    Tensor y(x.shape());

    std::vector<double> mean(static_cast<std::size_t>(c)), inv_std(static_cast<std::size_t>(c));
    if (train) {
        std::vector<double> var(static_cast<std::size_t>(c), 0.0);
        for (int ch = 0; ch < c; ++ch) mean[static_cast<std::size_t>(ch)] = 0.0;
        const double* xd = x.data();
        for (std::size_t r = 0; r < rows; ++r)
            for (int ch = 0; ch < c; ++ch) mean[static_cast<std::size_t>(ch)] += xd[r * c + ch];
        for (int ch = 0; ch < c; ++ch) mean[static_cast<std::size_t>(ch)] /= static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r)
            for (int ch = 0; ch < c; ++ch) {
                const double d = xd[r * c + ch] - mean[static_cast<std::size_t>(ch)];
                var[static_cast<std::size_t>(ch)] += d * d;
            }
        for (int ch = 0; ch < c; ++ch) {
            var[static_cast<std::size_t>(ch)] /= static_cast<double>(rows);
            inv_std[static_cast<std::size_t>(ch)] = 1.0 / std::sqrt(var[static_cast<std::size_t>(ch)] + bn.eps);
        }
        if (update_running) {
            for (int ch = 0; ch < c; ++ch) {
                bn.run_mean(ch) = (1.0 - bn.momentum) * bn.run_mean(ch) + bn.momentum * mean[static_cast<std::size_t>(ch)];
                bn.run_var(ch) = (1.0 - bn.momentum) * bn.run_var(ch) + bn.momentum * var[static_cast<std::size_t>(ch)];
            }
        }
    } else {
        for (int ch = 0; ch < c; ++ch) {
            mean[static_cast<std::size_t>(ch)] = bn.run_mean(ch);
            inv_std[static_cast<std::size_t>(ch)] = 1.0 / std::sqrt(bn.run_var(ch) + bn.eps);
        }
    }

    const double* xd = x.data();
    double* yd = y.data();
    double* xh = nullptr;
    if (cache) {
        cache->x_hat = Tensor(x.shape());
        cache->inv_std = inv_std;
        xh = cache->x_hat.data();
    }
    for (std::size_t r = 0; r < rows; ++r)
        for (int ch = 0; ch < c; ++ch) {
            const double xhat = (xd[r * c + ch] - mean[static_cast<std::size_t>(ch)]) * inv_std[static_cast<std::size_t>(ch)];
            if (xh) xh[r * c + ch] = xhat;
            yd[r * c + ch] = bn.gamma(ch) * xhat + bn.beta(ch);
        }
    return y;
}

// Returns dx; accumulates bn.ggamma / bn.gbeta. Train-mode statistics.
Tensor bn_backward(BatchNorm& bn, const BnCache& cache, const Tensor& dy) {
    const int c = dy.shape().back();
    const std::size_t rows = bn_rows(dy);
    const double* dyd = dy.data();
    const double* xh = cache.x_hat.data();

    std::vector<double> dgamma(static_cast<std::size_t>(c), 0.0), dbeta(static_cast<std::size_t>(c), 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (int ch = 0; ch < c; ++ch) {
            dgamma[static_cast<std::size_t>(ch)] += dyd[r * c + ch] * xh[r * c + ch];
            dbeta[static_cast<std::size_t>(ch)] += dyd[r * c + ch];
        }
    for (int ch = 0; ch < c; ++ch) {
        bn.ggamma(ch) += dgamma[static_cast<std::size_t>(ch)];
        bn.gbeta(ch) += dbeta[static_cast<std::size_t>(ch)];
    }

    Tensor dx(dy.shape());
    double* dxd = dx.data();
    const double n = static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
        for (int ch = 0; ch < c; ++ch) {
            const double g = bn.gamma(ch) * cache.inv_std[static_cast<std::size_t>(ch)];
            dxd[r * c + ch] = g * (dyd[r * c + ch] - dbeta[static_cast<std::size_t>(ch)] / n -
                                   xh[r * c + ch] * dgamma[static_cast<std::size_t>(ch)] / n);
        }
    return dx;
}

Tensor linear_forward(Linear& lin, const Tensor& x) {
    const int b = x.dim(0);
    if (x.dim(1) != lin.in) throw std::invalid_argument("linear_forward: dim mismatch");
    Tensor y({b, lin.out});
    // y[m,n] = sum_k x[m,k] w[n,k]  via transposed weights
    Tensor wt({lin.in, lin.out});
    for (int n = 0; n < lin.out; ++n)
        for (int k = 0; k < lin.in; ++k) wt(k, n) = lin.w(n, k);
    kernels::gemm_nn(x.data(), wt.data(), y.data(), static_cast<std::size_t>(b),
                     static_cast<std::size_t>(lin.in), static_cast<std::size_t>(lin.out));
    if (lin.has_bias)
        for (int m = 0; m < b; ++m)
            for (int n = 0; n < lin.out; ++n) y(m, n) += lin.b(n);
    return y;
}

Tensor linear_backward(Linear& lin, const Tensor& x, const Tensor& dy) {
    const int b = x.dim(0);
    // dW[n,k] += sum_m dy[m,n] x[m,k]
    kernels::gemm_tn(dy.data(), x.data(), lin.gw.data(), static_cast<std::size_t>(b),
                     static_cast<std::size_t>(lin.out), static_cast<std::size_t>(lin.in));
    if (lin.has_bias)
        for (int m = 0; m < b; ++m)
            for (int n = 0; n < lin.out; ++n) lin.gb(n) += dy(m, n);
    // dx[m,k] = sum_n dy[m,n] w[n,k]
    Tensor dx({b, lin.in});
    kernels::gemm_nn(dy.data(), lin.w.data(), dx.data(), static_cast<std::size_t>(b),
                     static_cast<std::size_t>(lin.out), static_cast<std::size_t>(lin.in));
    return dx;
}

Tensor relu_forward(const Tensor& x) {
    Tensor y(x.shape());
    kernels::relu(x.data(), y.data(), x.size());
    return y;
}

Tensor relu_backward_t(const Tensor& y, const Tensor& dy) {
    Tensor dx(dy.shape());
    kernels::relu_backward(y.data(), dy.data(), dx.data(), dy.size());
    return dx;
}

Conv3x3 make_conv(int in_c, int out_c, int stride, Rng& rng) {
    Conv3x3 conv;
    conv.in_c = in_c;
    conv.out_c = out_c;
    conv.stride = stride;
    conv.w = Tensor({out_c, in_c * 9});
    conv.gw = Tensor({out_c, in_c * 9});
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_c) * 9.0);
    for (std::size_t i = 0; i < conv.w.size(); ++i) conv.w.data()[i] = rng.uniform(-bound, bound);
    return conv;
}

BatchNorm make_bn(int c) {
    BatchNorm bn;
    bn.c = c;
    bn.gamma = Tensor({c});
    bn.beta = Tensor({c});
    bn.ggamma = Tensor({c});
    bn.gbeta = Tensor({c});
    bn.run_mean = Tensor({c});
    bn.run_var = Tensor({c});
    bn.gamma.fill(1.0);
    bn.run_var.fill(1.0);
    return bn;
}

Linear make_linear(int in, int out, bool bias, Rng& rng) {
    Linear lin;
    lin.in = in;
    lin.out = out;
    lin.has_bias = bias;
    lin.w = Tensor({out, in});
    lin.gw = Tensor({out, in});
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (std::size_t i = 0; i < lin.w.size(); ++i) lin.w.data()[i] = rng.uniform(-bound, bound);
    if (bias) {
        lin.b = Tensor({out});
        lin.gb = Tensor({out});
        for (std::size_t i = 0; i < lin.b.size(); ++i) lin.b.data()[i] = rng.uniform(-bound, bound);
    }
    return lin;
}

Mlp make_mlp(int in, int hidden, int out, Rng& rng) {
    Mlp mlp;
    mlp.fc1 = make_linear(in, hidden, false, rng);
    mlp.bn = make_bn(hidden);
    mlp.fc2 = make_linear(hidden, out, true, rng);
    return mlp;
}

namespace {

Trunk make_trunk(const EncoderConfig& cfg, Rng& rng) {
    Trunk trunk;
    trunk.cfg = cfg;
    trunk.blocks.push_back({make_conv(3, cfg.stem_channels, 2, rng), make_bn(cfg.stem_channels)});
    int prev = cfg.stem_channels;
    for (int s = 0; s < cfg.n_stages(); ++s) {
        const int width = cfg.stage_widths[static_cast<std::size_t>(s)];
        trunk.blocks.push_back({make_conv(prev, width, 2, rng), make_bn(width)});
        trunk.blocks.push_back({make_conv(width, width, 1, rng), make_bn(width)});
        prev = width;
    }
    return trunk;
}

void collect_mlp_params(const std::string& prefix, Mlp& mlp, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".fc1.w", &mlp.fc1.w, &mlp.fc1.gw, false});
    out.push_back({prefix + ".bn.gamma", &mlp.bn.gamma, &mlp.bn.ggamma, true});
    out.push_back({prefix + ".bn.beta", &mlp.bn.beta, &mlp.bn.gbeta, true});
    out.push_back({prefix + ".fc2.w", &mlp.fc2.w, &mlp.fc2.gw, false});
    out.push_back({prefix + ".fc2.b", &mlp.fc2.b, &mlp.fc2.gb, true});
}

void collect_trunk_params(const std::string& prefix, Trunk& trunk, std::vector<ParamRef>& out) {
    for (std::size_t i = 0; i < trunk.blocks.size(); ++i) {
        Block& blk = trunk.blocks[i];
        const std::string base = prefix + ".block" + std::to_string(i);
        out.push_back({base + ".conv.w", &blk.conv.w, &blk.conv.gw, false});
        out.push_back({base + ".bn.gamma", &blk.bn.gamma, &blk.bn.ggamma, true});
        out.push_back({base + ".bn.beta", &blk.bn.beta, &blk.bn.gbeta, true});
    }
}

void collect_mlp_stats(const std::string& prefix, Mlp& mlp, std::vector<StatRef>& out) {
    out.push_back({prefix + ".bn.run_mean", &mlp.bn.run_mean});
    out.push_back({prefix + ".bn.run_var", &mlp.bn.run_var});
}

void collect_trunk_stats(const std::string& prefix, Trunk& trunk, std::vector<StatRef>& out) {
    for (std::size_t i = 0; i < trunk.blocks.size(); ++i) {
        const std::string base = prefix + ".block" + std::to_string(i);
        out.push_back({base + ".bn.run_mean", &trunk.blocks[i].bn.run_mean});
        out.push_back({base + ".bn.run_var", &trunk.blocks[i].bn.run_var});
    }
}

}  // namespace

void EncoderConfig::validate() const {
    if (input_side < 4) throw std::invalid_argument("encoder: input side too small");
    if (stage_widths.empty()) throw std::invalid_argument("encoder: no stages");
    for (int w : stage_widths)
        if (w < 1) throw std::invalid_argument("encoder: stage width must be >= 1");
    if (stem_channels < 1) throw std::invalid_argument("encoder: stem channels must be >= 1");
    if (mid_stage < 1 || final_stage > n_stages() || mid_stage >= final_stage)
        throw std::invalid_argument("encoder: mid tap must precede final tap within the stages");
    if (input_side % (1 << (1 + final_stage)) != 0)
        throw std::invalid_argument("encoder: input side must be divisible by the total downsampling");
}

void HeadConfig::validate() const {
    if (proj_hidden < 1 || proj_out < 1 || pred_hidden < 1)
        throw std::invalid_argument("heads: widths must be >= 1");
}

NetworkPair NetworkPair::init(const EncoderConfig& enc, const HeadConfig& heads, std::uint64_t seed) {
    enc.validate();
    heads.validate();
    Rng rng(derive_seed(seed, {0x1a17}));
    NetworkPair pair;
    pair.online.trunk = make_trunk(enc, rng);
    pair.online.projector = make_mlp(enc.d_final(), heads.proj_hidden, heads.proj_out, rng);
    pair.online.predictor = make_mlp(heads.proj_out, heads.pred_hidden, heads.proj_out, rng);
    // Target starts as a copy of the online encoder+projector.
    pair.target.trunk = pair.online.trunk;
    pair.target.projector = pair.online.projector;
    return pair;
}

std::vector<ParamRef> NetworkPair::online_params() {
    std::vector<ParamRef> out;
    collect_trunk_params("online.trunk", online.trunk, out);
    collect_mlp_params("online.projector", online.projector, out);
    collect_mlp_params("online.predictor", online.predictor, out);
    return out;
}

std::vector<ParamRef> NetworkPair::target_params() {
    std::vector<ParamRef> out;
    collect_trunk_params("target.trunk", target.trunk, out);
    collect_mlp_params("target.projector", target.projector, out);
    return out;
}

std::vector<StatRef> NetworkPair::online_stats() {
    std::vector<StatRef> out;
    collect_trunk_stats("online.trunk", online.trunk, out);
    collect_mlp_stats("online.projector", online.projector, out);
    collect_mlp_stats("online.predictor", online.predictor, out);
    return out;
}

std::vector<StatRef> NetworkPair::target_stats() {
    std::vector<StatRef> out;
    collect_trunk_stats("target.trunk", target.trunk, out);
    collect_mlp_stats("target.projector", target.projector, out);
    return out;
}

void NetworkPair::zero_grads() {
    for (ParamRef& p : online_params()) p.grad->zero();
}

void NetworkPair::ema_update(double tau) {
    if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("ema_update: tau outside [0,1]");
    auto theta = online_params();
    auto xi = target_params();
    // Online list is target list + predictor entries at the tail; shapes
    // must line up pairwise.
    for (std::size_t i = 0; i < xi.size(); ++i) {
        if (!xi[i].value->same_shape(*theta[i].value))
            throw std::invalid_argument("ema_update: shape mismatch at " + xi[i].name);
        kernels::lerp(1.0 - tau, theta[i].value->data(), tau, xi[i].value->data(), xi[i].value->size());
    }
    auto son = online_stats();
    auto stg = target_stats();
    for (std::size_t i = 0; i < stg.size(); ++i)
        kernels::lerp(1.0 - tau, son[i].value->data(), tau, stg[i].value->data(), stg[i].value->size());
}

Tensor stack_images(const std::vector<const ImageTensor*>& batch, int side) {
    Tensor x({static_cast<int>(batch.size()), side, side, 3});
    double* dst = x.data();
    for (const ImageTensor* img : batch) {
        if (img->h != side || img->w != side)
            throw std::invalid_argument("stack_images: image does not match the configured side");
        std::copy(img->data.begin(), img->data.end(), dst);
        dst += img->data.size();
    }
    return x;
}

FeaturePair trunk_forward(Trunk& trunk, const Tensor& x, bool train, bool update_running,
                          TrunkCache* cache) {
    if (x.rank() != 4 || x.dim(1) != trunk.cfg.input_side || x.dim(2) != trunk.cfg.input_side ||
        x.dim(3) != 3)
        throw std::invalid_argument("trunk_forward: input shape mismatch");
    if (cache) cache->blocks.assign(trunk.blocks.size(), BlockCache{});

    FeaturePair taps;
    Tensor cur = x;
    const int mid_at = trunk.blocks_through_stage(trunk.cfg.mid_stage) - 1;
    const int final_at = trunk.blocks_through_stage(trunk.cfg.final_stage) - 1;
    for (std::size_t i = 0; i < trunk.blocks.size(); ++i) {
        Block& blk = trunk.blocks[i];
        BlockCache* bc = cache ? &cache->blocks[i] : nullptr;
        Tensor conv_out = conv_forward(blk.conv, cur, bc ? &bc->conv : nullptr);
        Tensor bn_out = bn_forward(blk.bn, conv_out, train, train && update_running, bc ? &bc->bn : nullptr);
        cur = relu_forward(bn_out);
        if (bc) bc->relu_out = cur;
        if (static_cast<int>(i) == mid_at) taps.mid = cur;
        if (static_cast<int>(i) == final_at) taps.final = cur;
    }
    return taps;
}

void trunk_backward(Trunk& trunk, const TrunkCache& cache, const Tensor& d_final) {
    const int final_at = trunk.blocks_through_stage(trunk.cfg.final_stage) - 1;
    if (cache.blocks.size() != trunk.blocks.size())
        throw std::invalid_argument("trunk_backward: cache does not match the trunk (run a train-mode forward first)");
    if (!d_final.same_shape(cache.blocks[static_cast<std::size_t>(final_at)].relu_out))
        throw std::invalid_argument("trunk_backward: gradient shape does not match the final tap");
    Tensor d = d_final;
    for (int i = final_at; i >= 0; --i) {
        Block& blk = trunk.blocks[static_cast<std::size_t>(i)];
        const BlockCache& bc = cache.blocks[static_cast<std::size_t>(i)];
        Tensor d_bn = relu_backward_t(bc.relu_out, d);
        Tensor d_conv = bn_backward(blk.bn, bc.bn, d_bn);
        d = conv_backward(blk.conv, bc.conv, d_conv);
    }
}

Tensor mlp_forward(Mlp& mlp, const Tensor& x, bool train, bool update_running, MlpCache* cache) {
    if (cache) cache->x = x;
    Tensor h = linear_forward(mlp.fc1, x);
    Tensor hn = bn_forward(mlp.bn, h, train, train && update_running, cache ? &cache->bn : nullptr);
    Tensor hr = relu_forward(hn);
    if (cache) cache->relu_out = hr;
    return linear_forward(mlp.fc2, hr);
}

Tensor mlp_backward(Mlp& mlp, const MlpCache& cache, const Tensor& dy) {
    Tensor d_hr = linear_backward(mlp.fc2, cache.relu_out, dy);
    Tensor d_hn = relu_backward_t(cache.relu_out, d_hr);
    Tensor d_h = bn_backward(mlp.bn, cache.bn, d_hn);
    return linear_backward(mlp.fc1, cache.x, d_h);
}

}  // namespace r2o
