#pragma once

#include <vector>

#include "r2o/encoder.hpp"
#include "r2o/tensor.hpp"

namespace r2o {

enum class OptimKind { sgd_momentum, lars };

struct OptimConfig {
    double base_lr = 0.3;  // peak lr = base_lr * batch_size / 256
    int batch_size = 256;
    double weight_decay = 1e-6;
    double momentum = 0.9;
    double warmup_fraction = 0.01;  // of total_steps
    OptimKind kind = OptimKind::sgd_momentum;
    double lars_trust = 1e-3;
    long total_steps = 1;

    double peak_lr() const { return base_lr * batch_size / 256.0; }
    long warmup_steps() const;
    void validate() const;
};

struct TauConfig {
    double tau0 = 0.99;
    double tau_final = 1.0;
    int total_epochs = 300;

    void validate() const;
};

// Linear ramp 0 -> peak over the warmup steps, then half-cosine decay to 0
// at total_steps. Continuous at the warmup boundary.
double lr_at(const OptimConfig& cfg, long step);

// tau = 1 - (1 - tau0) * (cos(pi * epoch / T) + 1) / 2, monotone
// non-decreasing from tau0 to tau_final.
double tau_at(const TauConfig& cfg, int epoch);

struct OptimizerState {
    std::vector<Tensor> momentum;  // mirrors the parameter list
    long step = 0;
};

OptimizerState make_optimizer_state(const std::vector<ParamRef>& params);

// One update: weight decay folded into the gradients (skipped for BN
// params and biases under LARS), momentum buffers, and for LARS a per
// parameter trust ratio trust * |w| / |g + wd*w| scaling the update.
// Throws std::runtime_error on non-finite gradients, leaving parameters
// untouched.
void optim_step(std::vector<ParamRef>& params, OptimizerState& state, double lr,
                const OptimConfig& cfg);

}  // namespace r2o
