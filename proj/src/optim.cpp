#include "r2o/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "r2o/kernels.hpp"

namespace r2o {

long OptimConfig::warmup_steps() const {
    return static_cast<long>(std::llround(warmup_fraction * static_cast<double>(total_steps)));
}

void OptimConfig::validate() const {
    if (base_lr <= 0.0) throw std::invalid_argument("optim: base_lr must be positive");
    if (batch_size < 1) throw std::invalid_argument("optim: batch_size must be >= 1");
    if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("optim: momentum must be in [0,1)");
    if (weight_decay < 0.0) throw std::invalid_argument("optim: weight_decay must be >= 0");
    if (warmup_fraction < 0.0 || warmup_fraction >= 1.0)
        throw std::invalid_argument("optim: warmup_fraction must be in [0,1)");
    if (total_steps < 1) throw std::invalid_argument("optim: total_steps must be >= 1");
    if (lars_trust <= 0.0) throw std::invalid_argument("optim: lars trust coefficient must be positive");
}

void TauConfig::validate() const {
    if (!(0.0 <= tau0 && tau0 <= tau_final && tau_final <= 1.0))
        throw std::invalid_argument("tau: need 0 <= tau0 <= tau_final <= 1");
    if (total_epochs < 1) throw std::invalid_argument("tau: total_epochs must be >= 1");
}

double lr_at(const OptimConfig& cfg, long step) {
    if (step < 0 || step > cfg.total_steps) throw std::invalid_argument("lr_at: step out of range");
    const double peak = cfg.peak_lr();
    const long warmup = cfg.warmup_steps();
    if (step <= warmup && warmup > 0)
        return peak * static_cast<double>(step) / static_cast<double>(warmup);
    if (cfg.total_steps == warmup) return peak;
    const double progress = static_cast<double>(step - warmup) / static_cast<double>(cfg.total_steps - warmup);
    return 0.5 * peak * (1.0 + std::cos(M_PI * progress));
}

double tau_at(const TauConfig& cfg, int epoch) {
    if (epoch < 0 || epoch > cfg.total_epochs) throw std::invalid_argument("tau_at: epoch out of range");
    const double progress = static_cast<double>(epoch) / static_cast<double>(cfg.total_epochs);
    return cfg.tau_final - (cfg.tau_final - cfg.tau0) * (std::cos(M_PI * progress) + 1.0) / 2.0;
}

OptimizerState make_optimizer_state(const std::vector<ParamRef>& params) {
    OptimizerState state;
    state.momentum.reserve(params.size());
    for (const ParamRef& p : params) state.momentum.emplace_back(Tensor::zeros_like(*p.value));
    return state;
}

void optim_step(std::vector<ParamRef>& params, OptimizerState& state, double lr,
                const OptimConfig& cfg) {
    if (state.momentum.size() != params.size())
        throw std::invalid_argument("optim_step: state does not match the parameter list");

    for (const ParamRef& p : params)
        for (std::size_t i = 0; i < p.grad->size(); ++i)
            if (!std::isfinite(p.grad->data()[i]))
                throw std::runtime_error("optim_step: non-finite gradient in " + p.name +
                                         "; aborting the step");

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        ParamRef& p = params[pi];
        Tensor& buf = state.momentum[pi];
        const std::size_t n = p.value->size();
        double* w = p.value->data();
        const double* g = p.grad->data();
        double* v = buf.data();

        const bool excluded = cfg.kind == OptimKind::lars && p.bn_or_bias;
        const double wd = excluded ? 0.0 : cfg.weight_decay;

        // g' = g + wd * w
        std::vector<double> gd(g, g + n);
        if (wd != 0.0) kernels::axpy(wd, w, gd.data(), n);

        double local = 1.0;
        if (cfg.kind == OptimKind::lars && !excluded) {
            const double wn = std::sqrt(kernels::dot(w, w, n));
            const double gn = std::sqrt(kernels::dot(gd.data(), gd.data(), n));
            if (wn > 0.0 && gn > 0.0) local = cfg.lars_trust * wn / gn;
        }

        // v <- m*v + local*g';  w <- w - lr*v
        kernels::lerp(local, gd.data(), cfg.momentum, v, n);
        kernels::axpy(-lr, v, w, n);
    }
    ++state.step;
}

}  // namespace r2o
