#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "bbecog/tensor.hpp"

namespace bbecog {

struct AdamConfig {
    double lr = 1.5e-6;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
};

// First/second moment buffers for one parameter tensor.
template <typename S>
struct AdamSlot {
    std::vector<S> m, v;
};

template <typename S>
class BasicAdam {
  public:
    BasicAdam(std::vector<BasicTensor<S>> params, AdamConfig cfg)
        : params_(std::move(params)), cfg_(cfg) {
        slots_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            slots_[i].m.assign(params_[i].numel(), S(0));
            slots_[i].v.assign(params_[i].numel(), S(0));
        }
    }

    // One update from the gradients currently accumulated on the parameters.
    // L2 decay is added to the raw gradient before the moment updates, so it
    // flows through the adaptive scaling (coupled decay, not AdamW).
    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& p = params_[i];
            if (!p.has_grad()) continue;
            S* w = p.data();
            const S* g = p.grad().data();
            auto& slot = slots_[i];
            for (std::size_t j = 0; j < p.numel(); ++j) {
                const double gj = static_cast<double>(g[j]) +
                                  cfg_.weight_decay * static_cast<double>(w[j]);
                const double m = cfg_.beta1 * slot.m[j] + (1.0 - cfg_.beta1) * gj;
                const double v = cfg_.beta2 * slot.v[j] + (1.0 - cfg_.beta2) * gj * gj;
                slot.m[j] = static_cast<S>(m);
                slot.v[j] = static_cast<S>(v);
                const double mhat = m / bc1;
                const double vhat = v / bc2;
                w[j] = static_cast<S>(w[j] - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    std::size_t step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }
    const std::vector<BasicTensor<S>>& params() const { return params_; }

  private:
    std::vector<BasicTensor<S>> params_;
    AdamConfig cfg_;
    std::vector<AdamSlot<S>> slots_;
    std::size_t t_ = 0;
};

using Adam = BasicAdam<float>;

}  // namespace bbecog
