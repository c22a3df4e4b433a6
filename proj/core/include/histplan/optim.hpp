#pragma once

#include <vector>

#include "histplan/tensor.hpp"

namespace histplan {

/// Adam with bias correction. Moment buffers are laid out in the order the
/// parameters are first passed in and shape-checked on every step.
class AdamState {
public:
    AdamState(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    /// One update over aligned parameter/gradient lists. Parameters are
    /// modified in place; the step counter increments once per call.
    void step(const std::vector<Tensor*>& params, const std::vector<std::vector<double>>& grads);

    std::int64_t step_count() const { return step_count_; }
    double learning_rate() const { return lr_; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::int64_t step_count_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace histplan
