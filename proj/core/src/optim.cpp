#include "histplan/optim.hpp"

#include <cmath>

namespace histplan {

void AdamState::step(const std::vector<Tensor*>& params,
                     const std::vector<std::vector<double>>& grads) {
    if (params.size() != grads.size()) {
        throw ShapeError("adam: " + std::to_string(params.size()) + " parameters vs " +
                         std::to_string(grads.size()) + " gradients");
    }
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(params[i]->data().size(), 0.0);
            v_[i].assign(params[i]->data().size(), 0.0);
        }
    }
    if (m_.size() != params.size()) {
        throw ShapeError("adam: parameter list changed size across steps");
    }
    ++step_count_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const std::vector<double>& g = grads[i];
        if (g.size() != p.data().size() || m_[i].size() != p.data().size()) {
            throw ShapeError("adam: gradient/moment shape does not match parameter " +
                             std::to_string(i));
        }
        for (std::size_t j = 0; j < g.size(); ++j) {
            m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g[j];
            v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g[j] * g[j];
            const double mhat = m_[i][j] / bc1;
            const double vhat = v_[i][j] / bc2;
            p.data()[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

}  // namespace histplan
