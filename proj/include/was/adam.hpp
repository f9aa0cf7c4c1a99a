#pragma once

#include <cmath>
#include <vector>

#include "was/tensor.hpp"

namespace was {

// Adam with L2 regularization folded into the gradient (classic style, not
// decoupled). Parameters are registered once so moment buffers stay bound to
// the same tensors across steps.
class Adam {
public:
    Adam(std::vector<Tensor*> params, double lr, double weight_decay = 0.0,
         double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
        if (lr_ <= 0.0) throw config_error("Adam: learning rate must be positive");
        m_.reserve(params_.size());
        v_.reserve(params_.size());
        for (Tensor* p : params_) {
            if (p == nullptr) throw config_error("Adam: null parameter");
            m_.push_back(Tensor::zeros(p->shape));
            v_.push_back(Tensor::zeros(p->shape));
        }
    }

    // One update, grads aligned with the registered parameter order.
    void step(const std::vector<Tensor>& grads) {
        if (grads.size() != params_.size()) throw config_error("Adam::step: gradient count mismatch");
        ++t_;
        const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
        for (std::size_t p = 0; p < params_.size(); ++p) {
            Tensor& w = *params_[p];
            if (!w.same_shape(grads[p]))
                throw config_error("Adam::step: gradient shape " + grads[p].shape_str() +
                                   " does not match parameter " + w.shape_str());
            for (std::size_t i = 0; i < w.numel(); ++i) {
                const double g = grads[p][i] + wd_ * w[i];
                m_[p][i] = b1_ * m_[p][i] + (1.0 - b1_) * g;
                v_[p][i] = b2_ * v_[p][i] + (1.0 - b2_) * g * g;
                const double mhat = m_[p][i] / bc1;
                const double vhat = v_[p][i] / bc2;
                w[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    long steps_taken() const { return t_; }

private:
    std::vector<Tensor*> params_;
    std::vector<Tensor> m_, v_;
    double lr_, wd_, b1_, b2_, eps_;
    long t_ = 0;
};

}  // namespace was
