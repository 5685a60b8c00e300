#include "artinp/optim.hpp"

#include <cmath>

namespace artinp::nn {

Optimizer::Optimizer(std::vector<NamedTensor> tensors) {
    for (auto& t : tensors)
        if (t.grad) params_.push_back(t);
}

Adam::Adam(std::vector<NamedTensor> tensors, real lr, real beta1, real beta2, real eps)
    : Optimizer(std::move(tensors)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), t_({1}) {
    for (auto& p : params_) {
        m_.emplace_back(p.value->shape());
        v_.emplace_back(p.value->shape());
    }
}

void Adam::step() {
    t_[0] += 1;
    const real t = t_[0];
    const real bc1 = 1.0 - std::pow(beta1_, t);
    const real bc2 = 1.0 - std::pow(beta2_, t);
    for (size_t k = 0; k < params_.size(); ++k) {
        Tensor& p = *params_[k].value;
        const Tensor& g = *params_[k].grad;
        Tensor& m = m_[k];
        Tensor& v = v_[k];
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < p.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const real mh = m[i] / bc1;
            const real vh = v[i] / bc2;
            p[i] -= lr_ * mh / (std::sqrt(vh) + eps_);
        }
    }
}

void Adam::visit(const TensorVisitor& vis) {
    vis("adam.t", t_, nullptr);
    for (size_t k = 0; k < params_.size(); ++k) {
        vis("adam.m." + params_[k].name, m_[k], nullptr);
        vis("adam.v." + params_[k].name, v_[k], nullptr);
    }
}

Adadelta::Adadelta(std::vector<NamedTensor> tensors, real lr, real rho, real eps)
    : Optimizer(std::move(tensors)), lr_(lr), rho_(rho), eps_(eps) {
    for (auto& p : params_) {
        eg2_.emplace_back(p.value->shape());
        edx2_.emplace_back(p.value->shape());
    }
}

void Adadelta::step() {
    for (size_t k = 0; k < params_.size(); ++k) {
        Tensor& p = *params_[k].value;
        const Tensor& g = *params_[k].grad;
        Tensor& eg2 = eg2_[k];
        Tensor& edx2 = edx2_[k];
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < p.size(); ++i) {
            eg2[i] = rho_ * eg2[i] + (1.0 - rho_) * g[i] * g[i];
            const real dx = -std::sqrt((edx2[i] + eps_) / (eg2[i] + eps_)) * g[i];
            edx2[i] = rho_ * edx2[i] + (1.0 - rho_) * dx * dx;
            p[i] += lr_ * dx;
        }
    }
}

void Adadelta::visit(const TensorVisitor& vis) {
    for (size_t k = 0; k < params_.size(); ++k) {
        vis("adadelta.eg2." + params_[k].name, eg2_[k], nullptr);
        vis("adadelta.edx2." + params_[k].name, edx2_[k], nullptr);
    }
}

}  // namespace artinp::nn
