#pragma once

#include <memory>
#include <string>
#include <vector>

#include "artinp/nn.hpp"

namespace artinp::nn {

class Optimizer {
public:
    explicit Optimizer(std::vector<NamedTensor> tensors);
    virtual ~Optimizer() = default;
    virtual void step() = 0;
    virtual std::string kind() const = 0;
    // Exposes optimizer state for checkpointing (all state, no grads).
    virtual void visit(const TensorVisitor& v) = 0;

protected:
    std::vector<NamedTensor> params_;  // trainable only
};

class Adam : public Optimizer {
public:
    Adam(std::vector<NamedTensor> tensors, real lr = 2e-4, real beta1 = 0.5, real beta2 = 0.999,
         real eps = 1e-8);
    void step() override;
    std::string kind() const override { return "adam"; }
    void visit(const TensorVisitor& v) override;

private:
    real lr_, beta1_, beta2_, eps_;
    Tensor t_;  // step counter, kept as a tensor for uniform serialization
    std::vector<Tensor> m_, v_;
};

class Adadelta : public Optimizer {
public:
    Adadelta(std::vector<NamedTensor> tensors, real lr = 1.0, real rho = 0.95, real eps = 1e-6);
    void step() override;
    std::string kind() const override { return "adadelta"; }
    void visit(const TensorVisitor& v) override;

private:
    real lr_, rho_, eps_;
    std::vector<Tensor> eg2_, edx2_;
};

}  // namespace artinp::nn
