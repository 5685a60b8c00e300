#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "artinp/kernels.hpp"
#include "artinp/rng.hpp"
#include "artinp/tensor.hpp"

namespace artinp::nn {

// Per-call activation cache. Forward fills it when a backward pass will
// follow; inference passes nullptr and stays stateless, so a single net can
// serve many slices concurrently in eval mode.
struct LayerCtx {
    std::vector<Tensor> saved;
};
using NetCtx = std::vector<LayerCtx>;

// Visitor over named tensors. grad == nullptr marks non-trainable state
// (batch-norm running statistics); otherwise (value, grad) is a parameter.
using TensorVisitor = std::function<void(const std::string&, Tensor&, Tensor*)>;

class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& x, LayerCtx* ctx, bool training) = 0;
    // Accumulates into parameter grads and returns dL/dx.
    virtual Tensor backward(const Tensor& dy, const LayerCtx& ctx) = 0;
    virtual void visit(const std::string& prefix, const TensorVisitor& v) {}
    virtual void init(Rng& rng) {}
};

class Conv2d : public Layer {
public:
    Conv2d(int in_c, int out_c, int k, int stride, int pad, int dilation = 1);
    Tensor forward(const Tensor& x, LayerCtx* ctx, bool training) override;
    Tensor backward(const Tensor& dy, const LayerCtx& ctx) override;
    void visit(const std::string& prefix, const TensorVisitor& v) override;
    void init(Rng& rng) override;

    Tensor w, b, gw, gb;

private:
    kernels::ConvGeom geom(const Tensor& x) const;
    int in_c_, out_c_, k_, stride_, pad_, dilation_;
};

class ConvTranspose2d : public Layer {
public:
    ConvTranspose2d(int in_c, int out_c, int k, int stride, int pad);
    Tensor forward(const Tensor& x, LayerCtx* ctx, bool training) override;
    Tensor backward(const Tensor& dy, const LayerCtx& ctx) override;
    void visit(const std::string& prefix, const TensorVisitor& v) override;
    void init(Rng& rng) override;

    Tensor w, b, gw, gb;

private:
    kernels::ConvTGeom geom(const Tensor& x) const;
    int in_c_, out_c_, k_, stride_, pad_;
};

// Spatial batch norm at batch size 1: statistics are taken over H*W per
// channel, running stats are kept for eval mode.
class BatchNorm2d : public Layer {
public:
    explicit BatchNorm2d(int c, real momentum = 0.1, real eps = 1e-5);
    Tensor forward(const Tensor& x, LayerCtx* ctx, bool training) override;
    Tensor backward(const Tensor& dy, const LayerCtx& ctx) override;
    void visit(const std::string& prefix, const TensorVisitor& v) override;
    void init(Rng& rng) override;

    Tensor gamma, beta, ggamma, gbeta;
    Tensor running_mean, running_var;

private:
    int c_;
    real momentum_, eps_;
};

class ReLU : public Layer {
public:
    Tensor forward(const Tensor& x, LayerCtx* ctx, bool training) override;
    Tensor backward(const Tensor& dy, const LayerCtx& ctx) override;
};

class LeakyReLU : public Layer {
public:
    explicit LeakyReLU(real slope = 0.2) : slope_(slope) {}
    Tensor forward(const Tensor& x, LayerCtx* ctx, bool training) override;
    Tensor backward(const Tensor& dy, const LayerCtx& ctx) override;

private:
    real slope_;
};

class Sigmoid : public Layer {
public:
    Tensor forward(const Tensor& x, LayerCtx* ctx, bool training) override;
    Tensor backward(const Tensor& dy, const LayerCtx& ctx) override;
};

class Tanh : public Layer {
public:
    Tensor forward(const Tensor& x, LayerCtx* ctx, bool training) override;
    Tensor backward(const Tensor& dy, const LayerCtx& ctx) override;
};

class Flatten : public Layer {
public:
    Tensor forward(const Tensor& x, LayerCtx* ctx, bool training) override;
    Tensor backward(const Tensor& dy, const LayerCtx& ctx) override;
};

class Linear : public Layer {
public:
    Linear(int in, int out);
    Tensor forward(const Tensor& x, LayerCtx* ctx, bool training) override;
    Tensor backward(const Tensor& dy, const LayerCtx& ctx) override;
    void visit(const std::string& prefix, const TensorVisitor& v) override;
    void init(Rng& rng) override;

    Tensor w, b, gw, gb;

private:
    int in_, out_;
};

// Plain layer pipeline. Custom nets compose several of these.
class Sequential {
public:
    Layer* add(std::string name, std::unique_ptr<Layer> layer);
    template <typename L, typename... Args>
    L* emplace(std::string name, Args&&... args) {
        auto layer = std::make_unique<L>(std::forward<Args>(args)...);
        L* raw = layer.get();
        add(std::move(name), std::move(layer));
        return raw;
    }

    Tensor forward(const Tensor& x, NetCtx* ctx, bool training);
    Tensor backward(const Tensor& dy, const NetCtx& ctx);
    void visit(const std::string& prefix, const TensorVisitor& v);
    void visit(const TensorVisitor& v) { visit("", v); }
    void init(Rng& rng);
    size_t size() const { return layers_.size(); }

private:
    std::vector<std::pair<std::string, std::unique_ptr<Layer>>> layers_;
};

struct NamedTensor {
    std::string name;
    Tensor* value = nullptr;
    Tensor* grad = nullptr;  // nullptr for state tensors
};

// Collects the visitor output into a stable list (declaration order).
template <typename Visitable>
std::vector<NamedTensor> collect_tensors(Visitable& net) {
    std::vector<NamedTensor> out;
    net.visit([&out](const std::string& name, Tensor& v, Tensor* g) {
        out.push_back({name, &v, g});
    });
    return out;
}

template <typename Visitable>
void zero_grads(Visitable& net) {
    net.visit([](const std::string&, Tensor&, Tensor* g) {
        if (g) g->zero();
    });
}

// FNV-1a over the raw parameter bytes; used for freeze contracts.
template <typename Visitable>
uint64_t param_hash(Visitable& net) {
    uint64_t h = 1469598103934665603ull;
    net.visit([&h](const std::string&, Tensor& v, Tensor* g) {
        if (!g) return;
        const unsigned char* p = reinterpret_cast<const unsigned char*>(v.data());
        for (size_t i = 0; i < size_t(v.size()) * sizeof(real); ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    });
    return h;
}

inline void check_shape(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("shape mismatch: ") + what);
}

}  // namespace artinp::nn
