#include "artinp/nn.hpp"

#include <cmath>
#include <cstring>

namespace artinp::nn {

namespace {

Tensor save_copy(const Tensor& t) { return t; }

void kaiming_init(Tensor& w, Tensor& b, int fan_in, Rng& rng) {
    fill_normal(w, rng, 0.0, std::sqrt(2.0 / fan_in));
    b.zero();
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int in_c, int out_c, int k, int stride, int pad, int dilation)
    : w({out_c, in_c, k, k}),
      b({out_c}),
      gw({out_c, in_c, k, k}),
      gb({out_c}),
      in_c_(in_c),
      out_c_(out_c),
      k_(k),
      stride_(stride),
      pad_(pad),
      dilation_(dilation) {}

kernels::ConvGeom Conv2d::geom(const Tensor& x) const {
    check_shape(x.ndim() == 3 && x.dim(0) == in_c_, "conv2d input");
    return kernels::ConvGeom{in_c_, x.dim(1), x.dim(2), out_c_, k_, k_, stride_, pad_, dilation_};
}

Tensor Conv2d::forward(const Tensor& x, LayerCtx* ctx, bool) {
    const auto g = geom(x);
    check_shape(g.out_h() > 0 && g.out_w() > 0, "conv2d output would be empty");
    Tensor y({out_c_, g.out_h(), g.out_w()});
    kernels::conv2d_forward(x.data(), w.data(), b.data(), g, y.data());
    if (ctx) ctx->saved = {save_copy(x)};
    return y;
}

Tensor Conv2d::backward(const Tensor& dy, const LayerCtx& ctx) {
    const Tensor& x = ctx.saved.at(0);
    const auto g = geom(x);
    kernels::conv2d_backward_params(x.data(), dy.data(), g, gw.data(), gb.data());
    Tensor dx({in_c_, x.dim(1), x.dim(2)});
    kernels::conv2d_backward_input(dy.data(), w.data(), g, dx.data());
    return dx;
}

void Conv2d::visit(const std::string& prefix, const TensorVisitor& v) {
    v(prefix + ".w", w, &gw);
    v(prefix + ".b", b, &gb);
}

void Conv2d::init(Rng& rng) { kaiming_init(w, b, in_c_ * k_ * k_, rng); }

// ------------------------------------------------------- ConvTranspose2d

ConvTranspose2d::ConvTranspose2d(int in_c, int out_c, int k, int stride, int pad)
    : w({in_c, out_c, k, k}),
      b({out_c}),
      gw({in_c, out_c, k, k}),
      gb({out_c}),
      in_c_(in_c),
      out_c_(out_c),
      k_(k),
      stride_(stride),
      pad_(pad) {}

kernels::ConvTGeom ConvTranspose2d::geom(const Tensor& x) const {
    check_shape(x.ndim() == 3 && x.dim(0) == in_c_, "convT input");
    return kernels::ConvTGeom{in_c_, x.dim(1), x.dim(2), out_c_, k_, k_, stride_, pad_};
}

Tensor ConvTranspose2d::forward(const Tensor& x, LayerCtx* ctx, bool) {
    const auto g = geom(x);
    check_shape(g.out_h() > 0 && g.out_w() > 0, "convT output would be empty");
    Tensor y({out_c_, g.out_h(), g.out_w()});
    kernels::convt2d_forward(x.data(), w.data(), b.data(), g, y.data());
    if (ctx) ctx->saved = {save_copy(x)};
    return y;
}

Tensor ConvTranspose2d::backward(const Tensor& dy, const LayerCtx& ctx) {
    const Tensor& x = ctx.saved.at(0);
    const auto g = geom(x);
    kernels::convt2d_backward_params(x.data(), dy.data(), g, gw.data(), gb.data());
    Tensor dx({in_c_, x.dim(1), x.dim(2)});
    kernels::convt2d_backward_input(dy.data(), w.data(), g, dx.data());
    return dx;
}

void ConvTranspose2d::visit(const std::string& prefix, const TensorVisitor& v) {
    v(prefix + ".w", w, &gw);
    v(prefix + ".b", b, &gb);
}

void ConvTranspose2d::init(Rng& rng) { kaiming_init(w, b, in_c_ * k_ * k_, rng); }

// ----------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(int c, real momentum, real eps)
    : gamma({c}, 1.0),
      beta({c}),
      ggamma({c}),
      gbeta({c}),
      running_mean({c}),
      running_var({c}, 1.0),
      c_(c),
      momentum_(momentum),
      eps_(eps) {}

Tensor BatchNorm2d::forward(const Tensor& x, LayerCtx* ctx, bool training) {
    check_shape(x.ndim() == 3 && x.dim(0) == c_, "batchnorm input");
    const int h = x.dim(1), wd = x.dim(2);
    const int64_t n = int64_t(h) * wd;
    Tensor y({c_, h, wd});
    Tensor xhat({c_, h, wd});
    Tensor invstd({c_});

#pragma omp parallel for schedule(static)
    for (int c = 0; c < c_; ++c) {
        const real* xc = x.data() + c * n;
        real mean, var;
        if (training) {
            real s = 0;
            for (int64_t i = 0; i < n; ++i) s += xc[i];
            mean = s / real(n);
            real sv = 0;
            for (int64_t i = 0; i < n; ++i) {
                const real d = xc[i] - mean;
                sv += d * d;
            }
            var = sv / real(n);
            running_mean[c] = (1 - momentum_) * running_mean[c] + momentum_ * mean;
            running_var[c] = (1 - momentum_) * running_var[c] + momentum_ * var;
        } else {
            mean = running_mean[c];
            var = running_var[c];
        }
        const real is = 1.0 / std::sqrt(var + eps_);
        invstd[c] = is;
        const real g = gamma[c], bb = beta[c];
        real* xh = xhat.data() + c * n;
        real* yc = y.data() + c * n;
        for (int64_t i = 0; i < n; ++i) {
            xh[i] = (xc[i] - mean) * is;
            yc[i] = g * xh[i] + bb;
        }
    }
    if (ctx) ctx->saved = {std::move(xhat), std::move(invstd)};
    return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy, const LayerCtx& ctx) {
    const Tensor& xhat = ctx.saved.at(0);
    const Tensor& invstd = ctx.saved.at(1);
    const int h = dy.dim(1), wd = dy.dim(2);
    const int64_t n = int64_t(h) * wd;
    Tensor dx({c_, h, wd});

#pragma omp parallel for schedule(static)
    for (int c = 0; c < c_; ++c) {
        const real* dyc = dy.data() + c * n;
        const real* xh = xhat.data() + c * n;
        real sum_dy = 0, sum_dy_xhat = 0;
        for (int64_t i = 0; i < n; ++i) {
            sum_dy += dyc[i];
            sum_dy_xhat += dyc[i] * xh[i];
        }
        ggamma[c] += sum_dy_xhat;
        gbeta[c] += sum_dy;
        const real g = gamma[c], is = invstd[c];
        real* dxc = dx.data() + c * n;
        for (int64_t i = 0; i < n; ++i) {
            dxc[i] = g * is / real(n) * (real(n) * dyc[i] - sum_dy - xh[i] * sum_dy_xhat);
        }
    }
    return dx;
}

void BatchNorm2d::visit(const std::string& prefix, const TensorVisitor& v) {
    v(prefix + ".gamma", gamma, &ggamma);
    v(prefix + ".beta", beta, &gbeta);
    v(prefix + ".running_mean", running_mean, nullptr);
    v(prefix + ".running_var", running_var, nullptr);
}

void BatchNorm2d::init(Rng&) {
    gamma.fill(1.0);
    beta.zero();
    running_mean.zero();
    running_var.fill(1.0);
}

// ------------------------------------------------------------ activations

Tensor ReLU::forward(const Tensor& x, LayerCtx* ctx, bool) {
    Tensor y = x;
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < y.size(); ++i)
        if (y[i] < 0) y[i] = 0;
    if (ctx) ctx->saved = {x};
    return y;
}

Tensor ReLU::backward(const Tensor& dy, const LayerCtx& ctx) {
    const Tensor& x = ctx.saved.at(0);
    Tensor dx = dy;
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < dx.size(); ++i)
        if (x[i] <= 0) dx[i] = 0;
    return dx;
}

Tensor LeakyReLU::forward(const Tensor& x, LayerCtx* ctx, bool) {
    Tensor y = x;
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < y.size(); ++i)
        if (y[i] < 0) y[i] *= slope_;
    if (ctx) ctx->saved = {x};
    return y;
}

Tensor LeakyReLU::backward(const Tensor& dy, const LayerCtx& ctx) {
    const Tensor& x = ctx.saved.at(0);
    Tensor dx = dy;
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < dx.size(); ++i)
        if (x[i] <= 0) dx[i] *= slope_;
    return dx;
}

Tensor Sigmoid::forward(const Tensor& x, LayerCtx* ctx, bool) {
    Tensor y = x;
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < y.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-y[i]));
    if (ctx) ctx->saved = {y};
    return y;
}

Tensor Sigmoid::backward(const Tensor& dy, const LayerCtx& ctx) {
    const Tensor& y = ctx.saved.at(0);
    Tensor dx = dy;
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < dx.size(); ++i) dx[i] *= y[i] * (1.0 - y[i]);
    return dx;
}

Tensor Tanh::forward(const Tensor& x, LayerCtx* ctx, bool) {
    Tensor y = x;
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < y.size(); ++i) y[i] = std::tanh(y[i]);
    if (ctx) ctx->saved = {y};
    return y;
}

Tensor Tanh::backward(const Tensor& dy, const LayerCtx& ctx) {
    const Tensor& y = ctx.saved.at(0);
    Tensor dx = dy;
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < dx.size(); ++i) dx[i] *= 1.0 - y[i] * y[i];
    return dx;
}

// ---------------------------------------------------------------- Flatten

Tensor Flatten::forward(const Tensor& x, LayerCtx* ctx, bool) {
    if (ctx) {
        Tensor shape({x.ndim()});
        for (int i = 0; i < x.ndim(); ++i) shape[i] = x.dim(i);
        ctx->saved = {std::move(shape)};
    }
    Tensor y = x;
    y.reshape({int(x.size())});
    return y;
}

Tensor Flatten::backward(const Tensor& dy, const LayerCtx& ctx) {
    const Tensor& shape = ctx.saved.at(0);
    std::vector<int> dims;
    for (int64_t i = 0; i < shape.size(); ++i) dims.push_back(int(shape[i]));
    Tensor dx = dy;
    dx.reshape(dims);
    return dx;
}

// ----------------------------------------------------------------- Linear

Linear::Linear(int in, int out)
    : w({out, in}), b({out}), gw({out, in}), gb({out}), in_(in), out_(out) {}

Tensor Linear::forward(const Tensor& x, LayerCtx* ctx, bool) {
    check_shape(x.ndim() == 1 && x.dim(0) == in_, "linear input");
    Tensor y({out_});
#pragma omp parallel for schedule(static)
    for (int o = 0; o < out_; ++o) {
        const real* wr = w.data() + int64_t(o) * in_;
        real acc = b[o];
        for (int i = 0; i < in_; ++i) acc += wr[i] * x[i];
        y[o] = acc;
    }
    if (ctx) ctx->saved = {save_copy(x)};
    return y;
}

Tensor Linear::backward(const Tensor& dy, const LayerCtx& ctx) {
    const Tensor& x = ctx.saved.at(0);
    Tensor dx({in_});
#pragma omp parallel for schedule(static)
    for (int o = 0; o < out_; ++o) {
        const real g = dy[o];
        real* gwr = gw.data() + int64_t(o) * in_;
        for (int i = 0; i < in_; ++i) gwr[i] += g * x[i];
        gb[o] += g;
    }
#pragma omp parallel for schedule(static)
    for (int i = 0; i < in_; ++i) {
        real acc = 0;
        for (int o = 0; o < out_; ++o) acc += w[int64_t(o) * in_ + i] * dy[o];
        dx[i] = acc;
    }
    return dx;
}

void Linear::visit(const std::string& prefix, const TensorVisitor& v) {
    v(prefix + ".w", w, &gw);
    v(prefix + ".b", b, &gb);
}

void Linear::init(Rng& rng) { kaiming_init(w, b, in_, rng); }

// ------------------------------------------------------------- Sequential

Layer* Sequential::add(std::string name, std::unique_ptr<Layer> layer) {
    layers_.emplace_back(std::move(name), std::move(layer));
    return layers_.back().second.get();
}

Tensor Sequential::forward(const Tensor& x, NetCtx* ctx, bool training) {
    if (ctx) ctx->resize(layers_.size());
    Tensor h = x;
    for (size_t i = 0; i < layers_.size(); ++i)
        h = layers_[i].second->forward(h, ctx ? &(*ctx)[i] : nullptr, training);
    return h;
}

Tensor Sequential::backward(const Tensor& dy, const NetCtx& ctx) {
    Tensor g = dy;
    for (size_t i = layers_.size(); i-- > 0;) g = layers_[i].second->backward(g, ctx[i]);
    return g;
}

void Sequential::visit(const std::string& prefix, const TensorVisitor& v) {
    for (auto& [name, layer] : layers_)
        layer->visit(prefix.empty() ? name : prefix + "." + name, v);
}

void Sequential::init(Rng& rng) {
    for (auto& [name, layer] : layers_) layer->init(rng);
}

}  // namespace artinp::nn
