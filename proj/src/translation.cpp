#include "artinp/translation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace artinp::translation {

namespace {

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

int ilog2(int n) {
    int k = 0;
    while ((1 << (k + 1)) <= n) ++k;
    return k;
}

// Concatenate along channels: (c1,H,W) + (c2,H,W) -> (c1+c2,H,W).
Tensor cat_channels(const Tensor& a, const Tensor& b) {
    Tensor out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
    std::copy(a.data(), a.data() + a.size(), out.data());
    std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
    return out;
}

void split_channels(const Tensor& g, int c1, Tensor& da, Tensor& db) {
    da = Tensor({c1, g.dim(1), g.dim(2)});
    db = Tensor({g.dim(0) - c1, g.dim(1), g.dim(2)});
    std::copy(g.data(), g.data() + da.size(), da.data());
    std::copy(g.data() + da.size(), g.data() + g.size(), db.data());
}

}  // namespace

UNetGenerator::UNetGenerator(int input_size, int base, int in_ch, int out_ch, int depth)
    : input_size_(input_size), base_(base), in_ch_(in_ch), out_ch_(out_ch), depth_(depth) {
    if (depth_ < 0) {
        if (!is_pow2(input_size))
            throw std::invalid_argument("UNet: default depth needs a power-of-two input size");
        depth_ = ilog2(input_size);
    }
    if (depth_ < 2) throw std::invalid_argument("UNet: depth must be at least 2");
    if (input_size % (1 << depth_) != 0 || (input_size >> depth_) < 1)
        throw std::invalid_argument("UNet: input size not divisible by 2^depth");

    ech_.resize(size_t(depth_));
    for (int i = 0; i < depth_; ++i) ech_[size_t(i)] = std::min(base << i, base * 8);

    enc_.resize(size_t(depth_));
    enc_bn_.resize(size_t(depth_));
    int in = in_ch_;
    for (int i = 0; i < depth_; ++i) {
        enc_[size_t(i)] = std::make_unique<nn::Conv2d>(in, ech_[size_t(i)], 4, 2, 1);
        const bool use_bn = i != 0 && i != depth_ - 1;
        if (use_bn) enc_bn_[size_t(i)] = std::make_unique<nn::BatchNorm2d>(ech_[size_t(i)]);
        in = ech_[size_t(i)];
    }

    dec_.resize(size_t(depth_));
    dec_bn_.resize(size_t(depth_));
    for (int j = depth_ - 1; j >= 1; --j) {
        const int cin = (j == depth_ - 1) ? ech_[size_t(depth_ - 1)] : 2 * ech_[size_t(j)];
        const int cout = ech_[size_t(j - 1)];
        dec_[size_t(j)] = std::make_unique<nn::ConvTranspose2d>(cin, cout, 4, 2, 1);
        dec_bn_[size_t(j)] = std::make_unique<nn::BatchNorm2d>(cout);
    }
    dec_[0] = std::make_unique<nn::ConvTranspose2d>(2 * ech_[0], out_ch_, 4, 2, 1);

    // The mirror bookkeeping above must line up: each decoder stage consumes
    // its predecessor's output concatenated with the mirrored encoder skip.
    for (int j = depth_ - 1; j >= 0; --j) {
        const int expect = (j == depth_ - 1)
                               ? ech_[size_t(depth_ - 1)]
                               : dec_[size_t(j + 1)]->w.dim(1) + ech_[size_t(j)];
        if (dec_[size_t(j)]->w.dim(0) != expect)
            throw std::logic_error("UNet: encoder/decoder channel mismatch at level " +
                                   std::to_string(j));
    }
}

Tensor UNetGenerator::forward(const Tensor& x, UNetCtx* ctx, bool training) {
    if (x.ndim() != 3 || x.dim(0) != in_ch_ || x.dim(1) != input_size_ ||
        x.dim(2) != input_size_)
        throw std::invalid_argument("UNet: input must be (" + std::to_string(in_ch_) + "," +
                                    std::to_string(input_size_) + "," +
                                    std::to_string(input_size_) + ")");
    if (ctx) {
        ctx->enc_conv.assign(size_t(depth_), {});
        ctx->enc_bn.assign(size_t(depth_), {});
        ctx->enc_act.assign(size_t(depth_), {});
        ctx->dec_conv.assign(size_t(depth_), {});
        ctx->dec_bn.assign(size_t(depth_), {});
        ctx->dec_act.assign(size_t(depth_), {});
    }
    std::vector<Tensor> skips(static_cast<size_t>(depth_));
    Tensor h = x;
    for (int i = 0; i < depth_; ++i) {
        h = enc_[size_t(i)]->forward(h, ctx ? &ctx->enc_conv[size_t(i)] : nullptr, training);
        if (enc_bn_[size_t(i)])
            h = enc_bn_[size_t(i)]->forward(h, ctx ? &ctx->enc_bn[size_t(i)] : nullptr,
                                            training);
        h = lrelu_.forward(h, ctx ? &ctx->enc_act[size_t(i)] : nullptr, training);
        if (i < depth_ - 1) skips[size_t(i)] = h;
    }
    for (int j = depth_ - 1; j >= 1; --j) {
        h = dec_[size_t(j)]->forward(h, ctx ? &ctx->dec_conv[size_t(j)] : nullptr, training);
        h = dec_bn_[size_t(j)]->forward(h, ctx ? &ctx->dec_bn[size_t(j)] : nullptr, training);
        h = relu_.forward(h, ctx ? &ctx->dec_act[size_t(j)] : nullptr, training);
        h = cat_channels(h, skips[size_t(j - 1)]);
    }
    h = dec_[0]->forward(h, ctx ? &ctx->dec_conv[0] : nullptr, training);
    return tanh_.forward(h, ctx ? &ctx->dec_act[0] : nullptr, training);
}

Tensor UNetGenerator::backward(const Tensor& dy, const UNetCtx& ctx) {
    Tensor d = tanh_.backward(dy, ctx.dec_act[0]);
    d = dec_[0]->backward(d, ctx.dec_conv[0]);

    std::vector<Tensor> dskips(static_cast<size_t>(depth_));
    for (int j = 1; j <= depth_ - 1; ++j) {
        Tensor du, ds;
        split_channels(d, ech_[size_t(j - 1)], du, ds);
        dskips[size_t(j - 1)] = std::move(ds);
        du = relu_.backward(du, ctx.dec_act[size_t(j)]);
        du = dec_bn_[size_t(j)]->backward(du, ctx.dec_bn[size_t(j)]);
        d = dec_[size_t(j)]->backward(du, ctx.dec_conv[size_t(j)]);
    }
    for (int i = depth_ - 1; i >= 0; --i) {
        if (i < depth_ - 1)
            for (int64_t k = 0; k < d.size(); ++k) d[k] += dskips[size_t(i)][k];
        d = lrelu_.backward(d, ctx.enc_act[size_t(i)]);
        if (enc_bn_[size_t(i)]) d = enc_bn_[size_t(i)]->backward(d, ctx.enc_bn[size_t(i)]);
        d = enc_[size_t(i)]->backward(d, ctx.enc_conv[size_t(i)]);
    }
    return d;
}

void UNetGenerator::visit(const std::string& prefix, const nn::TensorVisitor& v) {
    for (int i = 0; i < depth_; ++i) {
        enc_[size_t(i)]->visit(prefix + ".enc" + std::to_string(i), v);
        if (enc_bn_[size_t(i)])
            enc_bn_[size_t(i)]->visit(prefix + ".enc" + std::to_string(i) + "_bn", v);
    }
    for (int j = 0; j < depth_; ++j) {
        dec_[size_t(j)]->visit(prefix + ".dec" + std::to_string(j), v);
        if (dec_bn_[size_t(j)])
            dec_bn_[size_t(j)]->visit(prefix + ".dec" + std::to_string(j) + "_bn", v);
    }
}

void UNetGenerator::init(Rng& rng) {
    for (auto& l : enc_) l->init(rng);
    for (auto& l : enc_bn_)
        if (l) l->init(rng);
    for (auto& l : dec_) l->init(rng);
    for (auto& l : dec_bn_)
        if (l) l->init(rng);
}

// ---- PatchGAN ----------------------------------------------------------------

PatchGAN::PatchGAN(int in_ch, int base) : in_ch_(in_ch) {
    const int b = base;
    net_.emplace<nn::Conv2d>("c1", in_ch, b, 4, 2, 1);
    net_.emplace<nn::LeakyReLU>("c1_act");
    net_.emplace<nn::Conv2d>("c2", b, 2 * b, 4, 2, 1);
    net_.emplace<nn::BatchNorm2d>("c2_bn", 2 * b);
    net_.emplace<nn::LeakyReLU>("c2_act");
    net_.emplace<nn::Conv2d>("c3", 2 * b, 4 * b, 4, 2, 1);
    net_.emplace<nn::BatchNorm2d>("c3_bn", 4 * b);
    net_.emplace<nn::LeakyReLU>("c3_act");
    net_.emplace<nn::Conv2d>("c4", 4 * b, 8 * b, 4, 1, 1);
    net_.emplace<nn::BatchNorm2d>("c4_bn", 8 * b);
    net_.emplace<nn::LeakyReLU>("c4_act");
    net_.emplace<nn::Conv2d>("c5", 8 * b, 1, 4, 1, 1);
}

Tensor PatchGAN::forward(const Tensor& x, nn::NetCtx* ctx, bool training) {
    if (x.ndim() != 3 || x.dim(0) != in_ch_)
        throw std::invalid_argument("PatchGAN: input must be (" + std::to_string(in_ch_) +
                                    ",S,S)");
    return net_.forward(x, ctx, training);
}

Tensor PatchGAN::backward(const Tensor& dy, const nn::NetCtx& ctx) {
    return net_.backward(dy, ctx);
}

void PatchGAN::visit(const std::string& prefix, const nn::TensorVisitor& v) {
    net_.visit(prefix, v);
}

// ---- losses --------------------------------------------------------------------

real bce_with_logits(const Tensor& scores, real label) {
    if (scores.empty()) throw std::invalid_argument("bce: empty score map");
    real acc = 0;
    for (int64_t i = 0; i < scores.size(); ++i) {
        const real x = scores[i];
        acc += std::max(x, real(0)) - x * label + std::log1p(std::exp(-std::abs(x)));
    }
    return acc / real(scores.size());
}

Tensor bce_with_logits_grad(const Tensor& scores, real label) {
    Tensor g(scores.shape());
    const real n = real(scores.size());
    for (int64_t i = 0; i < scores.size(); ++i) {
        const real s = 1.0 / (1.0 + std::exp(-scores[i]));
        g[i] = (s - label) / n;
    }
    return g;
}

real l1_mean(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("l1: shape mismatch");
    real acc = 0;
    for (int64_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
    return acc / real(a.size());
}

Tensor l1_mean_grad(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("l1: shape mismatch");
    Tensor g(a.shape());
    const real n = real(a.size());
    for (int64_t i = 0; i < a.size(); ++i) {
        const real d = a[i] - b[i];
        g[i] = (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) / n;
    }
    return g;
}

GenLoss translation_losses(const Tensor& fake_scores, const Tensor& gen_out,
                           const Tensor& target, real lambda) {
    GenLoss L;
    L.gan = bce_with_logits(fake_scores, 1.0);
    L.l1 = l1_mean(gen_out, target);
    L.total = L.gan + lambda * L.l1;
    return L;
}

// ---- inference ------------------------------------------------------------------

SliceImage translate_slice(UNetGenerator& net, const SliceImage& cbct_hu) {
    if (cbct_hu.domain != Domain::HU16)
        throw std::invalid_argument("translate_slice: input must be HU16");
    if (cbct_hu.h() != net.input_size() || cbct_hu.w() != net.input_size())
        throw std::invalid_argument(
            "translate_slice: slice is " + std::to_string(cbct_hu.h()) + "x" +
            std::to_string(cbct_hu.w()) + " but the generator expects " +
            std::to_string(net.input_size()) + "x" + std::to_string(net.input_size()));
    const SliceImage norm = normalize(cbct_hu, Domain::SIGNED11);
    Tensor x({1, norm.h(), norm.w()});
    std::copy(norm.pixels.data(), norm.pixels.data() + norm.pixels.size(), x.data());
    Tensor y = net.forward(x, nullptr, false);
    SliceImage out(cbct_hu.h(), cbct_hu.w(), Domain::SIGNED11, cbct_hu.plane, cbct_hu.index);
    std::copy(y.data(), y.data() + y.size(), out.pixels.data());
    return denormalize(out);
}

}  // namespace artinp::translation
