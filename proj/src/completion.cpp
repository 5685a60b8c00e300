#include "artinp/completion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "artinp/poisson.hpp"

namespace artinp::completion {

namespace {

void check_mask(const Tensor& t, const GapMask& m, const char* who) {
    if (t.ndim() == 3) {
        if (t.dim(0) != 1 || t.dim(1) != m.h || t.dim(2) != m.w)
            throw std::invalid_argument(std::string(who) + ": image/mask shape mismatch");
    } else if (t.ndim() == 2) {
        if (t.dim(0) != m.h || t.dim(1) != m.w)
            throw std::invalid_argument(std::string(who) + ": image/mask shape mismatch");
    } else {
        throw std::invalid_argument(std::string(who) + ": expected a 2-D or (1,H,W) image");
    }
}

real clamp_prob(real p) { return std::clamp(p, kProbEps, real(1) - kProbEps); }

// Output size of one 5x5 stride-2 pad-2 convolution.
int half5(int n) { return (n + 4 - 5) / 2 + 1; }

}  // namespace

Tensor make_input(const SliceImage& ct_unit, const SliceImage& gapped_unit, const GapMask& m) {
    if (ct_unit.domain != Domain::UNIT01 || gapped_unit.domain != Domain::UNIT01)
        throw std::invalid_argument("make_input: slices must be UNIT01");
    if (ct_unit.h() != m.h || ct_unit.w() != m.w || gapped_unit.h() != m.h ||
        gapped_unit.w() != m.w)
        throw std::invalid_argument("make_input: slice/mask shape mismatch");
    Tensor x({3, m.h, m.w});
    const int64_t n = int64_t(m.h) * m.w;
    for (int64_t i = 0; i < n; ++i) {
        x[i] = ct_unit.pixels[i];
        x[n + i] = gapped_unit.pixels[i];
        x[2 * n + i] = real(m.mask[size_t(i)]);
    }
    return x;
}

Tensor composite(const Tensor& gen_out, const Tensor& gapped, const GapMask& m) {
    check_mask(gen_out, m, "composite");
    check_mask(gapped, m, "composite");
    Tensor out = gapped;
    const int64_t n = int64_t(m.h) * m.w;
    for (int64_t i = 0; i < n; ++i)
        if (m.mask[size_t(i)]) out[i] = gen_out[i];
    return out;
}

// ---- generator -------------------------------------------------------------

CompletionGenerator::CompletionGenerator(int base) : base_(base) {
    if (base < 2 || base % 2 != 0)
        throw std::invalid_argument("CompletionGenerator: base must be even and >= 2");
    const int b = base;
    auto conv = [&](const std::string& name, int in, int out, int k, int s, int p, int d = 1) {
        net_.emplace<nn::Conv2d>(name, in, out, k, s, p, d);
        net_.emplace<nn::ReLU>(name + "_relu");
    };
    conv("c1", 3, b, 5, 1, 2);
    conv("c2", b, 2 * b, 3, 2, 1);
    conv("c3", 2 * b, 2 * b, 3, 1, 1);
    conv("c4", 2 * b, 4 * b, 3, 2, 1);
    conv("c5", 4 * b, 4 * b, 3, 1, 1);
    conv("c6", 4 * b, 4 * b, 3, 1, 1);
    conv("d1", 4 * b, 4 * b, 3, 1, 2, 2);
    conv("d2", 4 * b, 4 * b, 3, 1, 4, 4);
    conv("d3", 4 * b, 4 * b, 3, 1, 8, 8);
    conv("d4", 4 * b, 4 * b, 3, 1, 16, 16);
    conv("c7", 4 * b, 4 * b, 3, 1, 1);
    conv("c8", 4 * b, 4 * b, 3, 1, 1);
    net_.emplace<nn::ConvTranspose2d>("u1", 4 * b, 2 * b, 4, 2, 1);
    net_.emplace<nn::ReLU>("u1_relu");
    conv("c9", 2 * b, 2 * b, 3, 1, 1);
    net_.emplace<nn::ConvTranspose2d>("u2", 2 * b, b, 4, 2, 1);
    net_.emplace<nn::ReLU>("u2_relu");
    conv("c10", b, b / 2, 3, 1, 1);
    net_.emplace<nn::Conv2d>("head", b / 2, 1, 3, 1, 1);
    net_.emplace<nn::Sigmoid>("head_sig");
}

Tensor CompletionGenerator::forward(const Tensor& x, nn::NetCtx* ctx, bool training) {
    if (x.ndim() != 3 || x.dim(0) != 3)
        throw std::invalid_argument("CompletionGenerator: input must be (3,H,W)");
    if (x.dim(1) % 4 != 0 || x.dim(2) % 4 != 0)
        throw std::invalid_argument("CompletionGenerator: input size must be divisible by 4");
    return net_.forward(x, ctx, training);
}

Tensor CompletionGenerator::backward(const Tensor& dy, const nn::NetCtx& ctx) {
    return net_.backward(dy, ctx);
}

void CompletionGenerator::visit(const std::string& prefix, const nn::TensorVisitor& v) {
    net_.visit(prefix, v);
}

// ---- discriminator ----------------------------------------------------------

CompletionDiscriminator::CompletionDiscriminator(int input_size, int local_size, int base)
    : input_size_(input_size), local_size_(local_size), base_(base) {
    if (input_size < 8 || local_size < 8 || local_size > input_size)
        throw std::invalid_argument("CompletionDiscriminator: bad input/local sizes");
    const int b = base;
    const int gch[6] = {b, 2 * b, 4 * b, 8 * b, 8 * b, 8 * b};
    int n = input_size, in = 1;
    for (int i = 0; i < 6; ++i) {
        global_.emplace<nn::Conv2d>("g" + std::to_string(i + 1), in, gch[i], 5, 2, 2);
        global_.emplace<nn::LeakyReLU>("g" + std::to_string(i + 1) + "_act");
        in = gch[i];
        n = half5(n);
    }
    global_.emplace<nn::Flatten>("g_flat");
    global_.emplace<nn::Linear>("g_fc", gch[5] * n * n, 1024);
    global_.emplace<nn::ReLU>("g_fc_act");

    const int lch[5] = {b, 2 * b, 4 * b, 8 * b, 8 * b};
    n = local_size;
    in = 1;
    for (int i = 0; i < 5; ++i) {
        local_.emplace<nn::Conv2d>("l" + std::to_string(i + 1), in, lch[i], 5, 2, 2);
        local_.emplace<nn::LeakyReLU>("l" + std::to_string(i + 1) + "_act");
        in = lch[i];
        n = half5(n);
    }
    local_.emplace<nn::Flatten>("l_flat");
    local_.emplace<nn::Linear>("l_fc", lch[4] * n * n, 1024);
    local_.emplace<nn::ReLU>("l_fc_act");

    head_.emplace<nn::Linear>("fc", 2048, 1);
    head_.emplace<nn::Sigmoid>("sig");
}

std::pair<int, int> CompletionDiscriminator::local_window(const GapMask& mask) const {
    if (mask.h != input_size_ || mask.w != input_size_)
        throw std::invalid_argument("CompletionDiscriminator: mask size mismatch");
    int64_t sy = 0, sx = 0, cnt = 0;
    for (int y = 0; y < mask.h; ++y)
        for (int x = 0; x < mask.w; ++x)
            if (mask.at(y, x)) {
                sy += y;
                sx += x;
                ++cnt;
            }
    int cy = input_size_ / 2, cx = input_size_ / 2;
    if (cnt > 0) {
        cy = int(std::llround(double(sy) / double(cnt)));
        cx = int(std::llround(double(sx) / double(cnt)));
    }
    const int top = std::clamp(cy - local_size_ / 2, 0, input_size_ - local_size_);
    const int left = std::clamp(cx - local_size_ / 2, 0, input_size_ - local_size_);
    return {top, left};
}

namespace {

Tensor extract_patch(const Tensor& img, int top, int left, int size) {
    Tensor p({1, size, size});
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) p.at(0, y, x) = img.at(0, top + y, left + x);
    return p;
}

}  // namespace

real CompletionDiscriminator::forward(const Tensor& img, const GapMask& mask, DiscCtx* ctx,
                                      bool training) {
    if (img.ndim() != 3 || img.dim(0) != 1 || img.dim(1) != input_size_ ||
        img.dim(2) != input_size_)
        throw std::invalid_argument("CompletionDiscriminator: input must be (1,S,S)");
    const auto [top, left] = local_window(mask);
    const Tensor patch = extract_patch(img, top, left, local_size_);
    Tensor g = global_.forward(img, ctx ? &ctx->global_ctx : nullptr, training);
    Tensor l = local_.forward(patch, ctx ? &ctx->local_ctx : nullptr, training);
    Tensor cat({2048});
    if (g.size() != 1024 || l.size() != 1024)
        throw std::logic_error("CompletionDiscriminator: branch feature size is not 1024");
    for (int i = 0; i < 1024; ++i) {
        cat[i] = g[i];
        cat[1024 + i] = l[i];
    }
    Tensor p = head_.forward(cat, ctx ? &ctx->head_ctx : nullptr, training);
    if (ctx) {
        ctx->top = top;
        ctx->left = left;
    }
    return p[0];
}

Tensor CompletionDiscriminator::backward(real dprob, const DiscCtx& ctx) {
    Tensor dp({1});
    dp[0] = dprob;
    const Tensor dcat = head_.backward(dp, ctx.head_ctx);
    Tensor dg({1024}), dl({1024});
    for (int i = 0; i < 1024; ++i) {
        dg[i] = dcat[i];
        dl[i] = dcat[1024 + i];
    }
    Tensor dimg = global_.backward(dg, ctx.global_ctx);
    const Tensor dpatch = local_.backward(dl, ctx.local_ctx);
    for (int y = 0; y < local_size_; ++y)
        for (int x = 0; x < local_size_; ++x)
            dimg.at(0, ctx.top + y, ctx.left + x) += dpatch.at(0, y, x);
    return dimg;
}

std::pair<Tensor, Tensor> CompletionDiscriminator::features(const Tensor& img,
                                                            const GapMask& mask) {
    const auto [top, left] = local_window(mask);
    const Tensor patch = extract_patch(img, top, left, local_size_);
    Tensor g = global_.forward(img, nullptr, false);
    Tensor l = local_.forward(patch, nullptr, false);
    return {std::move(g), std::move(l)};
}

void CompletionDiscriminator::visit(const std::string& prefix, const nn::TensorVisitor& v) {
    global_.visit(prefix + ".global", v);
    local_.visit(prefix + ".local", v);
    head_.visit(prefix + ".head", v);
}

void CompletionDiscriminator::init(Rng& rng) {
    global_.init(rng);
    local_.init(rng);
    head_.init(rng);
}

// ---- losses ------------------------------------------------------------------

namespace {

int64_t gap_count_or_throw(const Tensor& out, const Tensor& target, const GapMask& m,
                           const char* who) {
    check_mask(out, m, who);
    check_mask(target, m, who);
    const int64_t cnt = m.count();
    if (cnt == 0) throw std::invalid_argument(std::string(who) + ": no gap pixels");
    return cnt;
}

}  // namespace

real mse_loss(const Tensor& out, const Tensor& target, const GapMask& m) {
    const int64_t cnt = gap_count_or_throw(out, target, m, "mse_loss");
    real acc = 0;
    const int64_t n = int64_t(m.h) * m.w;
    for (int64_t i = 0; i < n; ++i)
        if (m.mask[size_t(i)]) {
            const real d = out[i] - target[i];
            acc += d * d;
        }
    return acc / real(cnt);
}

Tensor mse_loss_grad(const Tensor& out, const Tensor& target, const GapMask& m) {
    const int64_t cnt = gap_count_or_throw(out, target, m, "mse_loss");
    Tensor g(out.shape());
    const int64_t n = int64_t(m.h) * m.w;
    for (int64_t i = 0; i < n; ++i)
        if (m.mask[size_t(i)]) g[i] = 2.0 * (out[i] - target[i]) / real(cnt);
    return g;
}

real l1_loss(const Tensor& out, const Tensor& target, const GapMask& m) {
    const int64_t cnt = gap_count_or_throw(out, target, m, "l1_loss");
    real acc = 0;
    const int64_t n = int64_t(m.h) * m.w;
    for (int64_t i = 0; i < n; ++i)
        if (m.mask[size_t(i)]) acc += std::abs(out[i] - target[i]);
    return acc / real(cnt);
}

Tensor l1_loss_grad(const Tensor& out, const Tensor& target, const GapMask& m) {
    const int64_t cnt = gap_count_or_throw(out, target, m, "l1_loss");
    Tensor g(out.shape());
    const int64_t n = int64_t(m.h) * m.w;
    for (int64_t i = 0; i < n; ++i)
        if (m.mask[size_t(i)]) {
            const real d = out[i] - target[i];
            g[i] = (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) / real(cnt);
        }
    return g;
}

AdvLosses adv_losses(real d_real, real d_fake) {
    AdvLosses L;
    L.d_loss = -(std::log(clamp_prob(d_real)) + std::log(1.0 - clamp_prob(d_fake)));
    L.g_adv = -std::log(clamp_prob(d_fake));
    return L;
}

AdvGrads adv_grads(real d_real, real d_fake) {
    AdvGrads g;
    // Gradients vanish where the clamp is active, matching the clamped loss.
    if (d_real > kProbEps && d_real < 1.0 - kProbEps) g.dd_real = -1.0 / d_real;
    if (d_fake > kProbEps && d_fake < 1.0 - kProbEps) {
        g.dd_fake = 1.0 / (1.0 - d_fake);
        g.dg_fake = -1.0 / d_fake;
    }
    return g;
}

// ---- inference -----------------------------------------------------------------

SliceImage inpaint_slice(const SliceImage& gen_out, const SliceImage& gapped, const GapMask& m,
                         real blend_tol) {
    if (gen_out.domain != Domain::UNIT01 || gapped.domain != Domain::UNIT01)
        throw std::invalid_argument("inpaint_slice: slices must be UNIT01");
    check_mask(gen_out.pixels, m, "inpaint_slice");
    check_mask(gapped.pixels, m, "inpaint_slice");
    if (m.count() == 0) return gapped;

    // Border gap pixels sit on the Dirichlet frame and are not solved for;
    // give them generator content up front so the blend anchors to it
    // instead of to the constant fill value.
    SliceImage out = gapped;
    for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x)
            if (m.at(y, x) && (y == 0 || y == m.h - 1 || x == 0 || x == m.w - 1))
                out.pixels.at(y, x) = gen_out.pixels.at(y, x);

    poisson::BlendProblem prob;
    prob.source = &gen_out.pixels;
    prob.target = &out.pixels;
    prob.region = m.mask.data();
    prob.h = m.h;
    prob.w = m.w;
    poisson::BlendOptions opt;
    opt.tol = blend_tol;
    poisson::BlendResult res = poisson::blend(prob, opt);

    out.pixels = std::move(res.image);
    return out;
}

}  // namespace artinp::completion
