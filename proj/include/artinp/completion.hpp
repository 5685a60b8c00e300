#pragma once

#include <string>
#include <utility>

#include "artinp/gaps.hpp"
#include "artinp/nn.hpp"
#include "artinp/volume.hpp"

namespace artinp::completion {

// Weight of the adversarial term in the joint generator loss.
inline constexpr real kDefaultAlpha = 4e-4;
// Discriminator outputs are clamped to [eps, 1-eps] inside the log losses.
inline constexpr real kProbEps = 1e-7;

// Stacks the generator conditioning into one (3, H, W) tensor: planning CT,
// gapped CBCT (both UNIT01) and the gap mask as a 0/1 channel.
Tensor make_input(const SliceImage& ct_unit, const SliceImage& gapped_unit, const GapMask& m);

// Fake sample for the discriminator: generator output inside the gap, the
// (gapped) input everywhere else.
Tensor composite(const Tensor& gen_out, const Tensor& gapped, const GapMask& m);

// Gap-completion generator: an hourglass of stride-2 downsampling, a dilated
// mid-stack widening the receptive field past the widest gap, and stride-2
// transposed-conv upsampling back to full resolution. The head is a 3x3
// convolution under a sigmoid, so outputs live in [0,1] (UNIT01). Fully
// convolutional: any input size divisible by 4 works. `base` scales every
// channel width; 32 is the paper-scale default, tests and phantom runs use
// less.
class CompletionGenerator {
public:
    explicit CompletionGenerator(int base = 32);

    // x: (3, H, W) -> (1, H, W) in [0,1]
    Tensor forward(const Tensor& x, nn::NetCtx* ctx, bool training);
    Tensor backward(const Tensor& dy, const nn::NetCtx& ctx);

    void visit(const std::string& prefix, const nn::TensorVisitor& v);
    void visit(const nn::TensorVisitor& v) { visit("gen", v); }
    void init(Rng& rng) { net_.init(rng); }
    int base() const { return base_; }

private:
    int base_;
    nn::Sequential net_;
};

struct DiscCtx {
    nn::NetCtx global_ctx, local_ctx, head_ctx;
    int top = 0, left = 0;  // local patch window
};

// Two-branch discriminator. The global branch convolves the whole slice
// (6 stride-2 5x5 convs) into a 1024-vector; the local branch runs 5 of the
// same convs over a local_size x local_size patch centred on the gap into
// another 1024-vector. Their concatenation (2048) feeds a single linear unit
// under a sigmoid, so forward returns a probability in (0,1).
class CompletionDiscriminator {
public:
    CompletionDiscriminator(int input_size = 160, int local_size = 96, int base = 32);

    // img: (1, input_size, input_size); the mask only locates the local patch.
    real forward(const Tensor& img, const GapMask& mask, DiscCtx* ctx, bool training);
    // dprob = dL/d(probability); returns dL/d(img).
    Tensor backward(real dprob, const DiscCtx& ctx);

    // Branch outputs before the head, exposed so tests can probe the
    // advertised 1024 + 1024 -> 2048 shape contract.
    std::pair<Tensor, Tensor> features(const Tensor& img, const GapMask& mask);

    // Top-left corner of the patch window: gap centroid, clamped so the
    // window stays inside the slice. An empty mask falls back to the centre.
    std::pair<int, int> local_window(const GapMask& mask) const;

    void visit(const std::string& prefix, const nn::TensorVisitor& v);
    void visit(const nn::TensorVisitor& v) { visit("disc", v); }
    void init(Rng& rng);

    int input_size() const { return input_size_; }
    int local_size() const { return local_size_; }

private:
    int input_size_, local_size_, base_;
    nn::Sequential global_, local_, head_;
};

// ---- losses --------------------------------------------------------------
// Reconstruction: mean over gap pixels only. Throws when the mask is empty
// ("no gap pixels") because the mean is undefined there.
real mse_loss(const Tensor& out, const Tensor& target, const GapMask& m);
Tensor mse_loss_grad(const Tensor& out, const Tensor& target, const GapMask& m);
real l1_loss(const Tensor& out, const Tensor& target, const GapMask& m);
Tensor l1_loss_grad(const Tensor& out, const Tensor& target, const GapMask& m);

// Non-saturating GAN losses on scalar probabilities:
//   d_loss = -[log d_real + log(1 - d_fake)],  g_adv = -log d_fake.
struct AdvLosses {
    real d_loss = 0, g_adv = 0;
};
AdvLosses adv_losses(real d_real, real d_fake);

struct AdvGrads {
    real dd_real = 0;  // d(d_loss)/d(d_real)
    real dd_fake = 0;  // d(d_loss)/d(d_fake)
    real dg_fake = 0;  // d(g_adv)/d(d_fake)
};
AdvGrads adv_grads(real d_real, real d_fake);

inline real combined_loss(real recon, real adv, real alpha) { return recon + alpha * adv; }

// ---- inference ------------------------------------------------------------
// Grafts the generator's gap content onto the gapped slice with a seamless
// (gradient-domain) blend. Gap pixels on the slice border, where the blend
// has no interior, take the generator output directly; pixels outside the
// gap are returned bit-exactly. An empty mask returns `gapped` unchanged.
SliceImage inpaint_slice(const SliceImage& gen_out, const SliceImage& gapped, const GapMask& m,
                         real blend_tol = 1e-6);

}  // namespace artinp::completion
