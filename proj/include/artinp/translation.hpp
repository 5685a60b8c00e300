#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "artinp/nn.hpp"
#include "artinp/volume.hpp"

namespace artinp::translation {

inline constexpr real kDefaultLambda = 100.0;

struct UNetCtx {
    std::vector<nn::LayerCtx> enc_conv, enc_bn, enc_act;
    std::vector<nn::LayerCtx> dec_conv, dec_bn, dec_act;  // index 0 is the output head
};

// Encoder-decoder with skip connections. Depth defaults to log2(input_size),
// so a 256 slice funnels down to a 1x1 bottleneck. Every stage is a 4x4
// stride-2 convolution (LeakyReLU 0.2 on the way down, ReLU on the way up)
// with batch normalization everywhere except the first encoder stage, the
// bottleneck (1x1 spatial statistics are degenerate at batch size 1) and the
// tanh output head. Decoder outputs are concatenated with the mirrored
// encoder feature; channel bookkeeping is re-checked at construction.
class UNetGenerator {
public:
    UNetGenerator(int input_size, int base = 64, int in_ch = 1, int out_ch = 1, int depth = -1);

    // x: (in_ch, S, S) -> (out_ch, S, S) in [-1, 1]
    Tensor forward(const Tensor& x, UNetCtx* ctx, bool training);
    Tensor backward(const Tensor& dy, const UNetCtx& ctx);

    void visit(const std::string& prefix, const nn::TensorVisitor& v);
    void visit(const nn::TensorVisitor& v) { visit("unet", v); }
    void init(Rng& rng);

    int input_size() const { return input_size_; }
    int depth() const { return depth_; }
    int bottleneck_size() const { return input_size_ >> depth_; }

private:
    int input_size_, base_, in_ch_, out_ch_, depth_;
    std::vector<int> ech_;  // encoder output channels per level
    std::vector<std::unique_ptr<nn::Conv2d>> enc_;
    std::vector<std::unique_ptr<nn::BatchNorm2d>> enc_bn_;          // null where skipped
    std::vector<std::unique_ptr<nn::ConvTranspose2d>> dec_;         // [0] is the head
    std::vector<std::unique_ptr<nn::BatchNorm2d>> dec_bn_;          // null for the head
    nn::LeakyReLU lrelu_{0.2};
    nn::ReLU relu_;
    nn::Tanh tanh_;
};

// 70x70 patch discriminator: C64-C128-C256 at stride 2, C512 and the 1-channel
// head at stride 1, batch norm on all but the first and last. Returns raw
// scores (logits), one per overlapping 70x70 receptive field; a 256 input
// yields a 30x30 map.
class PatchGAN {
public:
    explicit PatchGAN(int in_ch = 2, int base = 64);

    Tensor forward(const Tensor& x, nn::NetCtx* ctx, bool training);
    Tensor backward(const Tensor& dy, const nn::NetCtx& ctx);

    void visit(const std::string& prefix, const nn::TensorVisitor& v);
    void visit(const nn::TensorVisitor& v) { visit("patchgan", v); }
    void init(Rng& rng) { net_.init(rng); }

    int in_channels() const { return in_ch_; }
    // Inclusive input-pixel interval covered by output index o along either
    // axis (before clipping to the image): stride 8, size 70.
    static std::pair<int, int> receptive_field(int o) { return {8 * o - 23, 8 * o + 46}; }

private:
    int in_ch_;
    nn::Sequential net_;
};

// ---- losses ---------------------------------------------------------------
// Mean binary cross-entropy between a score map (logits) and a constant
// label, in the numerically stable log1p(exp) form.
real bce_with_logits(const Tensor& scores, real label);
Tensor bce_with_logits_grad(const Tensor& scores, real label);

real l1_mean(const Tensor& a, const Tensor& b);
Tensor l1_mean_grad(const Tensor& a, const Tensor& b);

struct GenLoss {
    real gan = 0, l1 = 0, total = 0;
};
// total = BCE(fake scores, 1) + lambda * L1(gen_out, target)
GenLoss translation_losses(const Tensor& fake_scores, const Tensor& gen_out,
                           const Tensor& target, real lambda = kDefaultLambda);

// ---- inference --------------------------------------------------------------
// HU16 slice -> SIGNED11 -> generator (eval) -> HU16. Throws when the slice
// does not match the generator's input size.
SliceImage translate_slice(UNetGenerator& net, const SliceImage& cbct_hu);

}  // namespace artinp::translation
