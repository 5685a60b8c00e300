// Acceptance gate: every release-blocking guarantee of the library, checked
// end to end with self-contained oracles. Each criterion prints exactly one
// [PASS]/[FAIL] line; the exit code is the number of failed criteria.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <json.hpp>

#include "artinp/completion.hpp"
#include "artinp/gaps.hpp"
#include "artinp/metrics.hpp"
#include "artinp/nifti.hpp"
#include "artinp/phantom.hpp"
#include "artinp/pipeline.hpp"
#include "artinp/poisson.hpp"
#include "artinp/rng.hpp"
#include "artinp/train.hpp"
#include "artinp/translation.hpp"
#include "artinp/volume.hpp"

#ifndef ACCEPTANCE_ARTINP_BIN
#define ACCEPTANCE_ARTINP_BIN "artinp"
#endif

namespace {

using namespace artinp;
namespace fs = std::filesystem;
using nlohmann::json;

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void req(bool cond, const std::string& msg) {
    if (!cond) throw Failure(msg);
}

void req_close(real got, real want, real tol, const std::string& what) {
    const real err = std::abs(got - want);
    if (!(err <= tol * std::max<real>(1, std::abs(want))))
        throw Failure(what + ": got " + std::to_string(got) + ", want " + std::to_string(want) +
                      " (err " + std::to_string(err) + ")");
}

fs::path work_dir(const char* leaf) {
    const fs::path p = fs::temp_directory_path() / "artinp_acceptance" / leaf;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// ---- criterion 1: masked metric oracles -----------------------------------------

real naive_mae_pct(const Tensor& a, const Tensor& b, const BodyMask& m, real range) {
    real sum = 0;
    int64_t n = 0;
    for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x)
            if (m.at(y, x)) {
                sum += std::abs(a.at(y, x) - b.at(y, x));
                ++n;
            }
    return 100.0 * sum / (real(n) * range);
}

real naive_psnr_db(const Tensor& a, const Tensor& b, const BodyMask& m, real i_max) {
    real sum = 0;
    int64_t n = 0;
    for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x)
            if (m.at(y, x)) {
                const real d = a.at(y, x) - b.at(y, x);
                sum += d * d;
                ++n;
            }
    const real mse = sum / real(n);
    if (mse == 0) return metrics::kPsnrCapDb;
    return 10.0 * std::log10(i_max * i_max / mse);
}

real naive_ssim(const Tensor& a, const Tensor& b, const BodyMask& m, real L) {
    constexpr int W = 11, R = W / 2;
    real win[W * W];
    real wsum = 0;
    for (int i = 0; i < W; ++i)
        for (int j = 0; j < W; ++j) {
            const double dy = i - R, dx = j - R;
            win[i * W + j] = std::exp(-(dy * dy + dx * dx) / (2 * 1.5 * 1.5));
            wsum += win[i * W + j];
        }
    for (real& w : win) w /= wsum;
    const real c1 = (0.01 * L) * (0.01 * L), c2 = (0.03 * L) * (0.03 * L);

    real total = 0;
    int64_t windows = 0;
    for (int y = R; y < m.h - R; ++y)
        for (int x = R; x < m.w - R; ++x) {
            if (!m.at(y, x)) continue;
            real m1 = 0, m2 = 0, s11 = 0, s22 = 0, s12 = 0;
            for (int i = 0; i < W; ++i)
                for (int j = 0; j < W; ++j) {
                    const real wt = win[i * W + j];
                    const real v1 = a.at(y + i - R, x + j - R);
                    const real v2 = b.at(y + i - R, x + j - R);
                    m1 += wt * v1;
                    m2 += wt * v2;
                    s11 += wt * v1 * v1;
                    s22 += wt * v2 * v2;
                    s12 += wt * v1 * v2;
                }
            const real var1 = s11 - m1 * m1, var2 = s22 - m2 * m2, cov = s12 - m1 * m2;
            total += ((2 * m1 * m2 + c1) * (2 * cov + c2)) /
                     ((m1 * m1 + m2 * m2 + c1) * (var1 + var2 + c2));
            ++windows;
        }
    req(windows > 0, "naive ssim: no full window");
    return total / real(windows);
}

void criterion_metric_oracles() {
    const real L = kHuRange;
    Rng rng = make_rng(1001);
    for (int t = 0; t < 100; ++t) {
        const int S = 16;
        Tensor a({S, S}), b({S, S});
        fill_uniform(a, rng, 0, L);
        fill_uniform(b, rng, 0, L);
        BodyMask m;
        m.h = S;
        m.w = S;
        m.mask.assign(S * S, 0);
        for (auto& v : m.mask) v = rand_int(rng, 0, 99) < 80 ? 1 : 0;
        m.mask[8 * S + 8] = 1;  // keep at least one full 11x11 window

        req_close(metrics::mae_pct(a, b, m, L), naive_mae_pct(a, b, m, L), 1e-9, "mae oracle");
        req_close(metrics::psnr_db(a, b, m, L), naive_psnr_db(a, b, m, L), 1e-9, "psnr oracle");
        req_close(metrics::ssim(a, b, m, L), naive_ssim(a, b, m, L), 1e-9, "ssim oracle");
    }

    // closed-form spot values
    const int S = 16;
    Tensor a({S, S}), b({S, S});
    BodyMask m;
    m.h = S;
    m.w = S;
    m.mask.assign(S * S, 1);
    for (int64_t i = 0; i < a.size(); ++i) a[i] = 1000.0;
    for (int64_t i = 0; i < b.size(); ++i) b[i] = 1000.0 + L / 10.0;
    req_close(metrics::psnr_db(a, b, m, L), 20.0, 1e-9, "psnr spot value");
    for (int64_t i = 0; i < b.size(); ++i) b[i] = 1000.0 + 0.01 * L;
    req_close(metrics::mae_pct(a, b, m, L), 1.0, 1e-9, "mae spot value");
}

// ---- criterion 2: Poisson blend vs dense direct solve ---------------------------

std::vector<real> dense_solve(std::vector<std::vector<real>> A, std::vector<real> b) {
    const size_t n = b.size();
    for (size_t c = 0; c < n; ++c) {
        size_t piv = c;
        for (size_t r = c + 1; r < n; ++r)
            if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
        std::swap(A[c], A[piv]);
        std::swap(b[c], b[piv]);
        req(std::abs(A[c][c]) > 1e-12, "dense solve: singular system");
        for (size_t r = c + 1; r < n; ++r) {
            const real f = A[r][c] / A[c][c];
            if (f == 0) continue;
            for (size_t k = c; k < n; ++k) A[r][k] -= f * A[c][k];
            b[r] -= f * b[c];
        }
    }
    std::vector<real> x(n);
    for (size_t i = n; i-- > 0;) {
        real s = b[i];
        for (size_t k = i + 1; k < n; ++k) s -= A[i][k] * x[k];
        x[i] = s / A[i][i];
    }
    return x;
}

void criterion_poisson_blend() {
    Rng rng = make_rng(2002);
    const int S = 12;
    for (int t = 0; t < 50; ++t) {
        Tensor src({S, S}), tgt({S, S});
        fill_uniform(src, rng, 0, 1);
        fill_uniform(tgt, rng, 0, 1);
        std::vector<uint8_t> region(S * S, 0);
        for (int y = 1; y < S - 1; ++y)
            for (int x = 1; x < S - 1; ++x) region[y * S + x] = rand_int(rng, 0, 99) < 35;
        region[6 * S + 6] = 1;

        poisson::BlendProblem p;
        p.source = &src;
        p.target = &tgt;
        p.region = region.data();
        p.h = S;
        p.w = S;
        poisson::BlendOptions opt;
        opt.tol = 1e-12;
        const poisson::BlendResult res = poisson::blend(p, opt);
        req(res.converged, "blend did not converge");

        // dense oracle over the effective interior region
        const std::vector<uint8_t> omega = poisson::interior_region(p);
        std::vector<int> idx(S * S, -1);
        int n = 0;
        for (int i = 0; i < S * S; ++i)
            if (omega[i]) idx[i] = n++;
        req(n > 0, "empty effective region");
        std::vector<std::vector<real>> A(n, std::vector<real>(n, 0));
        std::vector<real> bvec(n, 0);
        const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
        for (int y = 0; y < S; ++y)
            for (int x = 0; x < S; ++x) {
                const int q = idx[y * S + x];
                if (q < 0) continue;
                A[q][q] = 4;
                real rhs = 4 * src.at(y, x);
                for (int k = 0; k < 4; ++k) {
                    const int yy = y + dy[k], xx = x + dx[k];
                    rhs -= src.at(yy, xx);
                    if (idx[yy * S + xx] >= 0)
                        A[q][idx[yy * S + xx]] = -1;
                    else
                        rhs += tgt.at(yy, xx);
                }
                bvec[q] = rhs;
            }
        const std::vector<real> f = dense_solve(A, bvec);
        for (int i = 0; i < S * S; ++i) {
            if (idx[i] >= 0)
                req(std::abs(res.image[i] - f[size_t(idx[i])]) <= 1e-8,
                    "iterative vs dense solve mismatch");
            else
                req(res.image[i] == tgt[i], "outside-region pixel modified");
        }
    }

    // identity and constant-offset blends
    Tensor tgt({S, S});
    fill_uniform(tgt, rng, 0, 1);
    std::vector<uint8_t> box(S * S, 0);
    for (int y = 3; y < 9; ++y)
        for (int x = 4; x < 8; ++x) box[y * S + x] = 1;
    poisson::BlendProblem p;
    p.target = &tgt;
    p.region = box.data();
    p.h = S;
    p.w = S;
    poisson::BlendOptions tight;
    tight.tol = 1e-10;

    Tensor same = tgt;
    p.source = &same;
    const auto rid = poisson::blend(p, tight);
    for (int i = 0; i < S * S; ++i)
        req(std::abs(rid.image[i] - tgt[i]) <= 1e-6, "identity blend not exact");

    Tensor offset = tgt;
    for (int64_t i = 0; i < offset.size(); ++i) offset[i] += 0.25;
    p.source = &offset;
    const auto roff = poisson::blend(p, tight);
    for (int i = 0; i < S * S; ++i)
        req(std::abs(roff.image[i] - tgt[i]) <= 1e-6, "constant-offset blend not removed");
}

// ---- criterion 3: gradient checks ------------------------------------------------

bool grads_close(real fd, real an) {
    return std::abs(fd - an) <= 1e-6 + 1e-3 * std::max(std::abs(fd), std::abs(an));
}

template <typename Net, typename LossFn>
void probe_gradients(Net& net, const LossFn& loss, int n_probe, uint64_t seed,
                     const std::string& tag) {
    auto tensors = nn::collect_tensors(net);
    std::vector<nn::NamedTensor*> trainable;
    for (auto& t : tensors)
        if (t.grad) trainable.push_back(&t);
    req(!trainable.empty(), tag + ": no trainable parameters");
    Rng rng = make_rng(seed);
    for (int pidx = 0; pidx < n_probe; ++pidx) {
        auto& nt = *trainable[size_t(rand_int(rng, 0, int(trainable.size()) - 1))];
        const int64_t i = rand_int(rng, 0, int(nt.value->size() - 1));
        const real orig = (*nt.value)[i];
        const real an = (*nt.grad)[i];
        bool ok = false;
        real fd = 0;
        // a bias step can push a whole feature map across a ReLU kink, so try a
        // few widths; a wrong analytic gradient fails at every width
        for (const real h : {1e-7, 3e-7, 1e-6}) {
            (*nt.value)[i] = orig + h;
            const real lp = loss();
            (*nt.value)[i] = orig - h;
            const real lm = loss();
            (*nt.value)[i] = orig;
            fd = (lp - lm) / (2 * h);
            if (grads_close(fd, an)) {
                ok = true;
                break;
            }
        }
        req(ok, tag + ": gradient mismatch at " + nt.name + "[" + std::to_string(i) +
                    "]: fd " + std::to_string(fd) + " vs analytic " + std::to_string(an));
    }
}

void criterion_gradient_checks() {
    // miniature completion generator through reconstruction + adversarial loss
    {
        const int S = 16;
        completion::CompletionGenerator gen(2);
        completion::CompletionDiscriminator disc(S, 8, 2);
        Rng rng = make_rng(3001);
        gen.init(rng);
        disc.init(rng);

        SliceImage ct(S, S, Domain::UNIT01, Plane::Sagittal, 0);
        SliceImage truth = ct;
        fill_uniform(ct.pixels, rng, 0.05, 0.95);
        fill_uniform(truth.pixels, rng, 0.05, 0.95);
        GapSpec spec;
        spec.x_start = 6;
        spec.width = 4;
        const GapMask m = gap_mask(S, S, spec);
        SliceImage gapped = truth;
        for (int64_t i = 0; i < gapped.pixels.size(); ++i)
            if (m.mask[size_t(i)]) gapped.pixels[i] = 0.25;
        const Tensor x = completion::make_input(ct, gapped, m);
        const real alpha = completion::kDefaultAlpha;

        const auto full_loss = [&]() {
            const Tensor y = gen.forward(x, nullptr, true);
            const real recon = completion::mse_loss(y, truth.pixels, m);
            Tensor fake = completion::composite(y, gapped.pixels, m);
            fake.reshape({1, S, S});
            const real p = disc.forward(fake, m, nullptr, true);
            return completion::combined_loss(recon, completion::adv_losses(0.5, p).g_adv, alpha);
        };

        nn::NetCtx gctx;
        const Tensor y = gen.forward(x, &gctx, true);
        Tensor fake = completion::composite(y, gapped.pixels, m);
        fake.reshape({1, S, S});
        completion::DiscCtx dctx;
        const real p = disc.forward(fake, m, &dctx, true);
        const Tensor dfake = disc.backward(alpha * completion::adv_grads(0.5, p).dg_fake, dctx);
        Tensor dy = completion::mse_loss_grad(y, truth.pixels, m);
        for (int64_t i = 0; i < dy.size(); ++i)
            if (m.mask[size_t(i)]) dy[i] += dfake[i];
        nn::zero_grads(gen);
        gen.backward(dy, gctx);

        probe_gradients(gen, full_loss, 120, 3002, "completion generator");
    }

    // miniature UNet through GAN + lambda*L1
    {
        const int S = 32;
        translation::UNetGenerator gen(S, 4, 1, 1, 3);
        translation::PatchGAN disc(2, 4);
        Rng rng = make_rng(3003);
        gen.init(rng);
        disc.init(rng);

        Tensor x({1, S, S}), target({1, S, S});
        fill_uniform(x, rng, -0.9, 0.9);
        fill_uniform(target, rng, -0.9, 0.9);
        const real lambda = 100.0;

        const auto cat = [&](const Tensor& y) {
            Tensor c({2, S, S});
            std::copy(x.data(), x.data() + x.size(), c.data());
            std::copy(y.data(), y.data() + y.size(), c.data() + x.size());
            return c;
        };
        const auto g_loss = [&]() {
            const Tensor y = gen.forward(x, nullptr, true);
            const Tensor s = disc.forward(cat(y), nullptr, true);
            return translation::translation_losses(s, y, target, lambda).total;
        };

        translation::UNetCtx gctx;
        const Tensor y = gen.forward(x, &gctx, true);
        nn::NetCtx dctx;
        const Tensor s = disc.forward(cat(y), &dctx, true);
        const Tensor ds = translation::bce_with_logits_grad(s, 1.0);
        const Tensor dcat = disc.backward(ds, dctx);
        Tensor dy({1, S, S});
        std::copy(dcat.data() + x.size(), dcat.data() + 2 * x.size(), dy.data());
        const Tensor dl1 = translation::l1_mean_grad(y, target);
        for (int64_t i = 0; i < dy.size(); ++i) dy[i] += lambda * dl1[i];
        nn::zero_grads(gen);
        gen.backward(dy, gctx);

        probe_gradients(gen, g_loss, 120, 3004, "unet generator");
    }
}

// ---- criterion 4: architecture invariants ----------------------------------------

void criterion_architecture() {
    Rng rng = make_rng(4001);

    {  // completion generator at full slice size
        const int S = 160;
        completion::CompletionGenerator gen(8);
        gen.init(rng);
        SliceImage ct(S, S, Domain::UNIT01, Plane::Sagittal, 0);
        SliceImage cbct = ct;
        fill_uniform(ct.pixels, rng, 0, 1);
        fill_uniform(cbct.pixels, rng, 0, 1);
        GapSpec spec;
        spec.x_start = 40;
        spec.width = 60;
        auto [gapped, m] = apply_gap(cbct, spec, 0.25);
        const Tensor x = completion::make_input(ct, gapped, m);
        req(x.shape() == std::vector<int>({3, S, S}), "completion input is not 3x160x160");
        const Tensor y = gen.forward(x, nullptr, false);
        req(y.shape() == std::vector<int>({1, S, S}), "completion output is not 1x160x160");
        for (int64_t i = 0; i < y.size(); ++i)
            req(y[i] >= 0.0 && y[i] <= 1.0, "completion output outside [0,1]");

        completion::CompletionDiscriminator disc(S, 96, 8);
        disc.init(rng);
        Tensor comp = completion::composite(y, gapped.pixels, m);
        comp.reshape({1, S, S});
        const auto [gf, lf] = disc.features(comp, m);
        req(gf.size() == 1024, "global feature vector is not 1024-d");
        req(lf.size() == 1024, "local feature vector is not 1024-d");
        const real p = disc.forward(comp, m, nullptr, false);
        req(p > 0.0 && p < 1.0, "discriminator head not in (0,1)");
    }

    {  // UNet at full slice size
        const int S = 256;
        translation::UNetGenerator gen(S, 8);
        gen.init(rng);
        req(gen.depth() == 8, "unet depth at 256 px is not 8");
        req(gen.bottleneck_size() == 1, "unet bottleneck is not 1x1");
        Tensor x({1, S, S});
        fill_uniform(x, rng, -1, 1);
        const Tensor y = gen.forward(x, nullptr, false);
        req(y.shape() == std::vector<int>({1, S, S}), "unet output is not 1x256x256");
        for (int64_t i = 0; i < y.size(); ++i)
            req(y[i] >= -1.0 && y[i] <= 1.0, "unet output outside [-1,1]");
    }

    {  // PatchGAN score map geometry and locality
        const int S = 256;
        translation::PatchGAN disc(2, 8);
        disc.init(rng);
        Tensor x({2, S, S});
        fill_uniform(x, rng, -1, 1);
        const Tensor s0 = disc.forward(x, nullptr, false);
        req(s0.shape() == std::vector<int>({1, 30, 30}), "patchgan score map is not 30x30");

        const auto [lo0, hi0] = translation::PatchGAN::receptive_field(0);
        req(hi0 - lo0 + 1 == 70, "receptive field is not 70 px wide");

        const auto poke = [&](int py, int px) {
            Tensor xp = x;
            for (int c = 0; c < 2; ++c) xp[(int64_t(c) * S + py) * S + px] += 0.37;
            return disc.forward(xp, nullptr, false);
        };
        const auto at = [](const Tensor& s, int i, int j) { return s[int64_t(i) * 30 + j]; };

        // inside the window of output (0,0): the last covered pixel is hi0
        const Tensor s_in = poke(hi0, hi0);
        req(at(s_in, 0, 0) != at(s0, 0, 0), "in-window perturbation did not reach score (0,0)");
        // one pixel past the window: bitwise identical score
        const Tensor s_out = poke(hi0 + 1, hi0 + 1);
        req(at(s_out, 0, 0) == at(s0, 0, 0), "out-of-window perturbation leaked into (0,0)");
        // a far pixel influences the opposite corner but not (0,0)
        const Tensor s_far = poke(S - 10, S - 10);
        req(at(s_far, 0, 0) == at(s0, 0, 0), "distant perturbation leaked into (0,0)");
        req(at(s_far, 29, 29) != at(s0, 29, 29), "distant perturbation missed score (29,29)");
    }
}

// ---- criterion 5: gap synthesis statistics ---------------------------------------

void criterion_gap_statistics() {
    Rng rng = make_rng(5001);
    const int n = 10000;
    std::vector<int64_t> counts(kGapWidthMax - kGapWidthMin + 1, 0);
    for (int t = 0; t < n; ++t) {
        const GapSpec s = sample_gap(160, rng);
        req(s.width >= kGapWidthMin && s.width <= kGapWidthMax, "width outside [48,96]");
        req(s.x_start >= 0 && s.x_start + s.width <= 160, "strip exceeds image bounds");
        counts[size_t(s.width - kGapWidthMin)]++;
    }
    const real expect = real(n) / real(counts.size());
    real chi2 = 0;
    for (const int64_t c : counts) {
        req(c > 0, "a width in [48,96] was never drawn");
        chi2 += (real(c) - expect) * (real(c) - expect) / expect;
    }
    // chi-square critical value at p = 0.01 with 48 degrees of freedom
    req(chi2 < 73.6826, "width distribution fails the uniformity test (chi2 " +
                            std::to_string(chi2) + ")");

    // patient-wise mode: one strip shared by every sagittal slice of a patient
    VolumeHU v(64, 64, 64);
    Rng vr = make_rng(5002);
    for (auto& h : v.data) h = int16_t(rand_int(vr, -900, 900));
    const PatientGap pg = patient_gap(v, 5003, -512, 0, -1, GapWidths{8, 16});
    req(pg.spec.scope == GapScope::PerPatient, "patient gap is not patient-scoped");
    int64_t in_gap = 0;
    for (int z = 0; z < v.nz; ++z)
        for (int y = 0; y < v.ny; ++y) {
            const uint8_t m0 = pg.mask[(size_t(z) * v.ny + y) * v.nx + 0];
            for (int x = 0; x < v.nx; ++x) {
                const uint8_t mx = pg.mask[(size_t(z) * v.ny + y) * v.nx + x];
                req(mx == m0, "gap mask differs between sagittal slices");
                if (mx) {
                    req(pg.gapped.at(x, y, z) == -512, "gap voxel does not hold the fill value");
                    ++in_gap;
                } else {
                    req(pg.gapped.at(x, y, z) == v.at(x, y, z), "non-gap voxel modified");
                }
            }
        }
    req(in_gap > 0, "patient gap is empty");

    const PatientGap pg2 = patient_gap(v, 5003, -512, 0, -1, GapWidths{8, 16});
    req(pg2.spec.x_start == pg.spec.x_start && pg2.spec.width == pg.spec.width,
        "patient gap is not deterministic per seed");
}

// ---- criterion 6: three-phase training contract ----------------------------------

struct PhantomSlices {
    train::PairedSlices train, val;
    std::vector<phantom::PhantomPair> held_out;  // test patients, full volumes
};

PhantomSlices phantom_sagittal_dataset() {
    phantom::PhantomSpec spec;
    spec.nx = spec.ny = spec.nz = 64;
    spec.n_patients = 8;
    spec.seed = 60001;
    PhantomSlices out;
    for (int i = 0; i < spec.n_patients; ++i) {
        phantom::PhantomPair p = phantom::generate_patient(spec, i);
        train::PairedSlices* dst = i < 6 ? &out.train : (i == 6 ? &out.val : nullptr);
        if (!dst) {
            out.held_out.push_back(std::move(p));
            continue;
        }
        for (int x = 0; x < p.ct.nx; ++x) {
            dst->cbct.push_back(normalize(sagittal_slice(p.cbct, x), Domain::UNIT01));
            dst->ct.push_back(normalize(sagittal_slice(p.ct, x), Domain::UNIT01));
            dst->patient.push_back(p.ct.patient_id);
        }
    }
    return out;
}

void criterion_three_phase_training() {
    const auto data = phantom_sagittal_dataset();
    const auto dir = work_dir("three_phase");

    train::CompletionTrainConfig cfg;
    cfg.phase1_iters = 700;
    cfg.phase2_iters = 100;
    cfg.phase3_iters = 400;
    cfg.checkpoint_every = 250;
    cfg.input_size = 64;
    cfg.local_size = 32;
    cfg.base = 8;
    cfg.gap = {8, 16};
    cfg.max_val_slices = 16;
    cfg.seed = 61;
    cfg.out_dir = dir.string();

    const auto rep = train::train_completion(data.train, data.val, cfg);
    const int64_t total = cfg.phase1_iters + cfg.phase2_iters + cfg.phase3_iters;
    req(rep.total_iters == total, "training did not run the configured iterations");

    // phase 2 leaves the generator untouched
    req(rep.gen_hash_phase2_start != 0, "phase-2 start hash missing");
    req(rep.gen_hash_phase2_start == rep.gen_hash_phase2_end,
        "generator parameters changed during phase 2");

    // checkpoints at the configured cadence (plus the final iteration)
    std::vector<int64_t> expected;
    for (int64_t t = cfg.checkpoint_every; t <= total; t += cfg.checkpoint_every)
        expected.push_back(t);
    if (expected.empty() || expected.back() != total) expected.push_back(total);
    req(rep.checkpoints.size() == expected.size(), "checkpoint cadence mismatch");
    for (size_t i = 0; i < expected.size(); ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "completion_iter%08lld.ckpt",
                      static_cast<long long>(expected[i]));
        req(fs::path(rep.checkpoints[i]).filename() == buf,
            std::string("unexpected checkpoint name, want ") + buf);
        req(fs::exists(rep.checkpoints[i]), "checkpoint file missing");
    }

    // validation reconstruction loss decreases across phase 1
    real v_start = -1, v_p1 = -1;
    for (const auto& v : rep.val_history) {
        if (v.iteration == 0) v_start = v.value;
        if (v.iteration == cfg.phase1_iters) v_p1 = v.value;
    }
    req(v_start >= 0 && v_p1 >= 0, "validation history misses the phase-1 endpoints");
    req(v_p1 < v_start, "validation loss did not decrease over phase 1 (" +
                            std::to_string(v_start) + " -> " + std::to_string(v_p1) + ")");

    // end to end on a held-out patient: inpainting beats the constant fill
    auto gen = train::load_completion_generator(rep.best_checkpoint);
    const phantom::PhantomPair& held = data.held_out.at(0);
    Rng grng = make_rng(62);
    const GapSpec spec = sample_gap_in(0, cfg.input_size, grng, cfg.gap);

    real err_inpaint = 0, err_fill = 0;
    int64_t n_gap = 0;
    for (int x = 0; x < held.cbct.nx; ++x) {
        const SliceImage truth = normalize(sagittal_slice(held.cbct, x), Domain::UNIT01);
        const SliceImage ct = normalize(sagittal_slice(held.ct, x), Domain::UNIT01);
        auto [gapped, m] = apply_gap(truth, spec, cfg.fill_value);
        const Tensor xin = completion::make_input(ct, gapped, m);
        Tensor y = gen.forward(xin, nullptr, false);
        SliceImage gen_s = gapped;
        y.reshape({cfg.input_size, cfg.input_size});
        gen_s.pixels = y;
        const SliceImage out = completion::inpaint_slice(gen_s, gapped, m);
        for (int64_t i = 0; i < out.pixels.size(); ++i)
            if (m.mask[size_t(i)]) {
                err_inpaint += std::abs(out.pixels[i] - truth.pixels[i]);
                err_fill += std::abs(gapped.pixels[i] - truth.pixels[i]);
                ++n_gap;
            }
    }
    req(n_gap > 0, "no gap voxels on the held-out patient");
    const real mae_inpaint = 100.0 * err_inpaint / real(n_gap);
    const real mae_fill = 100.0 * err_fill / real(n_gap);
    req(mae_inpaint < mae_fill,
        "inpainting does not beat the constant fill (inpaint " + std::to_string(mae_inpaint) +
            "% vs fill " + std::to_string(mae_fill) + "%)");
}

// ---- criterion 7: end-to-end pipeline through the CLI ----------------------------

void run_cli(const std::string& cmd, const fs::path& log) {
    const std::string full = cmd + " >> " + log.string() + " 2>&1";
    const int rc = std::system(full.c_str());
    req(rc != -1, "failed to spawn: " + cmd);
    req(WIFEXITED(rc) && WEXITSTATUS(rc) == 0,
        "command failed (see " + log.string() + "): " + cmd);
}

void criterion_end_to_end_cli() {
    const auto dir = work_dir("cli");
    const fs::path cfg_path = dir / "config.json";
    const fs::path log = dir / "cli.log";
    {
        std::ofstream f(cfg_path);
        f << json{
            {"data_root", (dir / "data").string()},
            {"out_root", (dir / "out").string()},
            {"seed", 7},
            {"n_val", 1},
            {"n_test", 1},
            {"gap", {{"min_w", 8}, {"max_w", 16}, {"seed", 11}}},
            {"completion",
             {{"phase1_iters", 30},
              {"phase2_iters", 10},
              {"phase3_iters", 20},
              {"checkpoint_every", 20},
              {"input_size", 64},
              {"local_size", 32},
              {"base", 4},
              {"max_val_slices", 4}}},
            {"translation",
             {{"epochs", 2},
              {"checkpoint_every_epochs", 1},
              {"base", 8},
              {"disc_base", 8},
              {"max_val_slices", 4},
              {"max_slices_per_epoch", 8}}},
        }.dump(2);
    }
    const std::string bin = std::string(ACCEPTANCE_ARTINP_BIN) + " --config " + cfg_path.string();

    run_cli(bin + " phantom --patients 4 --size 64", log);
    run_cli(bin + " prepare-data", log);
    run_cli(bin + " make-gaps", log);
    run_cli(bin + " train-completion", log);
    run_cli(bin + " train-translation", log);
    run_cli(bin + " infer", log);
    run_cli(bin + " --mode no-completion infer", log);
    run_cli(bin + " evaluate", log);

    // inspect the artifacts the chain produced
    std::ifstream mf(dir / "out" / "manifest.json");
    req(mf.good(), "manifest.json missing");
    const json manifest = json::parse(mf);
    const auto test_ids = manifest.at("split").at("test");
    req(test_ids.size() == 1, "expected one test patient");
    const std::string id = test_ids[0].get<std::string>();

    const VolumeHU input = load_volume((dir / "data" / (id + "_cbct.nii.gz")).string());
    const VolumeHU gapped =
        load_volume((dir / "out" / "gaps" / (id + "_cbct_gapped.nii.gz")).string());
    const VolumeHU maskv =
        load_volume((dir / "out" / "gaps" / (id + "_gapmask.nii.gz")).string());

    for (const char* mode : {"full", "no-completion"}) {
        const fs::path mdir = dir / "out" / "infer" / mode;
        const VolumeHU sct = load_volume((mdir / (id + "_sct.nii.gz")).string());
        req(sct.nx == input.nx && sct.ny == input.ny && sct.nz == input.nz,
            std::string(mode) + ": sCT shape differs from the input volume");
        const VolumeHU scbct = load_volume((mdir / (id + "_scbct.nii.gz")).string());
        int64_t gap_voxels = 0, inpainted_voxels = 0;
        for (int64_t i = 0; i < scbct.count(); ++i) {
            if (maskv.data[size_t(i)] != 0) {
                ++gap_voxels;
                if (scbct.data[size_t(i)] != gapped.data[size_t(i)]) ++inpainted_voxels;
            } else {
                req(scbct.data[size_t(i)] == gapped.data[size_t(i)],
                    std::string(mode) + ": non-gap voxel modified by inpainting");
            }
        }
        req(gap_voxels > 0, "gap mask is empty");
        if (std::string(mode) == "full")
            req(inpainted_voxels > 0, "full mode left every gap voxel at the fill value");
        else
            req(inpainted_voxels == 0, "no-completion mode modified gap voxels");
        req(fs::exists(dir / "out" / "eval" / mode / "report.json"),
            std::string(mode) + ": evaluation report missing");
    }
    req(fs::exists(dir / "out" / "eval" / "summary.json"), "evaluation summary missing");

    // slice/stack round-trips are bit-exact in both planes
    {
        const VolumeHU back = stack_axial(extract_axial(input), input);
        req(back.data == input.data, "axial slice/stack round-trip is not bit-exact");
        CropGeometry g;
        const auto slices = extract_sagittal(input, 32, &g);
        const VolumeHU sback = stack_sagittal(slices, g, input);
        req(sback.data == input.data, "sagittal crop/stack round-trip is not bit-exact");
    }
}

// ---- harness ----------------------------------------------------------------------

struct Criterion {
    const char* name;
    void (*fn)();
    double limit_s;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {"masked metric oracles (MAE%/PSNR/SSIM)", criterion_metric_oracles, 10},
        {"poisson blend vs dense direct solve", criterion_poisson_blend, 30},
        {"analytic gradients vs finite differences", criterion_gradient_checks, 120},
        {"network architecture invariants", criterion_architecture, 60},
        {"gap synthesis statistics", criterion_gap_statistics, 60},
        {"three-phase completion training contract", criterion_three_phase_training, 1800},
        {"end-to-end phantom pipeline via the CLI", criterion_end_to_end_cli, 1800},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        std::string error;
        try {
            c.fn();
        } catch (const std::exception& e) {
            error = e.what();
        }
        const double dt =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (error.empty() && dt >= c.limit_s)
            error = "exceeded the " + std::to_string(int(c.limit_s)) + " s budget";
        if (error.empty()) {
            std::printf("[PASS] %s (%.1f s)\n", c.name, dt);
        } else {
            std::printf("[FAIL] %s (%.1f s): %s\n", c.name, dt, error.c_str());
            ++failed;
        }
        std::fflush(stdout);
    }
    if (failed == 0)
        std::printf("all %zu acceptance criteria passed\n", criteria.size());
    else
        std::printf("%d of %zu acceptance criteria FAILED\n", failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
