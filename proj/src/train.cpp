#include "artinp/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "artinp/checkpoint.hpp"
#include "artinp/metrics.hpp"
#include "artinp/optim.hpp"
#include "artinp/rng.hpp"

namespace artinp::train {

namespace {

constexpr uint64_t kValSalt = 0x76616c5f73616c74ull;

void check_paired(const PairedSlices& s, const char* who) {
    if (s.cbct.size() != s.ct.size() || s.cbct.empty())
        throw std::invalid_argument(std::string(who) + ": need matched, non-empty slice stacks");
}

Tensor as_chw(const Tensor& hw) {
    Tensor t = hw;
    t.reshape({1, hw.dim(0), hw.dim(1)});
    return t;
}

std::string pad_iter(int64_t t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%08lld", static_cast<long long>(t));
    return buf;
}

real recon_loss(const Tensor& out, const Tensor& target, const GapMask& m, bool l1) {
    return l1 ? completion::l1_loss(out, target, m) : completion::mse_loss(out, target, m);
}

Tensor recon_grad(const Tensor& out, const Tensor& target, const GapMask& m, bool l1) {
    return l1 ? completion::l1_loss_grad(out, target, m)
              : completion::mse_loss_grad(out, target, m);
}

ckpt::Walker prefixed(const ckpt::Walker& walk, const std::string& pfx) {
    return [walk, pfx](const nn::TensorVisitor& v) {
        walk([&](const std::string& n, Tensor& t, Tensor* g) { v(pfx + n, t, g); });
    };
}

}  // namespace

// ---- completion ---------------------------------------------------------------

real completion_val_loss(completion::CompletionGenerator& gen, const PairedSlices& val,
                         const CompletionTrainConfig& cfg) {
    check_paired(val, "completion_val_loss");
    const size_t n = std::min<size_t>(val.size(), size_t(std::max(1, cfg.max_val_slices)));
    real acc = 0;
    for (size_t j = 0; j < n; ++j) {
        Rng rng = derive_rng(cfg.seed ^ kValSalt, j);
        const GapSpec spec = sample_gap_in(0, val.cbct[j].w(), rng, cfg.gap);
        auto [gapped, mask] = apply_gap(val.cbct[j], spec, cfg.fill_value);
        const Tensor x = completion::make_input(val.ct[j], gapped, mask);
        const Tensor y = gen.forward(x, nullptr, false);
        acc += recon_loss(y, val.cbct[j].pixels, mask, cfg.l1_recon);
    }
    return acc / real(n);
}

CompletionTrainReport train_completion(const PairedSlices& tr, const PairedSlices& val,
                                       const CompletionTrainConfig& cfg) {
    check_paired(tr, "train_completion");
    check_paired(val, "train_completion");
    for (const auto& s : tr.cbct)
        if (s.h() != cfg.input_size || s.w() != cfg.input_size || s.domain != Domain::UNIT01)
            throw std::invalid_argument("train_completion: slices must be UNIT01 crops of " +
                                        std::to_string(cfg.input_size));

    completion::CompletionGenerator gen(cfg.base);
    completion::CompletionDiscriminator disc(cfg.input_size, cfg.local_size, cfg.base);
    {
        Rng r1 = derive_rng(cfg.seed, 100), r2 = derive_rng(cfg.seed, 101);
        gen.init(r1);
        disc.init(r2);
    }
    nn::Adadelta opt_g(nn::collect_tensors(gen));
    nn::Adadelta opt_d(nn::collect_tensors(disc));

    const int64_t p1 = cfg.phase1_iters, p2 = cfg.phase2_iters, p3 = cfg.phase3_iters;
    const int64_t total = p1 + p2 + p3;
    const int64_t ckpt_every = std::max<int64_t>(1, cfg.checkpoint_every);
    const int64_t val_every = cfg.val_every > 0 ? cfg.val_every : ckpt_every;
    const bool files = !cfg.out_dir.empty();
    if (files) std::filesystem::create_directories(cfg.out_dir);

    CompletionTrainReport rep;
    rep.total_iters = total;
    rep.gen_hash_phase2_start = nn::param_hash(gen);
    rep.gen_hash_phase2_end = rep.gen_hash_phase2_start;

    std::ofstream log;
    if (files) {
        rep.log_csv = cfg.out_dir + "/train_completion_log.csv";
        log.open(rep.log_csv);
        log << "iteration,phase,recon,d_loss,g_adv,combined,val_recon\n";
    }

    real best_val = 0;
    bool have_best = false;
    auto save_ckpt = [&](const std::string& name, int64_t iter, int phase) -> std::string {
        if (!files) return "";
        ckpt::Checkpoint c;
        c.network = "completion";
        c.iteration = iter;
        c.phase = phase;
        c.config_hash = cfg.config_hash;
        c.meta["base"] = std::to_string(cfg.base);
        c.meta["input_size"] = std::to_string(cfg.input_size);
        c.meta["local_size"] = std::to_string(cfg.local_size);
        ckpt::capture(c, [&](const nn::TensorVisitor& v) { gen.visit(v); });
        ckpt::capture(c, [&](const nn::TensorVisitor& v) { disc.visit(v); });
        ckpt::capture(c, prefixed([&](const nn::TensorVisitor& v) { opt_g.visit(v); }, "optg."));
        ckpt::capture(c, prefixed([&](const nn::TensorVisitor& v) { opt_d.visit(v); }, "optd."));
        const std::string path = cfg.out_dir + "/" + name;
        ckpt::save_checkpoint(path, c);
        return path;
    };
    auto run_val = [&](int64_t iter, int phase, real recon, real dl, real ga, real comb,
                       bool stepped) {
        const real v = completion_val_loss(gen, val, cfg);
        rep.val_history.push_back({iter, v});
        if (log) {
            log << iter << ',' << phase << ',';
            if (stepped)
                log << recon << ',' << dl << ',' << ga << ',' << comb;
            else
                log << ",,,";
            log << ',' << v << '\n';
        }
        if (!have_best || v <= best_val) {
            best_val = v;
            have_best = true;
            const std::string p = save_ckpt("completion_best.ckpt", iter, phase);
            if (!p.empty()) rep.best_checkpoint = p;
        }
    };

    run_val(0, p1 > 0 ? 1 : (p2 > 0 ? 2 : 3), 0, 0, 0, 0, false);

    Rng rng = derive_rng(cfg.seed, 1);
    const int W = cfg.input_size, H = cfg.input_size;
    const int n = int(tr.size());

    for (int64_t t = 1; t <= total; ++t) {
        const int phase = t <= p1 ? 1 : (t <= p1 + p2 ? 2 : 3);
        const int i = rand_int(rng, 0, n - 1);
        const GapSpec spec = sample_gap_in(0, W, rng, cfg.gap);
        auto [gapped, mask] = apply_gap(tr.cbct[i], spec, cfg.fill_value);
        const Tensor x = completion::make_input(tr.ct[i], gapped, mask);
        const Tensor& target = tr.cbct[i].pixels;

        real recon = 0, d_loss = 0, g_adv = 0;

        if (phase == 1) {
            nn::NetCtx gctx;
            const Tensor y = gen.forward(x, &gctx, true);
            recon = recon_loss(y, target, mask, cfg.l1_recon);
            const Tensor dy = recon_grad(y, target, mask, cfg.l1_recon);
            nn::zero_grads(gen);
            gen.backward(dy, gctx);
            opt_g.step();
        } else {
            // Fake sample: generator output composited into the gap. In
            // phase 2 the generator is frozen (no ctx, no step).
            nn::NetCtx gctx;
            const bool joint = phase == 3;
            const Tensor y = gen.forward(x, joint ? &gctx : nullptr, joint);
            Tensor fake = completion::composite(y, gapped.pixels, mask);
            fake.reshape({1, H, W});
            recon = recon_loss(y, target, mask, cfg.l1_recon);

            // Discriminator step: real sample with its own random strip mask.
            const int r = rand_int(rng, 0, n - 1);
            const GapSpec rspec = sample_gap_in(0, W, rng, cfg.gap);
            const GapMask rmask = gap_mask(H, W, rspec);
            const Tensor real_t = as_chw(tr.cbct[r].pixels);
            completion::DiscCtx dc_r, dc_f;
            const real d_real = disc.forward(real_t, rmask, &dc_r, true);
            const real d_fake = disc.forward(fake, mask, &dc_f, true);
            const auto al = completion::adv_losses(d_real, d_fake);
            const auto ag = completion::adv_grads(d_real, d_fake);
            d_loss = al.d_loss;
            g_adv = al.g_adv;
            nn::zero_grads(disc);
            disc.backward(ag.dd_real, dc_r);
            disc.backward(ag.dd_fake, dc_f);
            opt_d.step();

            if (joint) {
                // Generator step against the updated discriminator.
                completion::DiscCtx dc2;
                const real d_fake2 = disc.forward(fake, mask, &dc2, true);
                g_adv = completion::adv_losses(d_real, d_fake2).g_adv;
                const real dg = completion::adv_grads(d_real, d_fake2).dg_fake;
                const Tensor dfake = disc.backward(cfg.alpha * dg, dc2);
                Tensor dy = recon_grad(y, target, mask, cfg.l1_recon);
                for (int64_t k = 0; k < dy.size(); ++k)
                    if (mask.mask[size_t(k)]) dy[k] += dfake[k];
                nn::zero_grads(gen);
                gen.backward(dy, gctx);
                opt_g.step();
            }
        }

        if (t == p1) rep.gen_hash_phase2_start = nn::param_hash(gen);
        if (t == p1 + p2) rep.gen_hash_phase2_end = nn::param_hash(gen);

        const real comb = completion::combined_loss(recon, g_adv, phase == 3 ? cfg.alpha : 0);
        const bool at_val = t % val_every == 0 || t == p1 || t == p1 + p2 || t == total;
        if (at_val) {
            run_val(t, phase, recon, d_loss, g_adv, comb, true);
        } else if (log) {
            log << t << ',' << phase << ',' << recon << ',' << d_loss << ',' << g_adv << ','
                << comb << ",\n";
        }
        if (t % ckpt_every == 0 || t == total) {
            const std::string p = save_ckpt("completion_iter" + pad_iter(t) + ".ckpt", t, phase);
            if (!p.empty()) rep.checkpoints.push_back(p);
        }
    }
    return rep;
}

// ---- translation ----------------------------------------------------------------

real translation_val_mae(translation::UNetGenerator& gen, const PairedSlices& val,
                         int max_slices) {
    check_paired(val, "translation_val_mae");
    // Evenly spaced subsample so the cap still sees mid-volume anatomy, not
    // just the (often empty) first slices of the stack.
    const size_t want = std::min<size_t>(val.size(), size_t(std::max(1, max_slices)));
    real acc = 0;
    int64_t used = 0;
    for (size_t k = 0; k < want; ++k) {
        const size_t j = k * val.size() / want;
        SliceImage ct_hu = denormalize(val.ct[j]);
        const BodyMask bm = body_mask(ct_hu);
        if (bm.empty_flag) continue;
        const Tensor y = gen.forward(as_chw(val.cbct[j].pixels), nullptr, false);
        SliceImage pred = val.cbct[j];
        std::copy(y.data(), y.data() + y.size(), pred.pixels.data());
        const SliceImage pred_hu = denormalize(pred);
        Tensor a = pred_hu.pixels, b = ct_hu.pixels;
        acc += metrics::mae_pct(a, b, bm, kHuRange);
        ++used;
    }
    if (used == 0)
        throw std::runtime_error("translation_val_mae: every validation slice had an empty mask");
    return acc / real(used);
}

TranslationTrainReport train_translation(const PairedSlices& tr, const PairedSlices& val,
                                         const TranslationTrainConfig& cfg) {
    check_paired(tr, "train_translation");
    check_paired(val, "train_translation");
    for (const auto& s : tr.cbct)
        if (s.h() != cfg.input_size || s.w() != cfg.input_size || s.domain != Domain::SIGNED11)
            throw std::invalid_argument("train_translation: slices must be SIGNED11 of " +
                                        std::to_string(cfg.input_size));

    translation::UNetGenerator gen(cfg.input_size, cfg.base, 1, 1, cfg.depth);
    translation::PatchGAN disc(cfg.conditional ? 2 : 1, cfg.disc_base);
    {
        Rng r1 = derive_rng(cfg.seed, 200), r2 = derive_rng(cfg.seed, 201);
        gen.init(r1);
        disc.init(r2);
    }
    nn::Adam opt_g(nn::collect_tensors(gen), cfg.lr, cfg.beta1, cfg.beta2);
    nn::Adam opt_d(nn::collect_tensors(disc), cfg.lr, cfg.beta1, cfg.beta2);

    const bool files = !cfg.out_dir.empty();
    if (files) std::filesystem::create_directories(cfg.out_dir);

    TranslationTrainReport rep;
    std::ofstream log;
    if (files) {
        rep.log_csv = cfg.out_dir + "/train_translation_log.csv";
        log.open(rep.log_csv);
        log << "epoch,iteration,d_loss,g_gan,g_l1,g_total,val_mae_pct\n";
    }

    auto save_ckpt = [&](const std::string& name, int epoch, int64_t iter) -> std::string {
        if (!files) return "";
        ckpt::Checkpoint c;
        c.network = "translation";
        c.iteration = iter;
        c.epoch = epoch;
        c.config_hash = cfg.config_hash;
        c.meta["input_size"] = std::to_string(cfg.input_size);
        c.meta["base"] = std::to_string(cfg.base);
        c.meta["depth"] = std::to_string(gen.depth());
        c.meta["disc_base"] = std::to_string(cfg.disc_base);
        c.meta["conditional"] = cfg.conditional ? "1" : "0";
        ckpt::capture(c, [&](const nn::TensorVisitor& v) { gen.visit(v); });
        ckpt::capture(c, [&](const nn::TensorVisitor& v) { disc.visit(v); });
        ckpt::capture(c, prefixed([&](const nn::TensorVisitor& v) { opt_g.visit(v); }, "optg."));
        ckpt::capture(c, prefixed([&](const nn::TensorVisitor& v) { opt_d.visit(v); }, "optd."));
        const std::string path = cfg.out_dir + "/" + name;
        ckpt::save_checkpoint(path, c);
        return path;
    };

    real best_val = 0;
    bool have_best = false;
    int64_t iter = 0;
    std::vector<int> order(tr.size());
    std::iota(order.begin(), order.end(), 0);

    for (int e = 1; e <= cfg.epochs; ++e) {
        Rng erng = derive_rng(cfg.seed, 1000 + uint64_t(e));
        std::shuffle(order.begin(), order.end(), erng);
        const size_t m = cfg.max_slices_per_epoch > 0
                             ? std::min(tr.size(), size_t(cfg.max_slices_per_epoch))
                             : tr.size();
        for (size_t k = 0; k < m; ++k) {
            const int i = order[k];
            const Tensor x = as_chw(tr.cbct[size_t(i)].pixels);
            const Tensor ytrue = as_chw(tr.ct[size_t(i)].pixels);

            translation::UNetCtx gctx;
            const Tensor yfake = gen.forward(x, &gctx, true);

            auto disc_in = [&](const Tensor& y) {
                if (!cfg.conditional) return y;
                Tensor c({2, y.dim(1), y.dim(2)});
                std::copy(x.data(), x.data() + x.size(), c.data());
                std::copy(y.data(), y.data() + y.size(), c.data() + x.size());
                return c;
            };

            // Discriminator step (generator output held constant). The usual
            // pix2pix halving keeps D from outpacing G.
            const Tensor real_in = disc_in(ytrue);
            const Tensor fake_in = disc_in(yfake);
            nn::NetCtx dcr, dcf;
            const Tensor sr = disc.forward(real_in, &dcr, true);
            const Tensor sf = disc.forward(fake_in, &dcf, true);
            const real d_loss = 0.5 * (translation::bce_with_logits(sr, 1.0) +
                                       translation::bce_with_logits(sf, 0.0));
            Tensor dsr = translation::bce_with_logits_grad(sr, 1.0);
            Tensor dsf = translation::bce_with_logits_grad(sf, 0.0);
            for (int64_t q = 0; q < dsr.size(); ++q) dsr[q] *= 0.5;
            for (int64_t q = 0; q < dsf.size(); ++q) dsf[q] *= 0.5;
            nn::zero_grads(disc);
            disc.backward(dsr, dcr);
            disc.backward(dsf, dcf);
            opt_d.step();

            // Generator step against the updated discriminator.
            nn::NetCtx dc2;
            const Tensor sf2 = disc.forward(fake_in, &dc2, true);
            const auto gl = translation::translation_losses(sf2, yfake, ytrue, cfg.lambda);
            const Tensor ds = translation::bce_with_logits_grad(sf2, 1.0);
            const Tensor dfake_in = disc.backward(ds, dc2);
            Tensor dy({1, x.dim(1), x.dim(2)});
            const int64_t npix = int64_t(x.dim(1)) * x.dim(2);
            const real* src = cfg.conditional ? dfake_in.data() + npix : dfake_in.data();
            std::copy(src, src + npix, dy.data());
            const Tensor dl1 = translation::l1_mean_grad(yfake, ytrue);
            for (int64_t q = 0; q < dy.size(); ++q) dy[q] += cfg.lambda * dl1[q];
            nn::zero_grads(gen);
            gen.backward(dy, gctx);
            opt_g.step();

            ++iter;
            if (log)
                log << e << ',' << iter << ',' << d_loss << ',' << gl.gan << ',' << gl.l1 << ','
                    << gl.total << ",\n";
        }

        const real v = translation_val_mae(gen, val, cfg.max_val_slices);
        rep.val_history.push_back({e, v});
        if (log) log << e << ',' << iter << ",,,,," << v << '\n';
        if (!have_best || v <= best_val) {
            best_val = v;
            have_best = true;
            const std::string p = save_ckpt("translation_best.ckpt", e, iter);
            if (!p.empty()) rep.best_checkpoint = p;
        }
        if (e % std::max(1, cfg.checkpoint_every_epochs) == 0 || e == cfg.epochs) {
            char buf[16];
            std::snprintf(buf, sizeof(buf), "%04d", e);
            const std::string p = save_ckpt("translation_epoch" + std::string(buf) + ".ckpt",
                                            e, iter);
            if (!p.empty()) rep.checkpoints.push_back(p);
        }
    }
    rep.total_iters = iter;
    return rep;
}

// ---- checkpoint loading -----------------------------------------------------------

namespace {

int meta_int(const ckpt::Checkpoint& c, const std::string& key) {
    auto it = c.meta.find(key);
    if (it == c.meta.end())
        throw std::runtime_error("checkpoint is missing architecture metadata: " + key);
    return std::stoi(it->second);
}

}  // namespace

completion::CompletionGenerator load_completion_generator(const std::string& path) {
    const ckpt::Checkpoint c = ckpt::load_checkpoint(path);
    if (c.network != "completion")
        throw std::runtime_error("not a completion checkpoint: " + path);
    completion::CompletionGenerator gen(meta_int(c, "base"));
    ckpt::restore(c, [&](const nn::TensorVisitor& v) { gen.visit(v); });
    return gen;
}

translation::UNetGenerator load_translation_generator(const std::string& path) {
    const ckpt::Checkpoint c = ckpt::load_checkpoint(path);
    if (c.network != "translation")
        throw std::runtime_error("not a translation checkpoint: " + path);
    translation::UNetGenerator gen(meta_int(c, "input_size"), meta_int(c, "base"), 1, 1,
                                   meta_int(c, "depth"));
    ckpt::restore(c, [&](const nn::TensorVisitor& v) { gen.visit(v); });
    return gen;
}

}  // namespace artinp::train
