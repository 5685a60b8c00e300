#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "artinp/completion.hpp"
#include "artinp/gaps.hpp"
#include "artinp/translation.hpp"
#include "artinp/volume.hpp"

namespace artinp::train {

// Matched CBCT/CT slice stacks, preloaded in memory (fine at desk scale; a
// paper-scale run would want a streaming loader instead).
struct PairedSlices {
    std::vector<SliceImage> cbct, ct;  // aligned, same domain
    std::vector<std::string> patient;  // per-slice patient id

    size_t size() const { return cbct.size(); }
};

struct ValPoint {
    int64_t iteration = 0;  // iteration (completion) or epoch (translation)
    real value = 0;
};

// ---- completion: three-phase adversarial schedule ---------------------------
struct CompletionTrainConfig {
    int64_t phase1_iters = 180000;  // generator only, reconstruction loss
    int64_t phase2_iters = 20000;   // discriminator only, generator frozen
    int64_t phase3_iters = 620000;  // joint
    real alpha = completion::kDefaultAlpha;
    bool l1_recon = false;  // reconstruction term: squared error, or L1 when set
    int64_t checkpoint_every = 2000;
    int64_t val_every = 0;  // 0 -> same as checkpoint_every
    int input_size = 160, local_size = 96, base = 32;
    GapWidths gap;
    real fill_value = 0.25;  // UNIT01 gap fill (training-set mean)
    uint64_t seed = 1;
    std::string out_dir;
    std::string config_hash;
    int max_val_slices = 64;
};

struct CompletionTrainReport {
    std::vector<std::string> checkpoints;
    std::string best_checkpoint;
    std::vector<ValPoint> val_history;  // reconstruction loss on val gaps
    uint64_t gen_hash_phase2_start = 0, gen_hash_phase2_end = 0;
    int64_t total_iters = 0;
    std::string log_csv;
};

// Slices must be UNIT01 sagittal crops of edge length cfg.input_size.
CompletionTrainReport train_completion(const PairedSlices& tr, const PairedSlices& val,
                                       const CompletionTrainConfig& cfg);

// Validation reconstruction loss under deterministic per-slice gaps (the
// same gaps every call, so values are comparable across checkpoints).
real completion_val_loss(completion::CompletionGenerator& gen, const PairedSlices& val,
                         const CompletionTrainConfig& cfg);

// ---- translation: conditional adversarial epochs -----------------------------
struct TranslationTrainConfig {
    int epochs = 60;
    real lr = 2e-4, beta1 = 0.5, beta2 = 0.999;
    real lambda = translation::kDefaultLambda;
    int checkpoint_every_epochs = 5;
    int input_size = 256, base = 64, depth = -1;  // depth -1: log2(input_size)
    int disc_base = 64;
    bool conditional = true;  // discriminator sees (input, output) pairs
    uint64_t seed = 2;
    std::string out_dir;
    std::string config_hash;
    int max_val_slices = 64;
    int max_slices_per_epoch = 0;  // 0 = full epoch; smoke runs cap this
};

struct TranslationTrainReport {
    std::vector<std::string> checkpoints;
    std::string best_checkpoint;
    std::vector<ValPoint> val_history;  // per-epoch MAE% on val slices
    int64_t total_iters = 0;
    std::string log_csv;
};

// Slices must be SIGNED11 axial slices of edge length cfg.input_size.
TranslationTrainReport train_translation(const PairedSlices& tr, const PairedSlices& val,
                                         const TranslationTrainConfig& cfg);

// MAE% between generated and reference slices, HU domain, body mask from the
// reference; slices with an empty mask are skipped.
real translation_val_mae(translation::UNetGenerator& gen, const PairedSlices& val,
                         int max_slices);

// ---- checkpoint loading -------------------------------------------------------
// Rebuild a generator from the architecture metadata stored alongside the
// weights; throws when the file is missing or of the wrong network kind.
completion::CompletionGenerator load_completion_generator(const std::string& path);
translation::UNetGenerator load_translation_generator(const std::string& path);

}  // namespace artinp::train
