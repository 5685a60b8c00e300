#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "artinp/completion.hpp"
#include "artinp/gaps.hpp"
#include "artinp/metrics.hpp"
#include "artinp/train.hpp"
#include "artinp/translation.hpp"
#include "artinp/volume.hpp"

namespace artinp::pipeline {

// ---- configuration ----------------------------------------------------------
// One config drives every stage; its hash is stamped into every artifact so
// stale mixtures of outputs are caught instead of silently evaluated.

struct GapConfig {
    int min_w = kGapWidthMin, max_w = kGapWidthMax;
    uint64_t seed = 11;  // combined with the patient id for test-set gaps
};

struct CompletionConfig {
    int64_t phase1_iters = 180000, phase2_iters = 20000, phase3_iters = 620000;
    real alpha = completion::kDefaultAlpha;
    bool l1_recon = false;
    int64_t checkpoint_every = 2000, val_every = 0;
    int input_size = 160, local_size = 96, base = 32;
    uint64_t seed = 0;  // 0: derived from the master seed
    int max_val_slices = 64;
};

struct TranslationConfig {
    int epochs = 60;
    real lr = 2e-4, beta1 = 0.5, beta2 = 0.999;
    real lambda = translation::kDefaultLambda;
    int checkpoint_every_epochs = 5;
    int input_size = 0;  // 0: axial size from the manifest
    int base = 64, depth = -1, disc_base = 64;
    bool conditional = true;
    uint64_t seed = 0;  // 0: derived from the master seed
    int max_val_slices = 64;
    int max_slices_per_epoch = 0;
};

struct PipelineConfig {
    std::string data_root = "data";
    std::string out_root = "out";
    uint64_t seed = 7;          // master seed: split, gaps, training all derive from it
    int n_val = -1, n_test = -1;  // -1: fractional 80/10/10 split
    GapConfig gap;
    CompletionConfig completion;
    TranslationConfig translation;
    std::string mode = "full";  // "full" | "no-completion"; excluded from the hash
};

nlohmann::json to_json(const PipelineConfig& cfg);
PipelineConfig config_from_json(const nlohmann::json& j);
// Reads a JSON config file (missing keys keep defaults), then applies
// ARTINP_* environment overrides. Empty path: defaults + environment only.
PipelineConfig load_config(const std::string& path);
// ARTINP_<PATH>=value where <PATH> is the upper-cased underscore-joined JSON
// path, e.g. ARTINP_GAP_MIN_W=8, ARTINP_COMPLETION_PHASE1_ITERS=50.
void apply_env_overrides(nlohmann::json& j);
// FNV-1a over the canonical serialization with `mode` removed: both pipeline
// modes of one experiment share artifacts up to inference.
std::string config_hash(const PipelineConfig& cfg);

// ---- artifact layout ----------------------------------------------------------
std::string manifest_path(const PipelineConfig& cfg);
std::string gaps_dir(const PipelineConfig& cfg);
std::string ckpt_dir(const PipelineConfig& cfg, const std::string& net);
std::string infer_dir(const PipelineConfig& cfg);  // per-mode
std::string eval_dir(const PipelineConfig& cfg);   // per-mode

// ---- stages -------------------------------------------------------------------
// Each cmd_* maps 1:1 to a CLI subcommand: loads what it needs from the
// artifact tree, refuses to clobber existing outputs unless force is set,
// and stamps the config hash into everything it writes.

void cmd_phantom(const PipelineConfig& cfg, int patients, int size, uint64_t seed,
                 const std::string& out_dir, bool force);
void cmd_prepare_data(const PipelineConfig& cfg, bool force);
void cmd_make_gaps(const PipelineConfig& cfg, bool force);
train::CompletionTrainReport cmd_train_completion(const PipelineConfig& cfg, bool force);
train::TranslationTrainReport cmd_train_translation(const PipelineConfig& cfg, bool force);
void cmd_infer(const PipelineConfig& cfg, std::string completion_ckpt,
               std::string translation_ckpt, bool force);
// Evaluates every mode with inference outputs present; returns the printed
// summary (one section per mode).
std::string cmd_evaluate(const PipelineConfig& cfg, bool ignore_hash, bool force);

// ---- inference core (used by cmd_infer and directly by tests) -------------------
struct InferenceResult {
    VolumeHU inpainted;  // sCBCT; the unmodified input in no-completion mode
    VolumeHU sct;
};

// Sagittal completion + blend -> restack -> axial translation -> restack.
// `comp` may be null only in no-completion mode, which must not touch any
// completion code path. gap_mask uses VolumeHU indexing (empty = no gaps).
InferenceResult run_inference(const PipelineConfig& cfg, const VolumeHU& cbct_gapped,
                              const VolumeHU& planning_ct, const std::vector<uint8_t>& gap_mask,
                              completion::CompletionGenerator* comp,
                              translation::UNetGenerator& trans);

// Slice-wise masked metrics of synth against reference; writes CSV + JSON
// reports into out_dir when non-empty and returns the report.
metrics::MetricReport run_eval(const VolumeHU& reference, const VolumeHU& synth,
                               const std::string& out_dir, const std::string& tag);

}  // namespace artinp::pipeline
