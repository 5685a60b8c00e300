// Command-line driver for the CBCT inter-series gap completion and synthetic
// CT pipeline. Every subcommand reads the same JSON config (plus ARTINP_*
// environment overrides), stamps the config hash into its outputs, and
// refuses to overwrite a stage that already ran unless --force is given.

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "artinp/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"artinp: CBCT gap completion and synthetic-CT pipeline"};
    app.require_subcommand(1);

    std::string config_path, mode;
    uint64_t seed = 0;
    bool force = false;
    app.add_option("--config", config_path, "JSON config file (defaults apply when omitted)");
    auto* seed_opt = app.add_option("--seed", seed, "master seed override");
    auto* mode_opt = app.add_option("--mode", mode, "pipeline mode")
                         ->check(CLI::IsMember({"full", "no-completion"}));
    app.add_flag("--force", force, "overwrite outputs of a stage that already ran");

    auto* sc_phantom = app.add_subcommand("phantom", "generate a synthetic skull dataset");
    int patients = 8, size = 64;
    std::string phantom_out;
    sc_phantom->add_option("--patients", patients, "number of phantom patients")
        ->check(CLI::PositiveNumber);
    sc_phantom->add_option("--size", size, "cubic volume edge length in voxels")
        ->check(CLI::PositiveNumber);
    sc_phantom->add_option("--out", phantom_out, "output directory (default: data_root)");

    auto* sc_prepare =
        app.add_subcommand("prepare-data", "split patients and build the slice store");
    auto* sc_gaps = app.add_subcommand("make-gaps", "synthesize gapped test-set CBCT volumes");
    auto* sc_train_c =
        app.add_subcommand("train-completion", "train the gap completion network");
    auto* sc_train_t =
        app.add_subcommand("train-translation", "train the CBCT-to-CT translation network");

    auto* sc_infer = app.add_subcommand("infer", "inpaint and translate the test set");
    std::string completion_ckpt, translation_ckpt;
    sc_infer->add_option("--completion-ckpt", completion_ckpt,
                         "completion checkpoint (default: best from train-completion)");
    sc_infer->add_option("--translation-ckpt", translation_ckpt,
                         "translation checkpoint (default: best from train-translation)");

    auto* sc_eval = app.add_subcommand("evaluate", "masked MAE%/PSNR/SSIM on the test set");
    bool ignore_hash = false;
    sc_eval->add_flag("--ignore-hash", ignore_hash,
                      "evaluate volumes whose config hash does not match");

    for (auto* sc : {sc_phantom, sc_prepare, sc_gaps, sc_train_c, sc_train_t, sc_infer, sc_eval})
        sc->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        artinp::pipeline::PipelineConfig cfg = artinp::pipeline::load_config(config_path);
        if (seed_opt->count()) cfg.seed = seed;
        if (mode_opt->count()) cfg.mode = mode;

        if (sc_phantom->parsed()) {
            artinp::pipeline::cmd_phantom(cfg, patients, size, cfg.seed, phantom_out, force);
        } else if (sc_prepare->parsed()) {
            artinp::pipeline::cmd_prepare_data(cfg, force);
        } else if (sc_gaps->parsed()) {
            artinp::pipeline::cmd_make_gaps(cfg, force);
        } else if (sc_train_c->parsed()) {
            artinp::pipeline::cmd_train_completion(cfg, force);
        } else if (sc_train_t->parsed()) {
            artinp::pipeline::cmd_train_translation(cfg, force);
        } else if (sc_infer->parsed()) {
            artinp::pipeline::cmd_infer(cfg, completion_ckpt, translation_ckpt, force);
        } else if (sc_eval->parsed()) {
            std::fputs(artinp::pipeline::cmd_evaluate(cfg, ignore_hash, force).c_str(), stdout);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "artinp: error: %s\n", e.what());
        return 1;
    }
    return 0;
}
