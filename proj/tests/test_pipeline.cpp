#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "artinp/gaps.hpp"
#include "artinp/pipeline.hpp"
#include "artinp/rng.hpp"
#include "doctest.h"

using namespace artinp;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const char* leaf) {
    const fs::path p = fs::temp_directory_path() / "artinp_pipeline_test" / leaf;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

struct EnvGuard {
    std::vector<std::string> names;
    void set(const char* name, const char* value) {
        ::setenv(name, value, 1);
        names.push_back(name);
    }
    ~EnvGuard() {
        for (const auto& n : names) ::unsetenv(n.c_str());
    }
};

VolumeHU random_volume(int n, uint64_t seed, int16_t lo = -800, int16_t hi = 800) {
    VolumeHU v(n, n, n);
    Rng rng = make_rng(seed);
    for (auto& h : v.data) h = int16_t(rand_int(rng, lo, hi));
    return v;
}

}  // namespace

TEST_CASE("pipeline config round-trips through json") {
    pipeline::PipelineConfig cfg;
    cfg.seed = 21;
    cfg.gap.min_w = 5;
    cfg.gap.max_w = 9;
    cfg.completion.base = 4;
    cfg.completion.phase3_iters = 123;
    cfg.translation.epochs = 3;
    cfg.translation.lr = 1e-3;
    cfg.mode = "no-completion";

    const json j = pipeline::to_json(cfg);
    const pipeline::PipelineConfig back = pipeline::config_from_json(j);
    CHECK(pipeline::to_json(back) == j);
    CHECK(back.seed == 21);
    CHECK(back.gap.max_w == 9);
    CHECK(back.completion.phase3_iters == 123);
    CHECK(back.translation.lr == 1e-3);
    CHECK(back.mode == "no-completion");
}

TEST_CASE("config hash is stable, 16 hex chars, and ignores the mode") {
    pipeline::PipelineConfig a;
    const std::string ha = pipeline::config_hash(a);
    REQUIRE(ha.size() == 16);
    CHECK(ha.find_first_not_of("0123456789abcdef") == std::string::npos);
    CHECK(pipeline::config_hash(a) == ha);  // deterministic

    pipeline::PipelineConfig b = a;
    b.mode = "no-completion";
    CHECK(pipeline::config_hash(b) == ha);  // both modes share artifacts

    pipeline::PipelineConfig c = a;
    c.seed += 1;
    CHECK(pipeline::config_hash(c) != ha);
    pipeline::PipelineConfig d = a;
    d.gap.min_w += 1;
    CHECK(pipeline::config_hash(d) != ha);
}

TEST_CASE("environment variables override nested config values with their json types") {
    EnvGuard env;
    env.set("ARTINP_SEED", "99");
    env.set("ARTINP_DATA_ROOT", "/somewhere");
    env.set("ARTINP_GAP_MIN_W", "6");
    env.set("ARTINP_COMPLETION_PHASE1_ITERS", "42");
    env.set("ARTINP_TRANSLATION_LR", "0.001");
    env.set("ARTINP_TRANSLATION_CONDITIONAL", "false");
    env.set("ARTINP_MODE", "no-completion");

    json j = pipeline::to_json(pipeline::PipelineConfig{});
    pipeline::apply_env_overrides(j);
    const pipeline::PipelineConfig cfg = pipeline::config_from_json(j);
    CHECK(cfg.seed == 99);
    CHECK(cfg.data_root == "/somewhere");
    CHECK(cfg.gap.min_w == 6);
    CHECK(cfg.completion.phase1_iters == 42);
    CHECK(cfg.translation.lr == 0.001);
    CHECK(cfg.translation.conditional == false);
    CHECK(cfg.mode == "no-completion");
}

TEST_CASE("malformed environment overrides are rejected") {
    EnvGuard env;
    env.set("ARTINP_SEED", "not-a-number");
    json j = pipeline::to_json(pipeline::PipelineConfig{});
    CHECK_THROWS((void)pipeline::apply_env_overrides(j));
}

TEST_CASE("load_config layers file overrides onto defaults") {
    const auto dir = fresh_dir("config");
    const auto path = dir / "config.json";
    {
        std::ofstream f(path);
        f << R"({"seed": 123, "completion": {"base": 4}, "gap": {"min_w": 3, "max_w": 7}})";
    }
    const pipeline::PipelineConfig cfg = pipeline::load_config(path.string());
    CHECK(cfg.seed == 123);
    CHECK(cfg.completion.base == 4);
    CHECK(cfg.gap.min_w == 3);
    CHECK(cfg.gap.max_w == 7);
    CHECK(cfg.translation.epochs == 60);   // untouched default
    CHECK(cfg.completion.input_size == 160);

    CHECK_THROWS((void)pipeline::load_config((dir / "missing.json").string()));

    // environment wins over the file
    EnvGuard env;
    env.set("ARTINP_SEED", "321");
    CHECK(pipeline::load_config(path.string()).seed == 321);
}

TEST_CASE("run_inference completes gaps, preserves non-gap voxels, and restacks exactly") {
    const int N = 32;
    pipeline::PipelineConfig cfg;
    cfg.completion.input_size = 16;
    cfg.completion.local_size = 8;
    cfg.translation.input_size = N;
    cfg.mode = "full";

    const VolumeHU ct = random_volume(N, 201);
    VolumeHU cbct = random_volume(N, 202);

    // a per-patient strip confined to the sagittal crop window, as make-gaps does
    const CropGeometry g = sagittal_crop_geometry(cbct, cfg.completion.input_size);
    const PatientGap pg =
        patient_gap(cbct, 7, -512, g.col_off, g.col_off + g.size, GapWidths{3, 5});
    REQUIRE(pg.spec.width >= 3);

    completion::CompletionGenerator comp(2);
    translation::UNetGenerator trans(N, 2, 1, 1, 3);
    Rng rng = make_rng(203);
    comp.init(rng);
    trans.init(rng);

    const auto res = pipeline::run_inference(cfg, pg.gapped, ct, pg.mask, &comp, trans);
    CHECK(res.sct.nx == N);
    CHECK(res.sct.ny == N);
    CHECK(res.sct.nz == N);
    CHECK(res.inpainted.nx == N);
    CHECK(res.sct.modality == Modality::sCT);
    CHECK(res.inpainted.modality == Modality::sCBCT);

    // outside the gap the inpainted volume is bitwise the gapped input
    int64_t changed = 0;
    for (int64_t i = 0; i < res.inpainted.count(); ++i) {
        if (pg.mask[size_t(i)])
            changed += res.inpainted.data[size_t(i)] != pg.gapped.data[size_t(i)];
        else
            REQUIRE(res.inpainted.data[size_t(i)] == pg.gapped.data[size_t(i)]);
    }
    CHECK(changed > 0);  // an untrained generator still rewrites the strip

    SUBCASE("no-completion mode never touches the completion net") {
        pipeline::PipelineConfig nc = cfg;
        nc.mode = "no-completion";
        const auto plain = pipeline::run_inference(nc, pg.gapped, ct, pg.mask, nullptr, trans);
        CHECK(plain.inpainted.data == pg.gapped.data);
        CHECK(plain.sct.nx == N);
    }
    SUBCASE("with no gaps both modes produce the identical sCT") {
        const std::vector<uint8_t> empty_mask(size_t(cbct.count()), 0);
        const auto full = pipeline::run_inference(cfg, cbct, ct, empty_mask, &comp, trans);
        pipeline::PipelineConfig nc = cfg;
        nc.mode = "no-completion";
        const auto plain = pipeline::run_inference(nc, cbct, ct, empty_mask, nullptr, trans);
        CHECK(full.inpainted.data == cbct.data);
        CHECK(full.sct.data == plain.sct.data);
    }
    SUBCASE("axial size mismatch is rejected up front") {
        pipeline::PipelineConfig bad = cfg;
        bad.translation.input_size = 16;
        translation::UNetGenerator small(16, 2, 1, 1, 3);
        small.init(rng);
        CHECK_THROWS((void)pipeline::run_inference(bad, pg.gapped, ct, pg.mask, &comp, small));
    }
}

TEST_CASE("run_eval writes csv and json reports with per-slice rows") {
    const auto dir = fresh_dir("eval");
    const int N = 32;
    VolumeHU ref = random_volume(N, 210, -600, 900);
    ref.patient_id = "px";
    VolumeHU synth = ref;
    for (auto& v : synth.data) v = int16_t(v + 12);  // constant error inside the window

    const auto rep = pipeline::run_eval(ref, synth, dir.string(), "unit");
    CHECK(!rep.per_slice.empty());
    CHECK(std::isfinite(rep.mae.mean));
    CHECK(rep.mae.mean > 0);
    REQUIRE(fs::exists(dir / "unit_report.csv"));
    REQUIRE(fs::exists(dir / "unit_report.json"));

    std::ifstream jf(dir / "unit_report.json");
    const json j = json::parse(jf);
    CHECK(j.at("n_slices") == rep.per_slice.size());
    CHECK(j.at("over_slices").at("mae_pct").at("mean") == doctest::Approx(rep.mae.mean));

    std::ifstream cf(dir / "unit_report.csv");
    std::string header;
    std::getline(cf, header);
    CHECK(header == "patient,slice,mae_pct,psnr_db,ssim,psnr_capped");
    size_t rows = 0;
    for (std::string line; std::getline(cf, line);) rows += !line.empty();
    CHECK(rows == rep.per_slice.size());
}
