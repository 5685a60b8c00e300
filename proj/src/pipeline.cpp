#include "artinp/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <stdexcept>

#include "artinp/checkpoint.hpp"
#include "artinp/gaps.hpp"
#include "artinp/nifti.hpp"
#include "artinp/phantom.hpp"
#include "artinp/rng.hpp"
#include "artinp/tiff_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace artinp::pipeline {

namespace {

uint64_t fnv1a(std::string_view s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex16(uint64_t h) {
    char b[17];
    std::snprintf(b, sizeof(b), "%016llx", static_cast<unsigned long long>(h));
    return b;
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    return j;
}

void write_json(const std::string& path, const json& j) {
    fs::create_directories(fs::path(path).parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << '\n';
}

// Refuses to clobber a stage's outputs. The marker file's recorded hash
// distinguishes a same-config rerun from an output tree left by a different
// config; both need --force.
void refuse_overwrite(const std::string& marker, const std::string& hash, bool force,
                      const char* what) {
    if (force || !fs::exists(marker)) return;
    std::string prev = "unknown";
    try {
        prev = read_json(marker).value("config_hash", "unknown");
    } catch (...) {
    }
    if (prev == hash)
        throw std::runtime_error(std::string(what) + " outputs for config " + hash +
                                 " already exist (" + marker + "); pass --force to overwrite");
    throw std::runtime_error(std::string(what) + " outputs at " + marker + " were made by config " +
                             prev + ", not the current " + hash + "; pass --force to overwrite");
}

json load_manifest(const PipelineConfig& cfg) {
    const std::string path = manifest_path(cfg);
    if (!fs::exists(path))
        throw std::runtime_error("no manifest at " + path + "; run prepare-data first");
    return read_json(path);
}

void require_hash(const json& j, const std::string& hash, const std::string& what,
                  bool ignore = false) {
    const std::string got = j.value("config_hash", "");
    if (got != hash && !ignore)
        throw std::runtime_error(what + " carries config hash " + got +
                                 " but the current config hashes to " + hash);
}

std::string slice_path(const PipelineConfig& cfg, Modality mod, const std::string& id, Plane p,
                       int idx) {
    std::string m = to_string(mod);
    std::transform(m.begin(), m.end(), m.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    char buf[32];
    std::snprintf(buf, sizeof(buf), "_%s_%04d.tiff", to_string(p), idx);
    return cfg.out_root + "/slices/" + m + "/" + id + buf;
}

std::string volume_path(const PipelineConfig& cfg, const json& manifest, const std::string& id,
                        const char* key) {
    return cfg.data_root + "/" + manifest.at("patients").at(id).at(key).get<std::string>();
}

uint64_t effective_seed(uint64_t field, uint64_t master, const char* tag) {
    return field != 0 ? field : (fnv1a(tag) ^ (master * 0x9e3779b97f4a7c15ull + 1));
}

CropGeometry crop_from_json(const json& j) {
    CropGeometry g;
    g.row_off = j.at("row_off").get<int>();
    g.col_off = j.at("col_off").get<int>();
    g.full_rows = j.at("full_rows").get<int>();
    g.full_cols = j.at("full_cols").get<int>();
    g.size = j.at("size").get<int>();
    return g;
}

json crop_to_json(const CropGeometry& g) {
    return json{{"row_off", g.row_off},
                {"col_off", g.col_off},
                {"full_rows", g.full_rows},
                {"full_cols", g.full_cols},
                {"size", g.size}};
}

// Slice stores for the two trainings. Completion consumes UNIT01 sagittal
// crops; translation consumes SIGNED11 axial slices.
train::PairedSlices load_pairs(const PipelineConfig& cfg, const json& manifest,
                               const std::vector<std::string>& ids, Plane plane, Domain domain) {
    train::PairedSlices out;
    for (const auto& id : ids) {
        const json& p = manifest.at("patients").at(id);
        const int count = plane == Plane::Sagittal ? p.at("nx").get<int>() : p.at("nz").get<int>();
        for (int i = 0; i < count; ++i) {
            SliceImage cb = load_slice_tiff(slice_path(cfg, Modality::CBCT, id, plane, i));
            SliceImage ct = load_slice_tiff(slice_path(cfg, Modality::CT, id, plane, i));
            cb.plane = ct.plane = plane;
            cb.index = ct.index = i;
            out.cbct.push_back(normalize(cb, domain));
            out.ct.push_back(normalize(ct, domain));
            out.patient.push_back(id);
        }
    }
    return out;
}

}  // namespace

// ---- configuration ----------------------------------------------------------

json to_json(const PipelineConfig& c) {
    return json{
        {"data_root", c.data_root},
        {"out_root", c.out_root},
        {"seed", c.seed},
        {"n_val", c.n_val},
        {"n_test", c.n_test},
        {"gap", {{"min_w", c.gap.min_w}, {"max_w", c.gap.max_w}, {"seed", c.gap.seed}}},
        {"completion",
         {{"phase1_iters", c.completion.phase1_iters},
          {"phase2_iters", c.completion.phase2_iters},
          {"phase3_iters", c.completion.phase3_iters},
          {"alpha", c.completion.alpha},
          {"l1_recon", c.completion.l1_recon},
          {"checkpoint_every", c.completion.checkpoint_every},
          {"val_every", c.completion.val_every},
          {"input_size", c.completion.input_size},
          {"local_size", c.completion.local_size},
          {"base", c.completion.base},
          {"seed", c.completion.seed},
          {"max_val_slices", c.completion.max_val_slices}}},
        {"translation",
         {{"epochs", c.translation.epochs},
          {"lr", c.translation.lr},
          {"beta1", c.translation.beta1},
          {"beta2", c.translation.beta2},
          {"lambda", c.translation.lambda},
          {"checkpoint_every_epochs", c.translation.checkpoint_every_epochs},
          {"input_size", c.translation.input_size},
          {"base", c.translation.base},
          {"depth", c.translation.depth},
          {"disc_base", c.translation.disc_base},
          {"conditional", c.translation.conditional},
          {"seed", c.translation.seed},
          {"max_val_slices", c.translation.max_val_slices},
          {"max_slices_per_epoch", c.translation.max_slices_per_epoch}}},
        {"mode", c.mode}};
}

PipelineConfig config_from_json(const json& j) {
    PipelineConfig c;
    c.data_root = j.value("data_root", c.data_root);
    c.out_root = j.value("out_root", c.out_root);
    c.seed = j.value("seed", c.seed);
    c.n_val = j.value("n_val", c.n_val);
    c.n_test = j.value("n_test", c.n_test);
    if (j.contains("gap")) {
        const json& g = j.at("gap");
        c.gap.min_w = g.value("min_w", c.gap.min_w);
        c.gap.max_w = g.value("max_w", c.gap.max_w);
        c.gap.seed = g.value("seed", c.gap.seed);
    }
    if (j.contains("completion")) {
        const json& t = j.at("completion");
        c.completion.phase1_iters = t.value("phase1_iters", c.completion.phase1_iters);
        c.completion.phase2_iters = t.value("phase2_iters", c.completion.phase2_iters);
        c.completion.phase3_iters = t.value("phase3_iters", c.completion.phase3_iters);
        c.completion.alpha = t.value("alpha", c.completion.alpha);
        c.completion.l1_recon = t.value("l1_recon", c.completion.l1_recon);
        c.completion.checkpoint_every = t.value("checkpoint_every", c.completion.checkpoint_every);
        c.completion.val_every = t.value("val_every", c.completion.val_every);
        c.completion.input_size = t.value("input_size", c.completion.input_size);
        c.completion.local_size = t.value("local_size", c.completion.local_size);
        c.completion.base = t.value("base", c.completion.base);
        c.completion.seed = t.value("seed", c.completion.seed);
        c.completion.max_val_slices = t.value("max_val_slices", c.completion.max_val_slices);
    }
    if (j.contains("translation")) {
        const json& t = j.at("translation");
        c.translation.epochs = t.value("epochs", c.translation.epochs);
        c.translation.lr = t.value("lr", c.translation.lr);
        c.translation.beta1 = t.value("beta1", c.translation.beta1);
        c.translation.beta2 = t.value("beta2", c.translation.beta2);
        c.translation.lambda = t.value("lambda", c.translation.lambda);
        c.translation.checkpoint_every_epochs =
            t.value("checkpoint_every_epochs", c.translation.checkpoint_every_epochs);
        c.translation.input_size = t.value("input_size", c.translation.input_size);
        c.translation.base = t.value("base", c.translation.base);
        c.translation.depth = t.value("depth", c.translation.depth);
        c.translation.disc_base = t.value("disc_base", c.translation.disc_base);
        c.translation.conditional = t.value("conditional", c.translation.conditional);
        c.translation.seed = t.value("seed", c.translation.seed);
        c.translation.max_val_slices = t.value("max_val_slices", c.translation.max_val_slices);
        c.translation.max_slices_per_epoch =
            t.value("max_slices_per_epoch", c.translation.max_slices_per_epoch);
    }
    c.mode = j.value("mode", c.mode);
    if (c.mode != "full" && c.mode != "no-completion")
        throw std::runtime_error("mode must be \"full\" or \"no-completion\", got \"" + c.mode +
                                 "\"");
    return c;
}

void apply_env_overrides(json& j) {
    std::function<void(json&, const std::string&)> walk = [&](json& node, const std::string& path) {
        if (node.is_object()) {
            for (auto& [key, child] : node.items()) {
                std::string up = key;
                std::transform(up.begin(), up.end(), up.begin(),
                               [](unsigned char c) { return char(std::toupper(c)); });
                walk(child, path + "_" + up);
            }
            return;
        }
        const char* v = std::getenv(path.c_str());
        if (!v) return;
        const std::string s(v);
        try {
            if (node.is_boolean())
                node = (s == "1" || s == "true" || s == "yes");
            else if (node.is_number_unsigned())
                node = std::stoull(s);
            else if (node.is_number_integer())
                node = std::stoll(s);
            else if (node.is_number_float())
                node = std::stod(s);
            else
                node = s;
        } catch (const std::exception&) {
            throw std::runtime_error("environment override " + path + "=" + s +
                                     " is not a valid value");
        }
    };
    walk(j, "ARTINP");
}

PipelineConfig load_config(const std::string& path) {
    json j = to_json(PipelineConfig{});
    if (!path.empty()) {
        const json file = read_json(path);
        j.merge_patch(file);
    }
    apply_env_overrides(j);
    return config_from_json(j);
}

std::string config_hash(const PipelineConfig& cfg) {
    json j = to_json(cfg);
    j.erase("mode");  // both modes of one experiment share artifacts up to inference
    return hex16(fnv1a(j.dump()));
}

std::string manifest_path(const PipelineConfig& cfg) { return cfg.out_root + "/manifest.json"; }
std::string gaps_dir(const PipelineConfig& cfg) { return cfg.out_root + "/gaps"; }
std::string ckpt_dir(const PipelineConfig& cfg, const std::string& net) {
    return cfg.out_root + "/ckpt/" + net;
}
std::string infer_dir(const PipelineConfig& cfg) { return cfg.out_root + "/infer/" + cfg.mode; }
std::string eval_dir(const PipelineConfig& cfg) { return cfg.out_root + "/eval/" + cfg.mode; }

// ---- phantom -------------------------------------------------------------------

void cmd_phantom(const PipelineConfig& cfg, int patients, int size, uint64_t seed,
                 const std::string& out_dir, bool force) {
    const std::string dir = out_dir.empty() ? cfg.data_root : out_dir;
    const std::string hash = config_hash(cfg);
    refuse_overwrite(dir + "/phantom.json", hash, force, "phantom");
    phantom::PhantomSpec spec;
    spec.nx = spec.ny = spec.nz = size;
    spec.n_patients = patients;
    spec.seed = seed;
    const std::vector<std::string> ids = phantom::write_dataset(spec, dir);
    write_json(dir + "/phantom.json", json{{"config_hash", hash},
                                           {"patients", patients},
                                           {"size", size},
                                           {"seed", seed},
                                           {"ids", ids}});
}

// ---- prepare-data ----------------------------------------------------------------

void cmd_prepare_data(const PipelineConfig& cfg, bool force) {
    const std::string hash = config_hash(cfg);
    refuse_overwrite(manifest_path(cfg), hash, force, "prepare-data");

    // Discover <id>_ct.nii[.gz] / <id>_cbct.nii[.gz] pairs.
    std::vector<std::pair<std::string, std::string>> found;  // id, ct filename
    if (!fs::is_directory(cfg.data_root))
        throw std::runtime_error("data root " + cfg.data_root + " is not a directory");
    for (const auto& e : fs::directory_iterator(cfg.data_root)) {
        const std::string name = e.path().filename().string();
        const size_t pos = name.find("_ct.nii");
        if (pos == std::string::npos) continue;
        found.emplace_back(name.substr(0, pos), name);
    }
    std::sort(found.begin(), found.end());
    std::vector<std::string> ids;
    json patients = json::object();
    for (const auto& [id, ct_name] : found) {
        std::string cbct_name = ct_name;
        cbct_name.replace(cbct_name.find("_ct.nii"), 3, "_cbct");
        if (!fs::exists(cfg.data_root + "/" + cbct_name))
            throw std::runtime_error("patient " + id + " has " + ct_name + " but no " + cbct_name);
        ids.push_back(id);
        patients[id] = json{{"ct", ct_name}, {"cbct", cbct_name}};
    }
    if (ids.empty())
        throw std::runtime_error("no patients under " + cfg.data_root +
                                 " (expected <id>_ct.nii[.gz] / <id>_cbct.nii[.gz] pairs)");

    const DatasetSplit split = (cfg.n_val >= 0 && cfg.n_test >= 0)
                                   ? make_split(ids, cfg.seed, cfg.n_val, cfg.n_test)
                                   : make_split(ids, cfg.seed);
    const auto in_split = [&](const std::vector<std::string>& v, const std::string& id) {
        return std::find(v.begin(), v.end(), id) != v.end();
    };

    const int S = cfg.completion.input_size;
    int axial_h = -1, axial_w = -1;
    double fill_acc = 0;
    int64_t fill_n = 0;
    int64_t n_sag[2] = {0, 0}, n_ax[2] = {0, 0};  // train, val
    int64_t test_axial = 0;

    for (const auto& id : ids) {
        VolumeHU ct = load_volume(volume_path(cfg, json{{"patients", patients}}, id, "ct"));
        VolumeHU cbct = load_volume(volume_path(cfg, json{{"patients", patients}}, id, "cbct"));
        if (ct.nx != cbct.nx || ct.ny != cbct.ny || ct.nz != cbct.nz)
            throw std::runtime_error("patient " + id + ": CT and CBCT volume shapes differ");
        if (axial_h < 0) {
            axial_h = ct.ny;
            axial_w = ct.nx;
        } else if (axial_h != ct.ny || axial_w != ct.nx) {
            throw std::runtime_error("axial slice sizes differ across patients (" + id + ")");
        }
        const CropGeometry g = sagittal_crop_geometry(cbct, S);
        patients[id]["nx"] = ct.nx;
        patients[id]["ny"] = ct.ny;
        patients[id]["nz"] = ct.nz;
        patients[id]["crop"] = crop_to_json(g);

        const bool is_train = in_split(split.train_ids, id);
        const bool is_val = in_split(split.val_ids, id);
        if (is_train) {
            for (const int16_t v : cbct.data) fill_acc += v;
            fill_n += cbct.count();
        }
        if (!is_train && !is_val) {
            test_axial += ct.nz;
            continue;  // test patients stay as volumes; inference slices them
        }
        const int bucket = is_train ? 0 : 1;
        CropGeometry gg;
        for (const auto* pv : {&ct, &cbct}) {
            const Modality mod = pv == &ct ? Modality::CT : Modality::CBCT;
            const std::vector<SliceImage> sag = extract_sagittal(*pv, S, &gg);
            for (size_t i = 0; i < sag.size(); ++i)
                save_slice_tiff(slice_path(cfg, mod, id, Plane::Sagittal, int(i)), sag[i]);
            const std::vector<SliceImage> ax = extract_axial(*pv);
            for (size_t i = 0; i < ax.size(); ++i)
                save_slice_tiff(slice_path(cfg, mod, id, Plane::Axial, int(i)), ax[i]);
        }
        n_sag[bucket] += ct.nx;
        n_ax[bucket] += ct.nz;
    }
    if (fill_n == 0) throw std::runtime_error("train split is empty; cannot derive the gap fill");
    const int fill_hu = int(std::lround(fill_acc / double(fill_n)));

    write_json(manifest_path(cfg),
               json{{"config_hash", hash},
                    {"seed", cfg.seed},
                    {"fill_hu", fill_hu},
                    {"sagittal_size", S},
                    {"axial", {axial_h, axial_w}},
                    {"split",
                     {{"train", split.train_ids},
                      {"val", split.val_ids},
                      {"test", split.test_ids},
                      {"seed", split.seed}}},
                    {"patients", patients},
                    {"counts",
                     {{"train_sagittal", n_sag[0]},
                      {"val_sagittal", n_sag[1]},
                      {"train_axial", n_ax[0]},
                      {"val_axial", n_ax[1]},
                      {"test_axial_slices", test_axial}}}});
}

// ---- make-gaps -------------------------------------------------------------------

void cmd_make_gaps(const PipelineConfig& cfg, bool force) {
    const std::string hash = config_hash(cfg);
    const json manifest = load_manifest(cfg);
    require_hash(manifest, hash, "manifest " + manifest_path(cfg));
    refuse_overwrite(gaps_dir(cfg) + "/gaps.json", hash, force, "make-gaps");

    const int16_t fill_hu = int16_t(manifest.at("fill_hu").get<int>());
    const GapWidths widths{cfg.gap.min_w, cfg.gap.max_w};
    json entries = json::object();
    for (const auto& idj : manifest.at("split").at("test")) {
        const std::string id = idj.get<std::string>();
        VolumeHU cbct = load_volume(volume_path(cfg, manifest, id, "cbct"));
        cbct.patient_id = id;
        const CropGeometry g = crop_from_json(manifest.at("patients").at(id).at("crop"));
        const uint64_t seed = fnv1a(id) ^ cfg.gap.seed ^ (cfg.seed * 0x9e3779b97f4a7c15ull);
        const PatientGap pg =
            patient_gap(cbct, seed, fill_hu, g.col_off, g.col_off + g.size, widths);

        VolumeHU gapped = pg.gapped;
        gapped.note = hash;
        save_volume(gaps_dir(cfg) + "/" + id + "_cbct_gapped.nii.gz", gapped);
        VolumeHU mask(cbct.nx, cbct.ny, cbct.nz, 0);
        mask.patient_id = id;
        mask.modality = Modality::CBCT;
        mask.note = hash;
        for (size_t i = 0; i < pg.mask.size(); ++i) mask.data[i] = pg.mask[i];
        save_volume(gaps_dir(cfg) + "/" + id + "_gapmask.nii.gz", mask);
        entries[id] = json{{"x_start", pg.spec.x_start},
                           {"width", pg.spec.width},
                           {"seed", seed}};
    }
    write_json(gaps_dir(cfg) + "/gaps.json",
               json{{"config_hash", hash}, {"fill_hu", fill_hu}, {"patients", entries}});
}

// ---- training --------------------------------------------------------------------

train::CompletionTrainReport cmd_train_completion(const PipelineConfig& cfg, bool force) {
    const std::string hash = config_hash(cfg);
    const json manifest = load_manifest(cfg);
    require_hash(manifest, hash, "manifest " + manifest_path(cfg));
    const std::string dir = ckpt_dir(cfg, "completion");
    refuse_overwrite(dir + "/report.json", hash, force, "train-completion");

    const auto ids = [&](const char* key) {
        return manifest.at("split").at(key).get<std::vector<std::string>>();
    };
    const train::PairedSlices tr =
        load_pairs(cfg, manifest, ids("train"), Plane::Sagittal, Domain::UNIT01);
    const train::PairedSlices va =
        load_pairs(cfg, manifest, ids("val"), Plane::Sagittal, Domain::UNIT01);

    train::CompletionTrainConfig tc;
    tc.phase1_iters = cfg.completion.phase1_iters;
    tc.phase2_iters = cfg.completion.phase2_iters;
    tc.phase3_iters = cfg.completion.phase3_iters;
    tc.alpha = cfg.completion.alpha;
    tc.l1_recon = cfg.completion.l1_recon;
    tc.checkpoint_every = cfg.completion.checkpoint_every;
    tc.val_every = cfg.completion.val_every;
    tc.input_size = cfg.completion.input_size;
    tc.local_size = cfg.completion.local_size;
    tc.base = cfg.completion.base;
    tc.gap = GapWidths{cfg.gap.min_w, cfg.gap.max_w};
    tc.fill_value = hu_to_unit(manifest.at("fill_hu").get<int>());
    tc.seed = effective_seed(cfg.completion.seed, cfg.seed, "completion");
    tc.out_dir = dir;
    tc.config_hash = hash;
    tc.max_val_slices = cfg.completion.max_val_slices;

    const train::CompletionTrainReport rep = train::train_completion(tr, va, tc);
    json vh = json::array();
    for (const auto& v : rep.val_history) vh.push_back({{"iteration", v.iteration}, {"value", v.value}});
    write_json(dir + "/report.json", json{{"config_hash", hash},
                                          {"best_checkpoint", rep.best_checkpoint},
                                          {"checkpoints", rep.checkpoints},
                                          {"val_history", vh},
                                          {"total_iters", rep.total_iters},
                                          {"log_csv", rep.log_csv}});
    return rep;
}

train::TranslationTrainReport cmd_train_translation(const PipelineConfig& cfg, bool force) {
    const std::string hash = config_hash(cfg);
    const json manifest = load_manifest(cfg);
    require_hash(manifest, hash, "manifest " + manifest_path(cfg));
    const std::string dir = ckpt_dir(cfg, "translation");
    refuse_overwrite(dir + "/report.json", hash, force, "train-translation");

    const int ah = manifest.at("axial").at(0).get<int>();
    const int aw = manifest.at("axial").at(1).get<int>();
    int size = cfg.translation.input_size;
    if (size == 0) {
        if (ah != aw)
            throw std::runtime_error("axial slices are " + std::to_string(ah) + "x" +
                                     std::to_string(aw) + "; set translation.input_size");
        size = ah;
    }

    const auto ids = [&](const char* key) {
        return manifest.at("split").at(key).get<std::vector<std::string>>();
    };
    const train::PairedSlices tr =
        load_pairs(cfg, manifest, ids("train"), Plane::Axial, Domain::SIGNED11);
    const train::PairedSlices va =
        load_pairs(cfg, manifest, ids("val"), Plane::Axial, Domain::SIGNED11);

    train::TranslationTrainConfig tc;
    tc.epochs = cfg.translation.epochs;
    tc.lr = cfg.translation.lr;
    tc.beta1 = cfg.translation.beta1;
    tc.beta2 = cfg.translation.beta2;
    tc.lambda = cfg.translation.lambda;
    tc.checkpoint_every_epochs = cfg.translation.checkpoint_every_epochs;
    tc.input_size = size;
    tc.base = cfg.translation.base;
    tc.depth = cfg.translation.depth;
    tc.disc_base = cfg.translation.disc_base;
    tc.conditional = cfg.translation.conditional;
    tc.seed = effective_seed(cfg.translation.seed, cfg.seed, "translation");
    tc.out_dir = dir;
    tc.config_hash = hash;
    tc.max_val_slices = cfg.translation.max_val_slices;
    tc.max_slices_per_epoch = cfg.translation.max_slices_per_epoch;

    const train::TranslationTrainReport rep = train::train_translation(tr, va, tc);
    json vh = json::array();
    for (const auto& v : rep.val_history) vh.push_back({{"epoch", v.iteration}, {"value", v.value}});
    write_json(dir + "/report.json", json{{"config_hash", hash},
                                          {"best_checkpoint", rep.best_checkpoint},
                                          {"checkpoints", rep.checkpoints},
                                          {"val_history", vh},
                                          {"total_iters", rep.total_iters},
                                          {"log_csv", rep.log_csv}});
    return rep;
}

// ---- inference -------------------------------------------------------------------

InferenceResult run_inference(const PipelineConfig& cfg, const VolumeHU& cbct_gapped,
                              const VolumeHU& planning_ct, const std::vector<uint8_t>& gap_mask,
                              completion::CompletionGenerator* comp,
                              translation::UNetGenerator& trans) {
    if (cbct_gapped.nx != planning_ct.nx || cbct_gapped.ny != planning_ct.ny ||
        cbct_gapped.nz != planning_ct.nz)
        throw std::invalid_argument("run_inference: CBCT and planning CT are misaligned");
    if (!gap_mask.empty() && int64_t(gap_mask.size()) != cbct_gapped.count())
        throw std::invalid_argument("run_inference: gap mask does not match the volume");
    if (cbct_gapped.ny != trans.input_size() || cbct_gapped.nx != trans.input_size())
        throw std::invalid_argument(
            "run_inference: axial slices are " + std::to_string(cbct_gapped.ny) + "x" +
            std::to_string(cbct_gapped.nx) + " but the translation network expects " +
            std::to_string(trans.input_size()) + "x" + std::to_string(trans.input_size()));

    InferenceResult res;
    if (cfg.mode == "full") {
        if (!comp)
            throw std::invalid_argument("run_inference: completion checkpoint missing in full mode");
        const int S = cfg.completion.input_size;
        const CropGeometry g = sagittal_crop_geometry(cbct_gapped, S);
        const int nx = cbct_gapped.nx, ny = cbct_gapped.ny;
        std::vector<SliceImage> crops(static_cast<size_t>(nx));

        const auto complete_one = [&](int x) {
            const SliceImage crop_hu = crop_slice(sagittal_slice(cbct_gapped, x), g);
            GapMask m;
            m.h = S;
            m.w = S;
            m.mask.assign(size_t(S) * S, 0);
            if (!gap_mask.empty()) {
                for (int r = 0; r < S; ++r)
                    for (int c = 0; c < S; ++c) {
                        const int y = g.row_off + r, z = g.col_off + c;
                        m.mask[size_t(r) * S + c] = gap_mask[(size_t(z) * ny + y) * nx + x];
                    }
            }
            if (m.count() == 0) {
                crops[size_t(x)] = crop_hu;  // nothing to complete in this slice
                crops[size_t(x)].index = x;
                return;
            }
            const SliceImage gapped_u = normalize(crop_hu, Domain::UNIT01);
            const SliceImage ct_u =
                normalize(crop_slice(sagittal_slice(planning_ct, x), g), Domain::UNIT01);
            const Tensor xin = completion::make_input(ct_u, gapped_u, m);
            SliceImage gen(S, S, Domain::UNIT01, Plane::Sagittal, x);
            gen.pixels = comp->forward(xin, nullptr, false);
            gen.pixels.reshape({S, S});
            crops[size_t(x)] = denormalize(completion::inpaint_slice(gen, gapped_u, m));
            crops[size_t(x)].index = x;
        };

        // Slices fan out over threads; each writes only its own slot, so the
        // collected result is deterministic regardless of schedule.
        std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
        for (int x = 0; x < nx; ++x) {
            try {
                complete_one(x);
            } catch (...) {
#pragma omp critical
                if (!err) err = std::current_exception();
            }
        }
        if (err) std::rethrow_exception(err);
        res.inpainted = stack_sagittal(crops, g, cbct_gapped);
    } else {
        res.inpainted = cbct_gapped;  // ablation: translation sees the raw CBCT
    }
    res.inpainted.modality = Modality::sCBCT;

    const int nz = res.inpainted.nz;
    std::vector<SliceImage> ax(static_cast<size_t>(nz));
#pragma omp parallel for schedule(dynamic)
    for (int z = 0; z < nz; ++z) {
        ax[size_t(z)] = translate_slice(trans, axial_slice(res.inpainted, z));
        ax[size_t(z)].index = z;
    }
    res.sct = stack_axial(ax, res.inpainted);
    res.sct.modality = Modality::sCT;
    return res;
}

void cmd_infer(const PipelineConfig& cfg, std::string completion_ckpt,
               std::string translation_ckpt, bool force) {
    const std::string hash = config_hash(cfg);
    const json manifest = load_manifest(cfg);
    require_hash(manifest, hash, "manifest " + manifest_path(cfg));
    const json gaps = read_json(gaps_dir(cfg) + "/gaps.json");
    require_hash(gaps, hash, "gap stage " + gaps_dir(cfg) + "/gaps.json");
    refuse_overwrite(infer_dir(cfg) + "/run.json", hash, force, "infer");

    const bool full = cfg.mode == "full";
    if (!full && !completion_ckpt.empty())
        throw std::runtime_error("--completion-ckpt is not used in no-completion mode");
    if (full) {
        if (completion_ckpt.empty())
            completion_ckpt = ckpt_dir(cfg, "completion") + "/completion_best.ckpt";
        if (!fs::exists(completion_ckpt))
            throw std::runtime_error("completion checkpoint not found at " + completion_ckpt +
                                     "; pass --completion-ckpt or run train-completion");
    }
    if (translation_ckpt.empty())
        translation_ckpt = ckpt_dir(cfg, "translation") + "/translation_best.ckpt";
    if (!fs::exists(translation_ckpt))
        throw std::runtime_error("translation checkpoint not found at " + translation_ckpt +
                                 "; pass --translation-ckpt or run train-translation");

    translation::UNetGenerator trans = train::load_translation_generator(translation_ckpt);
    std::unique_ptr<completion::CompletionGenerator> comp;
    if (full)
        comp = std::make_unique<completion::CompletionGenerator>(
            train::load_completion_generator(completion_ckpt));

    json done = json::array();
    for (const auto& idj : manifest.at("split").at("test")) {
        const std::string id = idj.get<std::string>();
        const VolumeHU gapped = load_volume(gaps_dir(cfg) + "/" + id + "_cbct_gapped.nii.gz");
        const VolumeHU maskv = load_volume(gaps_dir(cfg) + "/" + id + "_gapmask.nii.gz");
        const VolumeHU ct = load_volume(volume_path(cfg, manifest, id, "ct"));
        std::vector<uint8_t> mask(maskv.data.size());
        for (size_t i = 0; i < mask.size(); ++i) mask[i] = maskv.data[i] != 0;

        InferenceResult r = run_inference(cfg, gapped, ct, mask, comp.get(), trans);
        r.inpainted.patient_id = r.sct.patient_id = id;
        r.inpainted.note = r.sct.note = hash;
        save_volume(infer_dir(cfg) + "/" + id + "_scbct.nii.gz", r.inpainted);
        save_volume(infer_dir(cfg) + "/" + id + "_sct.nii.gz", r.sct);
        done.push_back(id);
    }
    write_json(infer_dir(cfg) + "/run.json",
               json{{"config_hash", hash},
                    {"mode", cfg.mode},
                    {"patients", done},
                    {"completion_ckpt", full ? json(completion_ckpt) : json(nullptr)},
                    {"translation_ckpt", translation_ckpt}});
}

// ---- evaluation ------------------------------------------------------------------

metrics::MetricReport run_eval(const VolumeHU& reference, const VolumeHU& synth,
                               const std::string& out_dir, const std::string& tag) {
    const metrics::MetricReport r = metrics::evaluate_pair(reference, synth);
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        metrics::write_report_csv(out_dir + "/" + tag + "_report.csv", r);
        metrics::write_report_json(out_dir + "/" + tag + "_report.json", r);
    }
    return r;
}

std::string cmd_evaluate(const PipelineConfig& cfg, bool ignore_hash, bool force) {
    const std::string hash = config_hash(cfg);
    const json manifest = load_manifest(cfg);
    require_hash(manifest, hash, "manifest " + manifest_path(cfg), ignore_hash);

    std::vector<std::string> modes;
    for (const char* m : {"full", "no-completion"})
        if (fs::exists(cfg.out_root + "/infer/" + std::string(m) + "/run.json"))
            modes.emplace_back(m);
    if (modes.empty())
        throw std::runtime_error("no inference outputs under " + cfg.out_root +
                                 "/infer; run infer first");

    const int64_t expected_axial = manifest.at("counts").at("test_axial_slices").get<int64_t>();
    std::string summary;
    json modes_json = json::object();
    for (const std::string& m : modes) {
        PipelineConfig mc = cfg;
        mc.mode = m;
        refuse_overwrite(eval_dir(mc) + "/report.json", hash, force, "evaluate");
        std::vector<metrics::MetricReport> parts;
        int64_t axial_seen = 0;
        for (const auto& idj : manifest.at("split").at("test")) {
            const std::string id = idj.get<std::string>();
            const VolumeHU sct = load_volume(infer_dir(mc) + "/" + id + "_sct.nii.gz");
            if (sct.note != hash && !ignore_hash)
                throw std::runtime_error(id + "_sct.nii.gz carries config hash " + sct.note +
                                         " but the current config hashes to " + hash +
                                         "; pass --ignore-hash to evaluate anyway");
            VolumeHU ct = load_volume(volume_path(cfg, manifest, id, "ct"));
            ct.patient_id = id;
            parts.push_back(metrics::evaluate_pair(ct, sct));
            axial_seen += int64_t(parts.back().per_slice.size()) + parts.back().skipped_slices;
        }
        const metrics::MetricReport merged = metrics::merge_reports(parts);
        if (axial_seen != expected_axial)
            throw std::runtime_error("evaluated " + std::to_string(axial_seen) +
                                     " test-set axial slices but the manifest records " +
                                     std::to_string(expected_axial));
        fs::create_directories(eval_dir(mc));
        metrics::write_report_csv(eval_dir(mc) + "/report.csv", merged);
        metrics::write_report_json(eval_dir(mc) + "/report.json", merged);
        {
            // stamp provenance into the per-mode report
            json rj = read_json(eval_dir(mc) + "/report.json");
            rj["config_hash"] = hash;
            rj["mode"] = m;
            write_json(eval_dir(mc) + "/report.json", rj);
        }
        const metrics::PatientAggregates pa = metrics::patient_level(merged);
        modes_json[m] = json{
            {"slices",
             {{"mae_pct", {{"mean", merged.mae.mean}, {"sd", merged.mae.sd}}},
              {"psnr_db", {{"mean", merged.psnr.mean}, {"sd", merged.psnr.sd}}},
              {"ssim", {{"mean", merged.ssim_a.mean}, {"sd", merged.ssim_a.sd}}}}},
            {"patients",
             {{"mae_pct", {{"mean", pa.mae.mean}, {"sd", pa.mae.sd}}},
              {"psnr_db", {{"mean", pa.psnr.mean}, {"sd", pa.psnr.sd}}},
              {"ssim", {{"mean", pa.ssim_a.mean}, {"sd", pa.ssim_a.sd}}}}},
            {"axial_slices", axial_seen}};
        summary += "mode " + m + "\n" + metrics::table_summary(merged) + "\n";
    }
    write_json(cfg.out_root + "/eval/summary.json",
               json{{"config_hash", hash}, {"modes", modes_json}});
    return summary;
}

}  // namespace artinp::pipeline
