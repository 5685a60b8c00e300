#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "artinp/nifti.hpp"
#include "artinp/phantom.hpp"
#include "artinp/volume.hpp"
#include "doctest.h"

using namespace artinp;

namespace {

phantom::PhantomSpec small_spec() {
    phantom::PhantomSpec spec;
    spec.nx = spec.ny = spec.nz = 64;
    spec.n_patients = 3;
    spec.seed = 77;
    return spec;
}

std::array<double, 3> centroid(const std::vector<uint8_t>& mask, int nx, int ny, int nz) {
    double sx = 0, sy = 0, sz = 0, n = 0;
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x)
                if (mask[(size_t(z) * ny + y) * nx + x]) {
                    sx += x;
                    sy += y;
                    sz += z;
                    n += 1;
                }
    REQUIRE(n > 0);
    return {sx / n, sy / n, sz / n};
}

std::vector<uint8_t> threshold_mask(const VolumeHU& v, int16_t thr) {
    std::vector<uint8_t> m(size_t(v.count()), 0);
    for (int64_t i = 0; i < v.count(); ++i) m[size_t(i)] = v.data[size_t(i)] > thr ? 1 : 0;
    return m;
}

}  // namespace

TEST_CASE("phantom generation is deterministic per seed and patient") {
    const auto spec = small_spec();
    const auto a = phantom::generate_patient(spec, 1);
    const auto b = phantom::generate_patient(spec, 1);
    REQUIRE(a.ct.data == b.ct.data);
    REQUIRE(a.cbct.data == b.cbct.data);
    REQUIRE(a.bone == b.bone);
    CHECK(a.cx == b.cx);
    CHECK(a.az == b.az);

    // different patients differ
    const auto c = phantom::generate_patient(spec, 2);
    CHECK(a.ct.data != c.ct.data);
    CHECK(a.ct.patient_id == "ph001");
    CHECK(c.ct.patient_id == "ph002");
    CHECK(a.ct.modality == Modality::CT);
    CHECK(a.cbct.modality == Modality::CBCT);

    // different master seed differs
    auto spec2 = spec;
    spec2.seed = 78;
    CHECK(phantom::generate_patient(spec2, 1).ct.data != a.ct.data);
}

TEST_CASE("zero degradation makes the pseudo-CBCT bitwise equal to the CT") {
    auto spec = small_spec();
    spec.degradation.noise_sigma = 0;
    spec.degradation.bias_amplitude = 0;
    spec.degradation.streak_count = 0;
    const auto p = phantom::generate_patient(spec, 0);
    REQUIRE(p.cbct.data == p.ct.data);
}

TEST_CASE("default degradation perturbs the CBCT but keeps both volumes in the HU window") {
    auto spec = small_spec();
    const auto p = phantom::generate_patient(spec, 0);
    REQUIRE(p.cbct.data != p.ct.data);
    for (const int16_t v : p.ct.data) {
        REQUIRE(v >= kHuMin);
        REQUIRE(v <= kHuMax);
    }
    for (const int16_t v : p.cbct.data) {
        REQUIRE(v >= kHuMin);
        REQUIRE(v <= kHuMax);
    }

    // even absurd degradation stays clamped to the window
    spec.degradation.noise_sigma = 2000;
    const auto q = phantom::generate_patient(spec, 0);
    for (const int16_t v : q.cbct.data) {
        REQUIRE(v >= kHuMin);
        REQUIRE(v <= kHuMax);
    }
}

TEST_CASE("body mask of a central slice matches the analytic ellipsoid away from its rim") {
    const auto spec = small_spec();
    const auto p = phantom::generate_patient(spec, 0);
    const int z0 = int(std::lround(p.cz));
    const BodyMask bm = body_mask(axial_slice(p.ct, z0));
    REQUIRE(!bm.empty_flag);

    const auto inside = [&](int x, int y) {
        const double u = (x - p.cx) / p.ax, v = (y - p.cy) / p.ay, w = (z0 - p.cz) / p.az;
        return u * u + v * v + w * w <= 1.0;
    };
    int checked = 0;
    for (int y = 0; y < spec.ny; ++y)
        for (int x = 0; x < spec.nx; ++x) {
            // skip the 2-px band around the analytic boundary
            bool band = false;
            const bool in0 = inside(x, y);
            for (int dy = -2; dy <= 2 && !band; ++dy)
                for (int dx = -2; dx <= 2 && !band; ++dx) {
                    const int xx = std::clamp(x + dx, 0, spec.nx - 1);
                    const int yy = std::clamp(y + dy, 0, spec.ny - 1);
                    band = inside(xx, yy) != in0;
                }
            if (band) continue;
            ++checked;
            REQUIRE(bool(bm.mask[size_t(y) * spec.nx + x]) == in0);
        }
    CHECK(checked > spec.nx * spec.ny / 2);  // the band is thin
}

TEST_CASE("bone centroids of CT and pseudo-CBCT coincide") {
    const auto spec = small_spec();
    const auto p = phantom::generate_patient(spec, 1);
    const int16_t thr = int16_t((spec.soft_hu + spec.bone_hu) / 2);

    // in the clean CT, thresholding recovers exactly the rasterized bone region
    const auto ct_bone = threshold_mask(p.ct, thr);
    REQUIRE(ct_bone == p.bone);

    const auto c_ct = centroid(ct_bone, spec.nx, spec.ny, spec.nz);
    const auto c_cb = centroid(threshold_mask(p.cbct, thr), spec.nx, spec.ny, spec.nz);
    for (int k = 0; k < 3; ++k) CHECK(std::abs(c_ct[k] - c_cb[k]) < 0.5);
}

TEST_CASE("noise-only degradation reproduces the requested sigma in soft tissue") {
    auto spec = small_spec();
    spec.degradation.noise_sigma = 20;
    spec.degradation.bias_amplitude = 0;
    spec.degradation.streak_count = 0;
    const auto p = phantom::generate_patient(spec, 0);

    double sum = 0, sum2 = 0, n = 0;
    for (int z = 0; z < spec.nz; ++z)
        for (int y = 0; y < spec.ny; ++y)
            for (int x = 0; x < spec.nx; ++x) {
                const double u = (x - p.cx) / p.ax, v = (y - p.cy) / p.ay, w = (z - p.cz) / p.az;
                if (u * u + v * v + w * w > 0.8 * 0.8) continue;  // stay inside the body
                if (p.bone[(size_t(z) * spec.ny + y) * spec.nx + x]) continue;
                const double d = double(p.cbct.at(x, y, z)) - double(p.ct.at(x, y, z));
                sum += d;
                sum2 += d * d;
                n += 1;
            }
    REQUIRE(n > 1000);
    const double var = sum2 / n - (sum / n) * (sum / n);
    CHECK(std::sqrt(var) == doctest::Approx(20.0).epsilon(0.10));
}

TEST_CASE("degenerate sizes and indices are rejected") {
    auto spec = small_spec();
    spec.ny = 63;
    CHECK_THROWS_AS((void)phantom::generate_patient(spec, 0), std::invalid_argument);
    spec = small_spec();
    CHECK_THROWS_AS((void)phantom::generate_patient(spec, -1), std::invalid_argument);
    CHECK_THROWS_AS((void)phantom::generate_patient(spec, spec.n_patients), std::invalid_argument);
    spec.n_patients = 0;
    CHECK_THROWS_AS((void)phantom::generate(spec), std::invalid_argument);
}

TEST_CASE("write_dataset emits loadable volumes named by patient id") {
    auto spec = small_spec();
    spec.n_patients = 2;
    const auto dir = std::filesystem::temp_directory_path() / "artinp_phantom_test";
    std::filesystem::remove_all(dir);
    const auto ids = phantom::write_dataset(spec, dir.string());
    REQUIRE(ids == std::vector<std::string>{"ph000", "ph001"});

    const auto p = phantom::generate_patient(spec, 1);
    const VolumeHU ct = load_volume((dir / "ph001_ct.nii.gz").string());
    const VolumeHU cbct = load_volume((dir / "ph001_cbct.nii.gz").string());
    CHECK(ct.data == p.ct.data);
    CHECK(cbct.data == p.cbct.data);
    // the patient id lives in the filename, the modality in the header
    CHECK(ct.modality == Modality::CT);
    CHECK(cbct.modality == Modality::CBCT);
    std::filesystem::remove_all(dir);
}
