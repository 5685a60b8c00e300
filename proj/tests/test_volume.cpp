#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "artinp/nifti.hpp"
#include "artinp/rng.hpp"
#include "artinp/tiff_io.hpp"
#include "artinp/volume.hpp"

#include <doctest.h>

using namespace artinp;

namespace {

VolumeHU random_volume(int nx, int ny, int nz, uint64_t seed) {
    VolumeHU v(nx, ny, nz);
    Rng rng = make_rng(seed);
    for (auto& d : v.data) d = int16_t(rand_int(rng, kHuMin, kHuMax));
    return v;
}

std::filesystem::path temp_dir() {
    auto p = std::filesystem::temp_directory_path() / "artinp_test_volume";
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("normalization maps the HU window onto the unit intervals") {
    SliceImage lo(3, 3, Domain::HU16, Plane::Axial, 0);
    lo.pixels.fill(real(kHuMin));
    SliceImage hi(3, 3, Domain::HU16, Plane::Axial, 0);
    hi.pixels.fill(real(kHuMax));

    CHECK(normalize(lo, Domain::UNIT01).pixels[0] == 0.0);
    CHECK(normalize(hi, Domain::UNIT01).pixels[0] == 1.0);
    CHECK(normalize(lo, Domain::SIGNED11).pixels[0] == -1.0);
    CHECK(normalize(hi, Domain::SIGNED11).pixels[0] == 1.0);

    // midpoint of the window sits at 0 on the signed scale
    CHECK(hu_to_signed(1023.5) == doctest::Approx(0.0).epsilon(1e-12));

    CHECK_THROWS(normalize(normalize(lo, Domain::UNIT01), Domain::UNIT01));
    CHECK_THROWS(denormalize(lo));
}

TEST_CASE("normalize/denormalize round-trips every representable HU value") {
    for (int hu = kHuMin; hu <= kHuMax; ++hu) {
        CHECK(unit_to_hu(hu_to_unit(real(hu))) == hu);
        CHECK(signed_to_hu(hu_to_signed(real(hu))) == hu);
    }
    // arbitrary in-range reals land within half a quantum
    CHECK(unit_to_hu(0.5) == 1024);  // 0.5*4095 - 1024 = 1023.5, rounds away from zero
    CHECK(std::abs(real(unit_to_hu(0.31415)) - (0.31415 * kHuRange + kHuMin)) <= 0.5);

    SliceImage img(7, 9, Domain::HU16, Plane::Sagittal, 3);
    Rng rng = make_rng(42);
    for (int64_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = real(rand_int(rng, kHuMin, kHuMax));
    for (Domain d : {Domain::UNIT01, Domain::SIGNED11}) {
        SliceImage back = denormalize(normalize(img, d));
        CHECK(back.domain == Domain::HU16);
        CHECK(back.plane == img.plane);
        CHECK(back.index == img.index);
        for (int64_t i = 0; i < img.pixels.size(); ++i) CHECK(back.pixels[i] == img.pixels[i]);
    }
}

TEST_CASE("axial extract/stack round-trip is bit-exact") {
    const VolumeHU v = random_volume(15, 13, 11, 7);
    auto slices = extract_axial(v);
    REQUIRE(int(slices.size()) == v.nz);
    CHECK(slices[0].h() == v.ny);
    CHECK(slices[0].w() == v.nx);
    CHECK(slices[4].pixels.at(2, 3) == real(v.at(3, 2, 4)));
    const VolumeHU back = stack_axial(slices, v);
    CHECK(back.data == v.data);

    auto bad = slices;
    bad.pop_back();
    CHECK_THROWS(stack_axial(bad, v));
}

TEST_CASE("sagittal extract/stack with center-crop is bit-exact") {
    const VolumeHU v = random_volume(9, 50, 61, 8);
    CropGeometry g;
    auto slices = extract_sagittal(v, 48, &g);
    REQUIRE(int(slices.size()) == v.nx);
    CHECK(g.size == 48);
    CHECK(g.row_off == (50 - 48) / 2);
    CHECK(g.col_off == (61 - 48) / 2);
    CHECK(slices[0].h() == 48);
    CHECK(slices[0].w() == 48);
    // rows = y, cols = z
    CHECK(slices[5].pixels.at(10, 20) == real(v.at(5, g.row_off + 10, g.col_off + 20)));

    const VolumeHU back = stack_sagittal(slices, g, v);
    CHECK(back.data == v.data);

    // modifying a cropped slice only touches the crop window
    auto edited = slices;
    edited[2].pixels.fill(0.0);
    const VolumeHU patched = stack_sagittal(edited, g, v);
    for (int z = 0; z < v.nz; ++z)
        for (int y = 0; y < v.ny; ++y) {
            const bool in_crop = y >= g.row_off && y < g.row_off + 48 && z >= g.col_off &&
                                 z < g.col_off + 48;
            if (in_crop)
                CHECK(patched.at(2, y, z) == 0);
            else
                CHECK(patched.at(2, y, z) == v.at(2, y, z));
        }

    CHECK_THROWS_WITH_AS(extract_sagittal(random_volume(4, 30, 61, 1), 48, nullptr),
                         doctest::Contains("smaller than crop"), std::invalid_argument);
}

TEST_CASE("nifti save/load round-trip, plain and gzip") {
    const auto dir = temp_dir();
    for (const char* name : {"vol.nii", "vol.nii.gz"}) {
        VolumeHU v = random_volume(12, 10, 9, 3);
        v.modality = Modality::CT;
        const std::string path = (dir / name).string();
        save_volume(path, v);
        const VolumeHU r = load_volume(path);
        CHECK(r.nx == v.nx);
        CHECK(r.ny == v.ny);
        CHECK(r.nz == v.nz);
        CHECK(r.sx == doctest::Approx(1.0));
        CHECK(r.data == v.data);
        CHECK_FALSE(r.clamped);
    }
}

TEST_CASE("nifti load clamps out-of-window values and records the originals") {
    const auto dir = temp_dir();
    VolumeHU v = random_volume(6, 5, 4, 9);
    v.data[0] = 5000;   // outside the HU window on purpose
    v.data[1] = -2000;
    const std::string path = (dir / "clamp.nii").string();
    save_volume(path, v);
    const VolumeHU r = load_volume(path);
    CHECK(r.data[0] == kHuMax);
    CHECK(r.data[1] == kHuMin);
    CHECK(r.clamped);
    CHECK(r.orig_max == 5000.0);
    CHECK(r.orig_min == -2000.0);
}

TEST_CASE("nifti spacing validation") {
    const auto dir = temp_dir();
    VolumeHU v = random_volume(6, 5, 4, 9);
    v.sz = 3.0;
    const std::string path = (dir / "aniso.nii").string();
    save_volume(path, v);
    CHECK_THROWS_WITH_AS(load_volume(path), doctest::Contains("anisotropic"), std::runtime_error);
    LoadOptions lax;
    lax.strict_spacing = false;
    const VolumeHU r = load_volume(path, lax);
    CHECK(r.sz == doctest::Approx(3.0));
}

TEST_CASE("nifti rejects malformed files") {
    const auto dir = temp_dir();
    const std::string path = (dir / "bad.nii").string();
    save_volume(path, random_volume(6, 5, 4, 9));

    // patch dim[0] (offset 40) to claim a 2-D file
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(40);
        const int16_t two = 2;
        f.write(reinterpret_cast<const char*>(&two), 2);
    }
    CHECK_THROWS_WITH_AS(load_volume(path), doctest::Contains("not 3-D"), std::runtime_error);

    const std::string junk = (dir / "junk.nii").string();
    std::ofstream(junk, std::ios::binary) << "this is not a volume";
    CHECK_THROWS(load_volume(junk));
    CHECK_THROWS(load_volume((dir / "missing.nii").string()));
}

TEST_CASE("tiff slice round-trip is bit-exact") {
    const auto dir = temp_dir();
    SliceImage img(21, 17, Domain::HU16, Plane::Sagittal, 5);
    Rng rng = make_rng(12);
    for (int64_t i = 0; i < img.pixels.size(); ++i)
        img.pixels[i] = real(rand_int(rng, kHuMin, kHuMax));
    const std::string path = (dir / "slice.tiff").string();
    save_slice_tiff(path, img);
    const SliceImage r = load_slice_tiff(path);
    CHECK(r.h() == img.h());
    CHECK(r.w() == img.w());
    for (int64_t i = 0; i < img.pixels.size(); ++i) CHECK(r.pixels[i] == img.pixels[i]);

    SliceImage unit = normalize(img, Domain::UNIT01);
    CHECK_THROWS(save_slice_tiff((dir / "bad.tiff").string(), unit));
    CHECK_THROWS(load_slice_tiff((dir / "missing.tiff").string()));
}

TEST_CASE("body mask: threshold, largest component, closing") {
    // all-air slice: empty mask, flagged
    SliceImage air(32, 32, Domain::HU16, Plane::Axial, 0);
    air.pixels.fill(real(kHuMin));
    const BodyMask empty = body_mask(air);
    CHECK(empty.empty_flag);
    CHECK(empty.count() == 0);

    // disk of soft tissue on air: mask equals the thresholded disk
    SliceImage disk(40, 40, Domain::HU16, Plane::Axial, 0);
    disk.pixels.fill(real(kHuMin));
    auto in_disk = [](int y, int x) {
        const int dy = y - 20, dx = x - 20;
        return dy * dy + dx * dx <= 10 * 10;
    };
    for (int y = 0; y < 40; ++y)
        for (int x = 0; x < 40; ++x)
            if (in_disk(y, x)) disk.pixels.at(y, x) = 0.0;
    const BodyMask m = body_mask(disk);
    CHECK_FALSE(m.empty_flag);
    for (int y = 0; y < 40; ++y)
        for (int x = 0; x < 40; ++x) CHECK(m.at(y, x) == (in_disk(y, x) ? 1 : 0));
    CHECK(m.method_tag == "thr>-500;lcc8;close_r3;lcc8");

    // a 1-px hole is closed
    SliceImage holed = disk;
    holed.pixels.at(20, 20) = real(kHuMin);
    const BodyMask mh = body_mask(holed);
    CHECK(mh.at(20, 20) == 1);
    CHECK(mh.count() == m.count());

    // a small distant speck loses to the main component
    SliceImage speck = disk;
    speck.pixels.at(2, 2) = 500.0;
    const BodyMask ms = body_mask(speck);
    CHECK(ms.at(2, 2) == 0);
    CHECK(ms.count() == m.count());

    // background-value changes below threshold do not affect the mask
    SliceImage warmer = disk;
    for (int y = 0; y < 40; ++y)
        for (int x = 0; x < 40; ++x)
            if (!in_disk(y, x)) warmer.pixels.at(y, x) = -800.0;
    const BodyMask mw = body_mask(warmer);
    CHECK(mw.mask == m.mask);
}

TEST_CASE("patient-wise splits") {
    std::vector<std::string> ids;
    for (int i = 0; i < 180; ++i) ids.push_back("pat" + std::to_string(i));

    const DatasetSplit s = make_split(ids, 7);
    CHECK(s.train_ids.size() == 144);
    CHECK(s.val_ids.size() == 18);
    CHECK(s.test_ids.size() == 18);

    const DatasetSplit again = make_split(ids, 7);
    CHECK(again.train_ids == s.train_ids);
    CHECK(again.val_ids == s.val_ids);
    CHECK(again.test_ids == s.test_ids);
    const DatasetSplit other = make_split(ids, 8);
    CHECK(other.test_ids != s.test_ids);

    // disjoint, patient-wise, union preserved
    std::set<std::string> all;
    for (const auto& v : {s.train_ids, s.val_ids, s.test_ids}) all.insert(v.begin(), v.end());
    CHECK(all.size() == ids.size());

    // order of the input id list does not matter
    std::vector<std::string> shuffled = ids;
    Rng rng = make_rng(99);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const DatasetSplit s2 = make_split(shuffled, 7);
    CHECK(s2.train_ids == s.train_ids);

    CHECK_THROWS(make_split({"a", "b", "c", "d", "e"}, 1));

    // explicit counts for small cohorts
    std::vector<std::string> small;
    for (int i = 0; i < 8; ++i) small.push_back("p" + std::to_string(i));
    const DatasetSplit e = make_split(small, 3, 1, 1);
    CHECK(e.train_ids.size() == 6);
    CHECK(e.val_ids.size() == 1);
    CHECK(e.test_ids.size() == 1);
    CHECK_THROWS(make_split(small, 3, 4, 4));
}
