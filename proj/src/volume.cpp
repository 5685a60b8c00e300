#include "artinp/volume.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "artinp/rng.hpp"

namespace artinp {

const char* to_string(Modality m) {
    switch (m) {
        case Modality::CBCT: return "CBCT";
        case Modality::CT: return "CT";
        case Modality::sCBCT: return "sCBCT";
        case Modality::sCT: return "sCT";
    }
    return "?";
}

const char* to_string(Plane p) { return p == Plane::Axial ? "axial" : "sagittal"; }

const char* to_string(Domain d) {
    switch (d) {
        case Domain::HU16: return "HU16";
        case Domain::UNIT01: return "UNIT01";
        case Domain::SIGNED11: return "SIGNED11";
    }
    return "?";
}

int64_t BodyMask::count() const {
    int64_t n = 0;
    for (uint8_t v : mask) n += v;
    return n;
}

int16_t unit_to_hu(real u) {
    const real hu = u * kHuRange + kHuMin;
    const long long r = std::llround(hu);
    return int16_t(std::clamp<long long>(r, kHuMin, kHuMax));
}

int16_t signed_to_hu(real s) { return unit_to_hu((s + 1.0) * 0.5); }

SliceImage normalize(const SliceImage& img, Domain target) {
    if (img.domain != Domain::HU16)
        throw std::invalid_argument("normalize: input must be in the HU16 domain");
    if (target != Domain::UNIT01 && target != Domain::SIGNED11)
        throw std::invalid_argument("normalize: target must be UNIT01 or SIGNED11");
    SliceImage out = img;
    out.domain = target;
    for (int64_t i = 0; i < out.pixels.size(); ++i) {
        const real hu = img.pixels[i];
        out.pixels[i] = target == Domain::UNIT01 ? hu_to_unit(hu) : hu_to_signed(hu);
    }
    return out;
}

SliceImage denormalize(const SliceImage& img) {
    if (img.domain == Domain::HU16)
        throw std::invalid_argument("denormalize: input already in the HU16 domain");
    SliceImage out = img;
    out.domain = Domain::HU16;
    for (int64_t i = 0; i < out.pixels.size(); ++i) {
        const real v = img.pixels[i];
        out.pixels[i] = img.domain == Domain::UNIT01 ? real(unit_to_hu(v)) : real(signed_to_hu(v));
    }
    return out;
}

SliceImage axial_slice(const VolumeHU& v, int z) {
    SliceImage s(v.ny, v.nx, Domain::HU16, Plane::Axial, z);
    for (int y = 0; y < v.ny; ++y)
        for (int x = 0; x < v.nx; ++x) s.pixels.at(y, x) = real(v.at(x, y, z));
    return s;
}

std::vector<SliceImage> extract_axial(const VolumeHU& v) {
    if (v.count() == 0) throw std::invalid_argument("extract_axial: empty volume");
    std::vector<SliceImage> out;
    out.reserve(v.nz);
    for (int z = 0; z < v.nz; ++z) out.push_back(axial_slice(v, z));
    return out;
}

VolumeHU stack_axial(const std::vector<SliceImage>& slices, const VolumeHU& like) {
    if (int(slices.size()) != like.nz)
        throw std::invalid_argument("stack_axial: slice count does not match volume depth");
    VolumeHU out = like;
    for (int z = 0; z < like.nz; ++z) {
        const SliceImage& s = slices[z];
        if (s.domain != Domain::HU16)
            throw std::invalid_argument("stack_axial: slices must be in the HU16 domain");
        if (s.h() != like.ny || s.w() != like.nx || s.index != z)
            throw std::invalid_argument("stack_axial: slice size/index mismatch");
        for (int y = 0; y < like.ny; ++y)
            for (int x = 0; x < like.nx; ++x)
                out.at(x, y, z) = int16_t(std::llround(s.pixels.at(y, x)));
    }
    return out;
}

SliceImage sagittal_slice(const VolumeHU& v, int x) {
    SliceImage s(v.ny, v.nz, Domain::HU16, Plane::Sagittal, x);
    for (int y = 0; y < v.ny; ++y)
        for (int z = 0; z < v.nz; ++z) s.pixels.at(y, z) = real(v.at(x, y, z));
    return s;
}

CropGeometry sagittal_crop_geometry(const VolumeHU& v, int crop_size) {
    if (v.ny < crop_size || v.nz < crop_size)
        throw std::invalid_argument("sagittal crop: volume smaller than crop target (" +
                                    std::to_string(v.ny) + "x" + std::to_string(v.nz) + " < " +
                                    std::to_string(crop_size) + ")");
    CropGeometry g;
    g.full_rows = v.ny;
    g.full_cols = v.nz;
    g.size = crop_size;
    g.row_off = (v.ny - crop_size) / 2;
    g.col_off = (v.nz - crop_size) / 2;
    return g;
}

SliceImage crop_slice(const SliceImage& s, const CropGeometry& g) {
    if (s.h() != g.full_rows || s.w() != g.full_cols)
        throw std::invalid_argument("crop_slice: geometry does not match slice size");
    SliceImage out(g.size, g.size, s.domain, s.plane, s.index);
    for (int r = 0; r < g.size; ++r)
        for (int c = 0; c < g.size; ++c)
            out.pixels.at(r, c) = s.pixels.at(g.row_off + r, g.col_off + c);
    return out;
}

void insert_crop(SliceImage& full, const SliceImage& cropped, const CropGeometry& g) {
    if (full.h() != g.full_rows || full.w() != g.full_cols ||
        cropped.h() != g.size || cropped.w() != g.size)
        throw std::invalid_argument("insert_crop: geometry mismatch");
    for (int r = 0; r < g.size; ++r)
        for (int c = 0; c < g.size; ++c)
            full.pixels.at(g.row_off + r, g.col_off + c) = cropped.pixels.at(r, c);
}

std::vector<SliceImage> extract_sagittal(const VolumeHU& v, int crop_size, CropGeometry* geom) {
    if (v.count() == 0) throw std::invalid_argument("extract_sagittal: empty volume");
    const CropGeometry g = sagittal_crop_geometry(v, crop_size);
    if (geom) *geom = g;
    std::vector<SliceImage> out;
    out.reserve(v.nx);
    for (int x = 0; x < v.nx; ++x) out.push_back(crop_slice(sagittal_slice(v, x), g));
    return out;
}

VolumeHU stack_sagittal(const std::vector<SliceImage>& slices, const CropGeometry& g,
                        const VolumeHU& like) {
    if (int(slices.size()) != like.nx)
        throw std::invalid_argument("stack_sagittal: slice count does not match volume width");
    if (g.full_rows != like.ny || g.full_cols != like.nz)
        throw std::invalid_argument("stack_sagittal: geometry does not match volume");
    VolumeHU out = like;
    for (int x = 0; x < like.nx; ++x) {
        const SliceImage& s = slices[x];
        if (s.domain != Domain::HU16)
            throw std::invalid_argument("stack_sagittal: slices must be in the HU16 domain");
        if (s.h() != g.size || s.w() != g.size || s.index != x)
            throw std::invalid_argument("stack_sagittal: slice size/index mismatch");
        for (int r = 0; r < g.size; ++r)
            for (int c = 0; c < g.size; ++c)
                out.at(x, g.row_off + r, g.col_off + c) = int16_t(std::llround(s.pixels.at(r, c)));
    }
    return out;
}

namespace {

// Largest 8-connected component of a binary grid (iterative flood fill).
void keep_largest_component(std::vector<uint8_t>& m, int h, int w) {
    std::vector<int32_t> label(m.size(), 0);
    int32_t next = 0, best_label = 0;
    int64_t best_size = 0;
    std::vector<int64_t> stack;
    for (int64_t start = 0; start < int64_t(m.size()); ++start) {
        if (!m[start] || label[start]) continue;
        ++next;
        int64_t size = 0;
        stack.assign(1, start);
        label[start] = next;
        while (!stack.empty()) {
            const int64_t q = stack.back();
            stack.pop_back();
            ++size;
            const int y = int(q / w), x = int(q % w);
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (!dy && !dx) continue;
                    const int ny = y + dy, nx = x + dx;
                    if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                    const int64_t r = int64_t(ny) * w + nx;
                    if (m[r] && !label[r]) {
                        label[r] = next;
                        stack.push_back(r);
                    }
                }
        }
        if (size > best_size) {
            best_size = size;
            best_label = next;
        }
    }
    for (size_t i = 0; i < m.size(); ++i) m[i] = (label[i] == best_label && best_label) ? 1 : 0;
}

// Morphological closing with a disk of the given radius. Computed on a canvas
// padded by the radius so dilation is never truncated at the image border.
void close_disk(std::vector<uint8_t>& m, int h, int w, int radius) {
    std::vector<std::pair<int, int>> disk;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            if (dy * dy + dx * dx <= radius * radius) disk.emplace_back(dy, dx);

    const int ph = h + 2 * radius, pw = w + 2 * radius;
    std::vector<uint8_t> dil(size_t(ph) * pw, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!m[size_t(y) * w + x]) continue;
            for (auto [dy, dx] : disk) dil[size_t(y + radius + dy) * pw + (x + radius + dx)] = 1;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            uint8_t keep = 1;
            for (auto [dy, dx] : disk) {
                const int py = y + radius + dy, px = x + radius + dx;
                if (py < 0 || py >= ph || px < 0 || px >= pw || !dil[size_t(py) * pw + px]) {
                    keep = 0;
                    break;
                }
            }
            m[size_t(y) * w + x] = keep;
        }
}

}  // namespace

BodyMask body_mask(const SliceImage& img) {
    if (img.domain != Domain::HU16)
        throw std::invalid_argument("body_mask: input must be in the HU16 domain");
    constexpr real kThresholdHU = -500;
    constexpr int kCloseRadius = 3;
    BodyMask bm;
    bm.h = img.h();
    bm.w = img.w();
    bm.method_tag = "thr>-500;lcc8;close_r3;lcc8";
    bm.mask.assign(size_t(bm.h) * bm.w, 0);
    bool any = false;
    for (int64_t i = 0; i < img.pixels.size(); ++i) {
        const bool body = img.pixels[i] > kThresholdHU;
        bm.mask[i] = body ? 1 : 0;
        any = any || body;
    }
    if (!any) {
        bm.empty_flag = true;
        return bm;
    }
    keep_largest_component(bm.mask, bm.h, bm.w);
    close_disk(bm.mask, bm.h, bm.w, kCloseRadius);
    // closing can merge nearby specks into the main component but erosion can
    // also pinch it apart, so re-select the largest component to keep the
    // single-region invariant
    keep_largest_component(bm.mask, bm.h, bm.w);
    bm.empty_flag = bm.count() == 0;
    return bm;
}

DatasetSplit make_split(std::vector<std::string> ids, uint64_t seed) {
    if (ids.size() < 10)
        throw std::invalid_argument("make_split: need at least 10 patients for the 80/10/10 split");
    const int n = int(ids.size());
    const int n_val = int(std::llround(0.10 * n));
    const int n_test = int(std::llround(0.10 * n));
    return make_split(std::move(ids), seed, n_val, n_test);
}

DatasetSplit make_split(std::vector<std::string> ids, uint64_t seed, int n_val, int n_test) {
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
        throw std::invalid_argument("make_split: duplicate patient ids");
    if (n_val < 0 || n_test < 0 || size_t(n_val) + size_t(n_test) >= ids.size())
        throw std::invalid_argument("make_split: val/test counts leave no training patients");
    Rng rng = make_rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    DatasetSplit s;
    s.seed = seed;
    s.test_ids.assign(ids.begin(), ids.begin() + n_test);
    s.val_ids.assign(ids.begin() + n_test, ids.begin() + n_test + n_val);
    s.train_ids.assign(ids.begin() + n_test + n_val, ids.end());
    std::sort(s.train_ids.begin(), s.train_ids.end());
    std::sort(s.val_ids.begin(), s.val_ids.end());
    std::sort(s.test_ids.begin(), s.test_ids.end());
    return s;
}

}  // namespace artinp
