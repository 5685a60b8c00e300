#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "artinp/tensor.hpp"

namespace artinp {

// Hounsfield window used for all intensity normalization. The window spans
// 4096 integer values; R below is the width of the affine map's input range.
inline constexpr int kHuMin = -1024;
inline constexpr int kHuMax = 3071;
inline constexpr real kHuRange = real(kHuMax - kHuMin);  // 4095

enum class Modality { CBCT, CT, sCBCT, sCT };
enum class Plane { Axial, Sagittal };
enum class Domain { HU16, UNIT01, SIGNED11 };

const char* to_string(Modality m);
const char* to_string(Plane p);
const char* to_string(Domain d);

// 3-D HU volume, x fastest: data[(z*ny + y)*nx + x].
struct VolumeHU {
    std::vector<int16_t> data;
    int nx = 0, ny = 0, nz = 0;
    double sx = 1.0, sy = 1.0, sz = 1.0;  // voxel spacing in mm
    std::string patient_id;
    Modality modality = Modality::CBCT;
    std::string note;  // provenance (e.g. config hash); round-trips through NIfTI descrip
    // recorded on load so clamping is auditable
    double orig_min = 0.0, orig_max = 0.0;
    bool clamped = false;

    VolumeHU() = default;
    VolumeHU(int nx_, int ny_, int nz_, int16_t fill = kHuMin)
        : data(size_t(nx_) * ny_ * nz_, fill), nx(nx_), ny(ny_), nz(nz_) {}

    int64_t count() const { return int64_t(nx) * ny * nz; }
    int16_t& at(int x, int y, int z) { return data[(size_t(z) * ny + y) * nx + x]; }
    int16_t at(int x, int y, int z) const { return data[(size_t(z) * ny + y) * nx + x]; }
};

// Single 2-D slice. Axial: rows = y, cols = x. Sagittal: rows = y, cols = z,
// so the inter-series gaps (which span a z-range) appear as vertical strips.
struct SliceImage {
    Tensor pixels;  // (H, W)
    Domain domain = Domain::HU16;
    Plane plane = Plane::Axial;
    int index = 0;

    SliceImage() : pixels({0, 0}) {}
    SliceImage(int h, int w, Domain d, Plane p, int idx)
        : pixels({h, w}), domain(d), plane(p), index(idx) {}

    int h() const { return pixels.dim(0); }
    int w() const { return pixels.dim(1); }
};

// Geometry of the square center-crop applied to sagittal slices, kept so the
// crop can be written back into the full-size slice bit-exactly.
struct CropGeometry {
    int row_off = 0, col_off = 0;  // top-left of the crop in the full slice
    int full_rows = 0, full_cols = 0;
    int size = 0;  // crop edge length
};

struct BodyMask {
    std::vector<uint8_t> mask;  // row-major H*W, 1 = body
    int h = 0, w = 0;
    std::string method_tag;
    bool empty_flag = false;

    int64_t count() const;
    uint8_t at(int y, int x) const { return mask[size_t(y) * w + x]; }
};

struct DatasetSplit {
    std::vector<std::string> train_ids, val_ids, test_ids;
    uint64_t seed = 0;
};

// ---- intensity normalization -------------------------------------------------
// Affine maps of [kHuMin, kHuMax] onto [0,1] (UNIT01) or [-1,1] (SIGNED11).
// The inverse rounds to the nearest integer HU, so integer HU round-trips
// exactly and arbitrary network output lands within half a quantum.
inline real hu_to_unit(real hu) { return (hu - kHuMin) / kHuRange; }
inline real hu_to_signed(real hu) { return 2.0 * hu_to_unit(hu) - 1.0; }
int16_t unit_to_hu(real u);
int16_t signed_to_hu(real s);

SliceImage normalize(const SliceImage& img, Domain target);
SliceImage denormalize(const SliceImage& img);

// ---- slicing -----------------------------------------------------------------
SliceImage axial_slice(const VolumeHU& v, int z);
std::vector<SliceImage> extract_axial(const VolumeHU& v);
// Writes the slices (all nz of them, HU16) back into a copy of `like`.
VolumeHU stack_axial(const std::vector<SliceImage>& slices, const VolumeHU& like);

SliceImage sagittal_slice(const VolumeHU& v, int x);  // full (ny, nz) slice
CropGeometry sagittal_crop_geometry(const VolumeHU& v, int crop_size);
SliceImage crop_slice(const SliceImage& s, const CropGeometry& g);
void insert_crop(SliceImage& full, const SliceImage& cropped, const CropGeometry& g);
// All nx sagittal slices, center-cropped to crop_size x crop_size.
std::vector<SliceImage> extract_sagittal(const VolumeHU& v, int crop_size, CropGeometry* geom);
// Inverse: reinsert cropped slices into a copy of `like`; voxels outside the
// crop window are preserved bit-exactly.
VolumeHU stack_sagittal(const std::vector<SliceImage>& slices, const CropGeometry& g,
                        const VolumeHU& like);

// ---- body mask ---------------------------------------------------------------
// Threshold HU > -500, keep the largest 8-connected component, morphological
// closing with a radius-3 disk, then a final largest-component pass so the
// result is guaranteed to be one connected region.
BodyMask body_mask(const SliceImage& img);

// ---- dataset splits ----------------------------------------------------------
// Patient-wise 80/10/10 split (val and test sizes rounded to nearest).
DatasetSplit make_split(std::vector<std::string> ids, uint64_t seed);
// Explicit val/test counts, for cohorts too small for the fractional split.
DatasetSplit make_split(std::vector<std::string> ids, uint64_t seed, int n_val, int n_test);

}  // namespace artinp
