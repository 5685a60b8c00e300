#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "artinp/rng.hpp"
#include "artinp/volume.hpp"

namespace artinp {

// Vertical-strip gap widths are drawn uniformly from this closed range.
inline constexpr int kGapWidthMin = 48;
inline constexpr int kGapWidthMax = 96;

// Width range override for small volumes (the defaults assume >=160 px wide
// slices; a 64-voxel phantom cannot host a 96 px strip).
struct GapWidths {
    int min_w = kGapWidthMin;
    int max_w = kGapWidthMax;
};

enum class GapScope { PerSlice, PerPatient };

struct GapSpec {
    int x_start = 0;
    int width = 0;
    GapScope scope = GapScope::PerSlice;
    uint64_t seed = 0;  // seed the spec was drawn from (bookkeeping for manifests)
};

struct GapMask {
    std::vector<uint8_t> mask;  // row-major h*w, 1 inside the gap strip
    int h = 0, w = 0;
    uint8_t at(int y, int x) const { return mask[size_t(y) * w + x]; }
    int64_t count() const;
};

// Draws width ~ U{48..96} and x_start uniform over valid placements in an
// image of the given width. Deterministic under a fixed rng state.
GapSpec sample_gap(int image_width, Rng& rng, GapWidths widths = {});

// Same, but the strip is confined to the column window [col_lo, col_hi).
GapSpec sample_gap_in(int col_lo, int col_hi, Rng& rng, GapWidths widths = {});

// The strip mask alone, without touching any image (used e.g. to pick the
// discriminator patch location for real samples).
GapMask gap_mask(int h, int w, const GapSpec& spec);

// Replaces the strip with fill_value (in the slice's own domain); pixels
// outside the strip are unchanged bit-exactly.
std::pair<SliceImage, GapMask> apply_gap(const SliceImage& img, const GapSpec& spec,
                                         real fill_value);

// One spec per patient: the same strip of z-columns removed from every
// sagittal slice of the volume. Optional column window confines placement
// (e.g. to the sagittal crop window); mask is per-voxel, 1 inside the gap.
struct PatientGap {
    VolumeHU gapped;
    std::vector<uint8_t> mask;  // same indexing as VolumeHU::data
    GapSpec spec;
};
PatientGap patient_gap(const VolumeHU& v, uint64_t seed, int16_t fill_hu, int col_lo = 0,
                       int col_hi = -1, GapWidths widths = {});

}  // namespace artinp
