#include "artinp/gaps.hpp"

#include <stdexcept>
#include <string>

namespace artinp {

int64_t GapMask::count() const {
    int64_t n = 0;
    for (uint8_t v : mask) n += v;
    return n;
}

GapSpec sample_gap(int image_width, Rng& rng, GapWidths widths) {
    return sample_gap_in(0, image_width, rng, widths);
}

GapSpec sample_gap_in(int col_lo, int col_hi, Rng& rng, GapWidths widths) {
    if (widths.min_w < 1 || widths.max_w < widths.min_w)
        throw std::invalid_argument("sample_gap: bad width range");
    const int span = col_hi - col_lo;
    if (col_lo < 0 || span < widths.max_w)
        throw std::invalid_argument("sample_gap: column window " + std::to_string(span) +
                                    " px is narrower than the maximum gap width " +
                                    std::to_string(widths.max_w));
    GapSpec s;
    s.width = rand_int(rng, widths.min_w, widths.max_w);
    s.x_start = col_lo + rand_int(rng, 0, span - s.width);
    return s;
}

GapMask gap_mask(int h, int w, const GapSpec& spec) {
    if (spec.width <= 0 || spec.x_start < 0 || spec.x_start + spec.width > w)
        throw std::invalid_argument("gap_mask: gap spec does not fit the image");
    GapMask mask;
    mask.h = h;
    mask.w = w;
    mask.mask.assign(size_t(h) * w, 0);
    for (int y = 0; y < h; ++y)
        for (int x = spec.x_start; x < spec.x_start + spec.width; ++x)
            mask.mask[size_t(y) * w + x] = 1;
    return mask;
}

std::pair<SliceImage, GapMask> apply_gap(const SliceImage& img, const GapSpec& spec,
                                         real fill_value) {
    GapMask mask = gap_mask(img.h(), img.w(), spec);
    SliceImage gapped = img;
    for (int y = 0; y < img.h(); ++y)
        for (int x = spec.x_start; x < spec.x_start + spec.width; ++x)
            gapped.pixels.at(y, x) = fill_value;
    return {std::move(gapped), std::move(mask)};
}

PatientGap patient_gap(const VolumeHU& v, uint64_t seed, int16_t fill_hu, int col_lo,
                       int col_hi, GapWidths widths) {
    if (col_hi < 0) col_hi = v.nz;
    if (col_hi > v.nz) throw std::invalid_argument("patient_gap: column window exceeds volume");
    Rng rng = make_rng(seed);
    PatientGap out;
    out.spec = sample_gap_in(col_lo, col_hi, rng, widths);
    out.spec.scope = GapScope::PerPatient;
    out.spec.seed = seed;
    out.gapped = v;
    out.mask.assign(size_t(v.count()), 0);
    // sagittal slices have z as their column axis, so the strip is a z-range
    for (int z = out.spec.x_start; z < out.spec.x_start + out.spec.width; ++z)
        for (int y = 0; y < v.ny; ++y)
            for (int x = 0; x < v.nx; ++x) {
                out.gapped.at(x, y, z) = fill_hu;
                out.mask[(size_t(z) * v.ny + y) * v.nx + x] = 1;
            }
    return out;
}

}  // namespace artinp
