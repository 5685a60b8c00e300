#pragma once

#include <string>

#include "artinp/volume.hpp"

namespace artinp {

struct LoadOptions {
    bool strict_spacing = true;   // reject spacing that is not isotropic 1 mm
    double spacing_tol = 0.01;    // tolerance on each spacing component (mm)
};

// Minimal NIfTI-1 single-file (.nii / .nii.gz) reader. Little-endian files
// only; datatypes uint8/int16/uint16/int32/float32/float64 are accepted and
// mapped through scl_slope/scl_inter, then clamped to the HU window (the
// original extremes and a clamped flag are recorded on the volume).
VolumeHU load_volume(const std::string& path, const LoadOptions& opt = {});

// Writes int16 little-endian NIfTI-1; gzip-compressed when the path ends in
// ".gz".
void save_volume(const std::string& path, const VolumeHU& v);

}  // namespace artinp
