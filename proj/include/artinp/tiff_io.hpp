#pragma once

#include <string>

#include "artinp/volume.hpp"

namespace artinp {

// Minimal single-channel 16-bit signed TIFF (little-endian, uncompressed,
// single strip) used for the intermediate slice store. Only HU16 slices are
// written; plane and index come from the filename convention
// "<patient>_<plane>_<index>.tiff" and are not stored in the file.
void save_slice_tiff(const std::string& path, const SliceImage& img);
SliceImage load_slice_tiff(const std::string& path);

}  // namespace artinp
