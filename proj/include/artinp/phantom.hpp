#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "artinp/volume.hpp"

namespace artinp::phantom {

struct Degradation {
    real noise_sigma = 25.0;     // additive Gaussian, HU
    real bias_amplitude = 0.05;  // multiplicative low-frequency field, fraction
    int streak_count = 6;        // radial streak artifacts per volume
};

struct PhantomSpec {
    int nx = 64, ny = 64, nz = 64;
    int n_patients = 8;
    int16_t air_hu = -1000, soft_hu = 40, bone_hu = 900;
    Degradation degradation;
    uint64_t seed = 0;
};

// A layered-ellipsoid "skull": bone shell around soft tissue with a few
// internal structures and gentle soft-tissue texture, in air. The pseudo-CBCT
// shares the exact geometry and adds only pointwise degradations, so the two
// volumes stay voxel-aligned by construction.
struct PhantomPair {
    VolumeHU ct, cbct;
    std::vector<uint8_t> bone;  // rasterized bone region, VolumeHU indexing
    // Analytic outer ellipsoid (voxel units), for rasterization oracles.
    double cx = 0, cy = 0, cz = 0, ax = 0, ay = 0, az = 0;
};

PhantomPair generate_patient(const PhantomSpec& spec, int patient_index);
std::vector<PhantomPair> generate(const PhantomSpec& spec);

// Writes <id>_ct.nii.gz / <id>_cbct.nii.gz per patient into dir (created if
// missing) and returns the patient ids.
std::vector<std::string> write_dataset(const PhantomSpec& spec, const std::string& dir);

}  // namespace artinp::phantom
