#include "artinp/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "artinp/nifti.hpp"
#include "artinp/rng.hpp"

namespace artinp::phantom {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Ellipsoid {
    double cx, cy, cz, ax, ay, az;
    // Normalized radius: <= 1 inside.
    double r(double x, double y, double z) const {
        const double u = (x - cx) / ax, v = (y - cy) / ay, w = (z - cz) / az;
        return std::sqrt(u * u + v * v + w * w);
    }
};

int16_t clamp_hu(double hu) {
    const long long v = std::llround(hu);
    return int16_t(std::clamp<long long>(v, kHuMin, kHuMax));
}

}  // namespace

PhantomPair generate_patient(const PhantomSpec& spec, int patient_index) {
    if (std::min({spec.nx, spec.ny, spec.nz}) < 64)
        throw std::invalid_argument("phantom: every axis must be at least 64 voxels");
    if (patient_index < 0 || patient_index >= spec.n_patients)
        throw std::invalid_argument("phantom: patient index out of range");

    Rng geo = derive_rng(spec.seed, uint64_t(patient_index));
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "ph%03d", patient_index);

    PhantomPair out;
    out.ct = VolumeHU(spec.nx, spec.ny, spec.nz, spec.air_hu);
    out.ct.patient_id = idbuf;
    out.ct.modality = Modality::CT;
    out.bone.assign(size_t(out.ct.count()), 0);

    // Outer skull, jittered a little per patient.
    Ellipsoid skull;
    skull.cx = 0.5 * (spec.nx - 1) + rand_uniform(geo, -1.0, 1.0);
    skull.cy = 0.5 * (spec.ny - 1) + rand_uniform(geo, -1.0, 1.0);
    skull.cz = 0.5 * (spec.nz - 1) + rand_uniform(geo, -1.0, 1.0);
    skull.ax = 0.36 * spec.nx * rand_uniform(geo, 0.95, 1.05);
    skull.ay = 0.42 * spec.ny * rand_uniform(geo, 0.95, 1.05);
    skull.az = 0.38 * spec.nz * rand_uniform(geo, 0.95, 1.05);
    out.cx = skull.cx;
    out.cy = skull.cy;
    out.cz = skull.cz;
    out.ax = skull.ax;
    out.ay = skull.ay;
    out.az = skull.az;
    const double shell = 0.12;  // fraction of the normalized radius that is bone

    // Internal structures: a bone blob and a low-density cavity.
    Ellipsoid blob{skull.cx + rand_uniform(geo, -0.15, 0.15) * skull.ax,
                   skull.cy + rand_uniform(geo, 0.15, 0.35) * skull.ay,
                   skull.cz + rand_uniform(geo, -0.15, 0.15) * skull.az,
                   0.14 * skull.ax, 0.14 * skull.ay, 0.14 * skull.az};
    Ellipsoid cavity{skull.cx + rand_uniform(geo, -0.1, 0.1) * skull.ax,
                     skull.cy - rand_uniform(geo, 0.2, 0.35) * skull.ay,
                     skull.cz + rand_uniform(geo, -0.1, 0.1) * skull.az,
                     0.18 * skull.ax, 0.12 * skull.ay, 0.18 * skull.az};

    // Gentle soft-tissue texture so the slices are not piecewise constant.
    const double tf[3] = {rand_uniform(geo, 1.5, 3.5), rand_uniform(geo, 1.5, 3.5),
                          rand_uniform(geo, 1.5, 3.5)};
    const double tp[3] = {rand_uniform(geo, 0, 2 * kPi), rand_uniform(geo, 0, 2 * kPi),
                          rand_uniform(geo, 0, 2 * kPi)};
    const double tex_amp = 30.0;

    for (int z = 0; z < spec.nz; ++z)
        for (int y = 0; y < spec.ny; ++y)
            for (int x = 0; x < spec.nx; ++x) {
                const double r = skull.r(x, y, z);
                if (r > 1.0) continue;  // air
                double hu;
                bool is_bone = false;
                if (r >= 1.0 - shell) {
                    hu = spec.bone_hu;
                    is_bone = true;
                } else if (blob.r(x, y, z) <= 1.0) {
                    hu = spec.bone_hu;
                    is_bone = true;
                } else if (cavity.r(x, y, z) <= 1.0) {
                    hu = spec.soft_hu - 60.0;
                } else {
                    const double t = std::cos(2 * kPi * tf[0] * x / spec.nx + tp[0]) *
                                     std::cos(2 * kPi * tf[1] * y / spec.ny + tp[1]) *
                                     std::cos(2 * kPi * tf[2] * z / spec.nz + tp[2]);
                    hu = spec.soft_hu + tex_amp * t;
                }
                out.ct.at(x, y, z) = clamp_hu(hu);
                if (is_bone) out.bone[(size_t(z) * spec.ny + y) * spec.nx + x] = 1;
            }

    // Pseudo-CBCT: pointwise degradations only, skipped entirely when their
    // parameter is zero so the zero-degradation pair is bitwise identical.
    out.cbct = out.ct;
    out.cbct.modality = Modality::CBCT;
    const Degradation& deg = spec.degradation;
    const bool any = deg.noise_sigma > 0 || deg.bias_amplitude > 0 || deg.streak_count > 0;
    if (any) {
        Rng dr = derive_rng(spec.seed, uint64_t(patient_index) + 0x1000000u);
        // Bias field phases and streak geometry are drawn up-front so the
        // voxel loop consumes the rng in a fixed order.
        const double bf[2] = {rand_uniform(dr, 0, 2 * kPi), rand_uniform(dr, 0, 2 * kPi)};
        struct Streak {
            double nx, ny, dhu, width;
        };
        std::vector<Streak> streaks;
        for (int s = 0; s < deg.streak_count; ++s) {
            const double th = rand_uniform(dr, 0, kPi);
            const double mag = rand_uniform(dr, 30.0, 80.0) * (rand_int(dr, 0, 1) ? 1 : -1);
            streaks.push_back({-std::sin(th), std::cos(th), mag, rand_uniform(dr, 1.5, 3.0)});
        }
        for (int z = 0; z < spec.nz; ++z)
            for (int y = 0; y < spec.ny; ++y)
                for (int x = 0; x < spec.nx; ++x) {
                    double hu = out.ct.at(x, y, z);
                    if (deg.bias_amplitude > 0) {
                        const double g = std::cos(2 * kPi * x / spec.nx + bf[0]) *
                                         std::cos(2 * kPi * y / spec.ny + bf[1]);
                        hu = (hu + 1024.0) * (1.0 + deg.bias_amplitude * g) - 1024.0;
                    }
                    for (const Streak& s : streaks) {
                        const double d =
                            s.nx * (x - skull.cx) + s.ny * (y - skull.cy);  // axial distance
                        hu += s.dhu * std::exp(-(d * d) / (s.width * s.width));
                    }
                    if (deg.noise_sigma > 0) hu += rand_normal(dr, 0.0, deg.noise_sigma);
                    out.cbct.at(x, y, z) = clamp_hu(hu);
                }
    }
    return out;
}

std::vector<PhantomPair> generate(const PhantomSpec& spec) {
    if (spec.n_patients < 1) throw std::invalid_argument("phantom: need at least one patient");
    std::vector<PhantomPair> out;
    out.reserve(size_t(spec.n_patients));
    for (int i = 0; i < spec.n_patients; ++i) out.push_back(generate_patient(spec, i));
    return out;
}

std::vector<std::string> write_dataset(const PhantomSpec& spec, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> ids;
    for (int i = 0; i < spec.n_patients; ++i) {
        PhantomPair p = generate_patient(spec, i);
        save_volume(dir + "/" + p.ct.patient_id + "_ct.nii.gz", p.ct);
        save_volume(dir + "/" + p.cbct.patient_id + "_cbct.nii.gz", p.cbct);
        ids.push_back(p.ct.patient_id);
    }
    return ids;
}

}  // namespace artinp::phantom
