#pragma once

#include <string>
#include <vector>

#include "artinp/tensor.hpp"
#include "artinp/volume.hpp"

namespace artinp::metrics {

// PSNR sentinel for a zero-MSE (exact match) comparison.
inline constexpr real kPsnrCapDb = 99.0;

// (100 / (N·R)) · Σ_mask |a − b|, N = masked pixel count.
real mae_pct(const Tensor& a, const Tensor& b, const BodyMask& mask, real range);

// 10·log10(i_max² / MSE_mask); kPsnrCapDb with *exact_match set when MSE = 0.
real psnr_db(const Tensor& a, const Tensor& b, const BodyMask& mask, real i_max,
             bool* exact_match = nullptr);

// Windowed SSIM (11×11 Gaussian window, σ = 1.5, C₁ = (0.01·L)², C₂ = (0.03·L)²)
// averaged over windows that lie fully inside the image with their center
// pixel in the mask. Throws when the mask admits no such window.
real ssim(const Tensor& a, const Tensor& b, const BodyMask& mask, real dynamic_range);

struct MetricRow {
    std::string patient;
    int index = 0;
    real mae_pct = 0, psnr_db = 0, ssim = 0;
    bool psnr_capped = false;
};

struct Aggregate {
    real mean = 0, sd = 0;  // sd is the sample standard deviation (n−1), 0 for n < 2
    int64_t n = 0;
};
Aggregate aggregate(const std::vector<real>& xs);

struct MetricReport {
    std::vector<MetricRow> per_slice;
    Aggregate mae, psnr, ssim_a;  // over slices
    std::string mask_method;
    real range = kHuRange;  // R in MAE%
    real i_max = kHuRange;  // peak value in PSNR (HU window shifted to [0, 4095])
    int skipped_slices = 0;  // axial slices whose body mask was empty
};

// Slice-wise metrics between the reference volume and a synthetic one, over
// the body mask computed from the reference. Intensities are shifted by
// +1024 so R = I_MAX = L = 4095 on a nonnegative scale.
MetricReport evaluate_pair(const VolumeHU& reference, const VolumeHU& synth);

// Aggregation across patients: concatenates rows and recomputes aggregates.
MetricReport merge_reports(const std::vector<MetricReport>& parts);

struct PatientAggregates {
    Aggregate mae, psnr, ssim_a;  // mean ± sd over per-patient means
};
PatientAggregates patient_level(const MetricReport& r);

void write_report_csv(const std::string& path, const MetricReport& r);
void write_report_json(const std::string& path, const MetricReport& r);
// Two-line table: metric means ± sd over slices and over patients.
std::string table_summary(const MetricReport& r);

}  // namespace artinp::metrics
