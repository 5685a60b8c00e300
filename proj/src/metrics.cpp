#include "artinp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace artinp::metrics {

namespace {

void validate(const Tensor& a, const Tensor& b, const BodyMask& mask) {
    if (!a.same_shape(b)) throw std::invalid_argument("metrics: image shapes differ");
    if (a.ndim() != 2) throw std::invalid_argument("metrics: images must be 2-D");
    if (a.dim(0) != mask.h || a.dim(1) != mask.w)
        throw std::invalid_argument("metrics: mask size does not match images");
    if (mask.count() == 0) throw std::invalid_argument("metrics: empty mask");
}

constexpr int kWin = 11;
constexpr int kRad = kWin / 2;

const real* ssim_window() {
    static const std::vector<real> w = [] {
        constexpr real sigma = 1.5;
        std::vector<real> v(kWin * kWin);
        real sum = 0;
        for (int i = 0; i < kWin; ++i)
            for (int j = 0; j < kWin; ++j) {
                const real dy = i - kRad, dx = j - kRad;
                v[i * kWin + j] = std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
                sum += v[i * kWin + j];
            }
        for (real& x : v) x /= sum;
        return v;
    }();
    return w.data();
}

}  // namespace

real mae_pct(const Tensor& a, const Tensor& b, const BodyMask& mask, real range) {
    validate(a, b, mask);
    if (range <= 0) throw std::invalid_argument("mae_pct: range must be positive");
    real sum = 0;
    int64_t n = 0;
#pragma omp parallel for reduction(+ : sum, n) schedule(static)
    for (int64_t i = 0; i < a.size(); ++i)
        if (mask.mask[i]) {
            sum += std::abs(a[i] - b[i]);
            ++n;
        }
    return 100.0 * sum / (real(n) * range);
}

real psnr_db(const Tensor& a, const Tensor& b, const BodyMask& mask, real i_max,
             bool* exact_match) {
    validate(a, b, mask);
    real sum = 0;
    int64_t n = 0;
#pragma omp parallel for reduction(+ : sum, n) schedule(static)
    for (int64_t i = 0; i < a.size(); ++i)
        if (mask.mask[i]) {
            const real d = a[i] - b[i];
            sum += d * d;
            ++n;
        }
    const real mse = sum / real(n);
    if (exact_match) *exact_match = mse == 0;
    if (mse == 0) return kPsnrCapDb;
    return 10.0 * std::log10(i_max * i_max / mse);
}

real ssim(const Tensor& a, const Tensor& b, const BodyMask& mask, real dynamic_range) {
    validate(a, b, mask);
    const real c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
    const real c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
    const int h = a.dim(0), w = a.dim(1);
    const real* win = ssim_window();

    real total = 0;
    int64_t windows = 0;
#pragma omp parallel for reduction(+ : total, windows) schedule(static)
    for (int y = kRad; y < h - kRad; ++y) {
        for (int x = kRad; x < w - kRad; ++x) {
            if (!mask.at(y, x)) continue;
            // groupings chosen so the result is bitwise symmetric in (a, b)
            real m1 = 0, m2 = 0, s11 = 0, s22 = 0, s12 = 0;
            for (int i = 0; i < kWin; ++i)
                for (int j = 0; j < kWin; ++j) {
                    const real wt = win[i * kWin + j];
                    const real v1 = a.at(y + i - kRad, x + j - kRad);
                    const real v2 = b.at(y + i - kRad, x + j - kRad);
                    m1 += wt * v1;
                    m2 += wt * v2;
                    s11 += wt * (v1 * v1);
                    s22 += wt * (v2 * v2);
                    s12 += wt * (v1 * v2);
                }
            // sort the per-image statistics so fused-multiply-add contraction
            // cannot distinguish ssim(a, b) from ssim(b, a)
            const real var1 = s11 - m1 * m1;
            const real var2 = s22 - m2 * m2;
            const real mlo = std::min(m1, m2), mhi = std::max(m1, m2);
            const real vlo = std::min(var1, var2), vhi = std::max(var1, var2);
            const real m12 = mlo * mhi;
            const real cov = s12 - m12;
            total += ((2 * m12 + c1) * (2 * cov + c2)) /
                     ((mlo * mlo + mhi * mhi + c1) * (vlo + vhi + c2));
            ++windows;
        }
    }
    if (windows == 0)
        throw std::invalid_argument("ssim: mask admits no full 11x11 window inside the image");
    return total / real(windows);
}

Aggregate aggregate(const std::vector<real>& xs) {
    Aggregate a;
    a.n = int64_t(xs.size());
    if (a.n == 0) return a;
    real sum = 0;
    for (real x : xs) sum += x;
    a.mean = sum / real(a.n);
    if (a.n < 2) return a;
    real ss = 0;
    for (real x : xs) ss += (x - a.mean) * (x - a.mean);
    a.sd = std::sqrt(ss / real(a.n - 1));
    return a;
}

namespace {

void recompute_aggregates(MetricReport& r) {
    std::vector<real> m, p, s;
    for (const auto& row : r.per_slice) {
        m.push_back(row.mae_pct);
        p.push_back(row.psnr_db);
        s.push_back(row.ssim);
    }
    r.mae = aggregate(m);
    r.psnr = aggregate(p);
    r.ssim_a = aggregate(s);
}

}  // namespace

MetricReport evaluate_pair(const VolumeHU& reference, const VolumeHU& synth) {
    if (reference.nx != synth.nx || reference.ny != synth.ny || reference.nz != synth.nz)
        throw std::invalid_argument("evaluate_pair: misaligned volumes");
    MetricReport rep;
    const real shift = real(-kHuMin);  // lift HU onto [0, 4095]
    for (int z = 0; z < reference.nz; ++z) {
        SliceImage ref = axial_slice(reference, z);
        SliceImage syn = axial_slice(synth, z);
        const BodyMask mask = body_mask(ref);
        if (mask.empty_flag) {
            ++rep.skipped_slices;
            continue;
        }
        rep.mask_method = mask.method_tag;
        for (int64_t i = 0; i < ref.pixels.size(); ++i) {
            ref.pixels[i] += shift;
            syn.pixels[i] += shift;
        }
        MetricRow row;
        row.patient = reference.patient_id;
        row.index = z;
        row.mae_pct = mae_pct(ref.pixels, syn.pixels, mask, rep.range);
        row.psnr_db = psnr_db(ref.pixels, syn.pixels, mask, rep.i_max, &row.psnr_capped);
        row.ssim = ssim(ref.pixels, syn.pixels, mask, rep.i_max);
        rep.per_slice.push_back(std::move(row));
    }
    recompute_aggregates(rep);
    return rep;
}

MetricReport merge_reports(const std::vector<MetricReport>& parts) {
    MetricReport rep;
    for (const auto& p : parts) {
        rep.per_slice.insert(rep.per_slice.end(), p.per_slice.begin(), p.per_slice.end());
        rep.skipped_slices += p.skipped_slices;
        if (rep.mask_method.empty()) rep.mask_method = p.mask_method;
    }
    recompute_aggregates(rep);
    return rep;
}

PatientAggregates patient_level(const MetricReport& r) {
    std::map<std::string, std::vector<const MetricRow*>> by_patient;
    for (const auto& row : r.per_slice) by_patient[row.patient].push_back(&row);
    std::vector<real> m, p, s;
    for (const auto& [id, rows] : by_patient) {
        real mm = 0, pp = 0, ss = 0;
        for (const MetricRow* row : rows) {
            mm += row->mae_pct;
            pp += row->psnr_db;
            ss += row->ssim;
        }
        const real n = real(rows.size());
        m.push_back(mm / n);
        p.push_back(pp / n);
        s.push_back(ss / n);
    }
    return {aggregate(m), aggregate(p), aggregate(s)};
}

void write_report_csv(const std::string& path, const MetricReport& r) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot create report CSV: " + path);
    f << "patient,slice,mae_pct,psnr_db,ssim,psnr_capped\n";
    f.precision(10);
    for (const auto& row : r.per_slice)
        f << row.patient << "," << row.index << "," << row.mae_pct << "," << row.psnr_db << ","
          << row.ssim << "," << (row.psnr_capped ? 1 : 0) << "\n";
}

void write_report_json(const std::string& path, const MetricReport& r) {
    const PatientAggregates pa = patient_level(r);
    auto agg = [](const Aggregate& a) {
        return nlohmann::json{{"mean", a.mean}, {"sd", a.sd}, {"n", a.n}};
    };
    nlohmann::json j{
        {"mask_method", r.mask_method},
        {"range", r.range},
        {"i_max", r.i_max},
        {"n_slices", r.per_slice.size()},
        {"skipped_slices", r.skipped_slices},
        {"sd_definition", "sample (n-1)"},
        {"over_slices",
         {{"mae_pct", agg(r.mae)}, {"psnr_db", agg(r.psnr)}, {"ssim", agg(r.ssim_a)}}},
        {"over_patients",
         {{"mae_pct", agg(pa.mae)}, {"psnr_db", agg(pa.psnr)}, {"ssim", agg(pa.ssim_a)}}},
    };
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot create report JSON: " + path);
    f << j.dump(2) << "\n";
}

std::string table_summary(const MetricReport& r) {
    const PatientAggregates pa = patient_level(r);
    char buf[256];
    std::ostringstream out;
    out << "                 MAE (%)        PSNR (dB)      SSIM\n";
    std::snprintf(buf, sizeof(buf), "  over slices    %.2f +/- %-5.2f %.2f +/- %-5.2f %.3f +/- %.3f\n",
                  r.mae.mean, r.mae.sd, r.psnr.mean, r.psnr.sd, r.ssim_a.mean, r.ssim_a.sd);
    out << buf;
    std::snprintf(buf, sizeof(buf), "  over patients  %.2f +/- %-5.2f %.2f +/- %-5.2f %.3f +/- %.3f\n",
                  pa.mae.mean, pa.mae.sd, pa.psnr.mean, pa.psnr.sd, pa.ssim_a.mean, pa.ssim_a.sd);
    out << buf;
    return out.str();
}

}  // namespace artinp::metrics
