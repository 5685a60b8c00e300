#include "artinp/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace artinp {

namespace {

#pragma pack(push, 1)
struct Nifti1Header {
    int32_t sizeof_hdr;
    char data_type[10];
    char db_name[18];
    int32_t extents;
    int16_t session_error;
    char regular;
    char dim_info;
    int16_t dim[8];
    float intent_p1, intent_p2, intent_p3;
    int16_t intent_code;
    int16_t datatype;
    int16_t bitpix;
    int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope;
    float scl_inter;
    int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max, cal_min;
    float slice_duration;
    float toffset;
    int32_t glmax, glmin;
    char descrip[80];
    char aux_file[24];
    int16_t qform_code, sform_code;
    float quatern_b, quatern_c, quatern_d;
    float qoffset_x, qoffset_y, qoffset_z;
    float srow_x[4], srow_y[4], srow_z[4];
    char intent_name[16];
    char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must be 348 bytes");

constexpr int16_t kDtUint8 = 2;
constexpr int16_t kDtInt16 = 4;
constexpr int16_t kDtInt32 = 8;
constexpr int16_t kDtFloat32 = 16;
constexpr int16_t kDtFloat64 = 64;
constexpr int16_t kDtUint16 = 512;

struct GzFile {
    gzFile f = nullptr;
    explicit GzFile(const std::string& path, const char* mode) : f(gzopen(path.c_str(), mode)) {}
    ~GzFile() {
        if (f) gzclose(f);
    }
    GzFile(const GzFile&) = delete;
    GzFile& operator=(const GzFile&) = delete;
};

void gz_read_exact(gzFile f, void* buf, size_t n, const std::string& path) {
    char* p = static_cast<char*>(buf);
    while (n > 0) {
        const unsigned chunk = unsigned(std::min<size_t>(n, 1u << 28));
        const int got = gzread(f, p, chunk);
        if (got <= 0) throw std::runtime_error("truncated or unreadable NIfTI file: " + path);
        p += got;
        n -= size_t(got);
    }
}

void gz_write_exact(gzFile f, const void* buf, size_t n, const std::string& path) {
    const char* p = static_cast<const char*>(buf);
    while (n > 0) {
        const unsigned chunk = unsigned(std::min<size_t>(n, 1u << 28));
        const int put = gzwrite(f, p, chunk);
        if (put <= 0) throw std::runtime_error("failed to write NIfTI file: " + path);
        p += put;
        n -= size_t(put);
    }
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

template <typename T>
void convert_voxels(const std::vector<char>& raw, VolumeHU& v, float slope, float inter) {
    const T* src = reinterpret_cast<const T*>(raw.data());
    const int64_t n = v.count();
    double lo = 1e300, hi = -1e300;
    bool clamped = false;
    for (int64_t i = 0; i < n; ++i) {
        const double val = double(src[i]) * slope + inter;
        lo = std::min(lo, val);
        hi = std::max(hi, val);
        const long long r = std::llround(val);
        const long long c = std::clamp<long long>(r, kHuMin, kHuMax);
        clamped = clamped || (c != r);
        v.data[i] = int16_t(c);
    }
    v.orig_min = lo;
    v.orig_max = hi;
    v.clamped = clamped;
}

}  // namespace

VolumeHU load_volume(const std::string& path, const LoadOptions& opt) {
    GzFile gz(path, "rb");  // gzread reads plain files transparently too
    if (!gz.f) throw std::runtime_error("cannot open volume file: " + path);

    Nifti1Header h{};
    gz_read_exact(gz.f, &h, sizeof(h), path);
    if (h.sizeof_hdr != 348) {
        int32_t swapped = h.sizeof_hdr;
        char* b = reinterpret_cast<char*>(&swapped);
        std::swap(b[0], b[3]);
        std::swap(b[1], b[2]);
        if (swapped == 348)
            throw std::runtime_error("big-endian NIfTI files are not supported: " + path);
        throw std::runtime_error("not a NIfTI-1 file (bad header size): " + path);
    }
    if (std::strncmp(h.magic, "n+1", 3) != 0 && std::strncmp(h.magic, "ni1", 3) != 0)
        throw std::runtime_error("not a NIfTI-1 file (bad magic): " + path);
    if (std::strncmp(h.magic, "ni1", 3) == 0)
        throw std::runtime_error("two-file NIfTI (.hdr/.img) is not supported: " + path);

    const int nd = h.dim[0];
    bool three_d = nd == 3;
    if (nd > 3 && nd <= 7) {
        three_d = true;
        for (int i = 4; i <= nd; ++i) three_d = three_d && h.dim[i] <= 1;
    }
    if (!three_d)
        throw std::runtime_error("volume is not 3-D (dim[0]=" + std::to_string(nd) + "): " + path);
    if (h.dim[1] <= 0 || h.dim[2] <= 0 || h.dim[3] <= 0)
        throw std::runtime_error("volume has a non-positive dimension: " + path);

    VolumeHU v;
    v.nx = h.dim[1];
    v.ny = h.dim[2];
    v.nz = h.dim[3];
    v.sx = h.pixdim[1];
    v.sy = h.pixdim[2];
    v.sz = h.pixdim[3];
    if (v.sx <= 0 || v.sy <= 0 || v.sz <= 0)
        throw std::runtime_error("volume has non-positive voxel spacing: " + path);
    if (opt.strict_spacing) {
        const double t = opt.spacing_tol;
        if (std::abs(v.sx - 1.0) > t || std::abs(v.sy - 1.0) > t || std::abs(v.sz - 1.0) > t)
            throw std::runtime_error("anisotropic spacing (" + std::to_string(v.sx) + ", " +
                                     std::to_string(v.sy) + ", " + std::to_string(v.sz) +
                                     "), expected isotropic 1 mm: " + path);
    }

    int bytes = 0;
    switch (h.datatype) {
        case kDtUint8: bytes = 1; break;
        case kDtInt16: bytes = 2; break;
        case kDtUint16: bytes = 2; break;
        case kDtInt32: bytes = 4; break;
        case kDtFloat32: bytes = 4; break;
        case kDtFloat64: bytes = 8; break;
        default:
            throw std::runtime_error("unsupported NIfTI datatype " + std::to_string(h.datatype) +
                                     ": " + path);
    }

    const long long off = std::llround(double(h.vox_offset));
    if (off < 348) throw std::runtime_error("bad vox_offset in NIfTI header: " + path);
    std::vector<char> skip(size_t(off) - sizeof(h));
    if (!skip.empty()) gz_read_exact(gz.f, skip.data(), skip.size(), path);

    v.data.resize(size_t(v.count()));
    std::vector<char> raw(size_t(v.count()) * bytes);
    gz_read_exact(gz.f, raw.data(), raw.size(), path);

    const float slope = h.scl_slope == 0.0f ? 1.0f : h.scl_slope;
    const float inter = h.scl_slope == 0.0f ? 0.0f : h.scl_inter;
    switch (h.datatype) {
        case kDtUint8: convert_voxels<uint8_t>(raw, v, slope, inter); break;
        case kDtInt16: convert_voxels<int16_t>(raw, v, slope, inter); break;
        case kDtUint16: convert_voxels<uint16_t>(raw, v, slope, inter); break;
        case kDtInt32: convert_voxels<int32_t>(raw, v, slope, inter); break;
        case kDtFloat32: convert_voxels<float>(raw, v, slope, inter); break;
        case kDtFloat64: convert_voxels<double>(raw, v, slope, inter); break;
        default: break;
    }
    const std::string descrip(h.descrip, strnlen(h.descrip, sizeof(h.descrip)));
    const auto bar = descrip.find('|');
    if (bar != std::string::npos) v.note = descrip.substr(bar + 1);
    if (descrip.rfind("artinp ", 0) == 0) {
        const std::string tag = descrip.substr(7, (bar == std::string::npos ? descrip.size() : bar) - 7);
        for (const Modality m : {Modality::CBCT, Modality::CT, Modality::sCBCT, Modality::sCT})
            if (tag == to_string(m)) v.modality = m;
    }
    return v;
}

void save_volume(const std::string& path, const VolumeHU& v) {
    Nifti1Header h{};
    h.sizeof_hdr = 348;
    h.regular = 'r';
    h.dim[0] = 3;
    h.dim[1] = int16_t(v.nx);
    h.dim[2] = int16_t(v.ny);
    h.dim[3] = int16_t(v.nz);
    for (int i = 4; i < 8; ++i) h.dim[i] = 1;
    h.datatype = kDtInt16;
    h.bitpix = 16;
    h.pixdim[0] = 1.0f;
    h.pixdim[1] = float(v.sx);
    h.pixdim[2] = float(v.sy);
    h.pixdim[3] = float(v.sz);
    h.vox_offset = 352.0f;
    h.scl_slope = 1.0f;
    h.scl_inter = 0.0f;
    h.xyzt_units = 2;  // NIFTI_UNITS_MM
    if (v.note.empty())
        std::snprintf(h.descrip, sizeof(h.descrip), "artinp %s", to_string(v.modality));
    else
        std::snprintf(h.descrip, sizeof(h.descrip), "artinp %s|%s", to_string(v.modality),
                      v.note.c_str());
    std::memcpy(h.magic, "n+1", 4);

    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    GzFile gz(path, ends_with(path, ".gz") ? "wb6" : "wbT");
    if (!gz.f) throw std::runtime_error("cannot create volume file: " + path);
    gz_write_exact(gz.f, &h, sizeof(h), path);
    const char ext[4] = {0, 0, 0, 0};
    gz_write_exact(gz.f, ext, 4, path);
    gz_write_exact(gz.f, v.data.data(), v.data.size() * sizeof(int16_t), path);
}

}  // namespace artinp
