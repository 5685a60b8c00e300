#include "artinp/tiff_io.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <vector>

namespace artinp {

namespace {

constexpr uint16_t kTagWidth = 256;
constexpr uint16_t kTagLength = 257;
constexpr uint16_t kTagBitsPerSample = 258;
constexpr uint16_t kTagCompression = 259;
constexpr uint16_t kTagPhotometric = 262;
constexpr uint16_t kTagStripOffsets = 273;
constexpr uint16_t kTagSamplesPerPixel = 277;
constexpr uint16_t kTagRowsPerStrip = 278;
constexpr uint16_t kTagStripByteCounts = 279;
constexpr uint16_t kTagSampleFormat = 339;

constexpr uint16_t kTypeShort = 3;
constexpr uint16_t kTypeLong = 4;

void put16(std::string& b, uint16_t v) {
    b.push_back(char(v & 0xff));
    b.push_back(char(v >> 8));
}

void put32(std::string& b, uint32_t v) {
    put16(b, uint16_t(v & 0xffff));
    put16(b, uint16_t(v >> 16));
}

void put_entry(std::string& b, uint16_t tag, uint16_t type, uint32_t value) {
    put16(b, tag);
    put16(b, type);
    put32(b, 1);  // count
    if (type == kTypeShort) {
        put16(b, uint16_t(value));
        put16(b, 0);
    } else {
        put32(b, value);
    }
}

struct Reader {
    std::vector<char> bytes;
    const std::string& path;

    uint16_t u16(size_t off) const {
        if (off + 2 > bytes.size()) throw std::runtime_error("truncated TIFF: " + path);
        return uint16_t(uint8_t(bytes[off])) | uint16_t(uint8_t(bytes[off + 1])) << 8;
    }
    uint32_t u32(size_t off) const {
        return uint32_t(u16(off)) | uint32_t(u16(off + 2)) << 16;
    }
};

// Reads a tag's values (SHORT or LONG arrays, inline or offset-stored).
std::vector<uint32_t> tag_values(const Reader& r, size_t entry_off) {
    const uint16_t type = r.u16(entry_off + 2);
    const uint32_t count = r.u32(entry_off + 4);
    if (type != kTypeShort && type != kTypeLong)
        throw std::runtime_error("unsupported TIFF tag type " + std::to_string(type) + ": " + r.path);
    const size_t elem = type == kTypeShort ? 2 : 4;
    const size_t total = size_t(count) * elem;
    const size_t src = total <= 4 ? entry_off + 8 : r.u32(entry_off + 8);
    std::vector<uint32_t> out(count);
    for (uint32_t i = 0; i < count; ++i)
        out[i] = type == kTypeShort ? uint32_t(r.u16(src + i * elem)) : r.u32(src + i * elem);
    return out;
}

}  // namespace

void save_slice_tiff(const std::string& path, const SliceImage& img) {
    if (img.domain != Domain::HU16)
        throw std::invalid_argument("save_slice_tiff: slice must be in the HU16 domain");
    const int h = img.h(), w = img.w();
    if (h <= 0 || w <= 0) throw std::invalid_argument("save_slice_tiff: empty slice");

    std::string buf;
    buf.reserve(size_t(h) * w * 2 + 192);
    buf += "II";
    put16(buf, 42);
    put32(buf, 8);  // first IFD directly after the header

    constexpr uint16_t n_entries = 10;
    const uint32_t data_off = 8 + 2 + n_entries * 12 + 4;
    const uint32_t data_bytes = uint32_t(h) * uint32_t(w) * 2;

    put16(buf, n_entries);
    put_entry(buf, kTagWidth, kTypeLong, uint32_t(w));
    put_entry(buf, kTagLength, kTypeLong, uint32_t(h));
    put_entry(buf, kTagBitsPerSample, kTypeShort, 16);
    put_entry(buf, kTagCompression, kTypeShort, 1);
    put_entry(buf, kTagPhotometric, kTypeShort, 1);  // BlackIsZero
    put_entry(buf, kTagStripOffsets, kTypeLong, data_off);
    put_entry(buf, kTagSamplesPerPixel, kTypeShort, 1);
    put_entry(buf, kTagRowsPerStrip, kTypeLong, uint32_t(h));
    put_entry(buf, kTagStripByteCounts, kTypeLong, data_bytes);
    put_entry(buf, kTagSampleFormat, kTypeShort, 2);  // signed integer
    put32(buf, 0);  // no further IFDs

    for (int64_t i = 0; i < img.pixels.size(); ++i) {
        const int16_t v = int16_t(std::llround(img.pixels[i]));
        put16(buf, uint16_t(v));
    }

    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot create TIFF file: " + path);
    f.write(buf.data(), std::streamsize(buf.size()));
    if (!f) throw std::runtime_error("failed to write TIFF file: " + path);
}

SliceImage load_slice_tiff(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open TIFF file: " + path);
    Reader r{std::vector<char>(std::istreambuf_iterator<char>(f), {}), path};
    if (r.bytes.size() < 8 || r.bytes[0] != 'I' || r.bytes[1] != 'I' || r.u16(2) != 42)
        throw std::runtime_error("not a little-endian TIFF file: " + path);

    const uint32_t ifd = r.u32(4);
    const uint16_t n = r.u16(ifd);
    std::map<uint16_t, std::vector<uint32_t>> tags;
    for (uint16_t i = 0; i < n; ++i) {
        const size_t off = ifd + 2 + size_t(i) * 12;
        tags[r.u16(off)] = tag_values(r, off);
    }

    auto one = [&](uint16_t tag, uint32_t fallback, bool required) -> uint32_t {
        auto it = tags.find(tag);
        if (it == tags.end()) {
            if (required)
                throw std::runtime_error("TIFF missing tag " + std::to_string(tag) + ": " + path);
            return fallback;
        }
        return it->second.at(0);
    };

    const uint32_t w = one(kTagWidth, 0, true);
    const uint32_t h = one(kTagLength, 0, true);
    if (one(kTagBitsPerSample, 1, false) != 16)
        throw std::runtime_error("TIFF is not 16-bit: " + path);
    if (one(kTagCompression, 1, false) != 1)
        throw std::runtime_error("compressed TIFF is not supported: " + path);
    if (one(kTagSamplesPerPixel, 1, false) != 1)
        throw std::runtime_error("TIFF is not single-channel: " + path);
    const uint32_t fmt = one(kTagSampleFormat, 1, false);
    if (fmt != 1 && fmt != 2)
        throw std::runtime_error("TIFF sample format must be integer: " + path);

    const auto& offsets = tags.at(kTagStripOffsets);
    const auto& counts = tags.count(kTagStripByteCounts) ? tags.at(kTagStripByteCounts)
                                                         : std::vector<uint32_t>{};
    if (counts.size() != offsets.size())
        throw std::runtime_error("TIFF strip offsets/counts mismatch: " + path);

    SliceImage img(int(h), int(w), Domain::HU16, Plane::Axial, 0);
    int64_t pix = 0;
    const int64_t total = int64_t(h) * w;
    for (size_t s = 0; s < offsets.size(); ++s) {
        const uint32_t base = offsets[s];
        const uint32_t np = counts[s] / 2;
        for (uint32_t i = 0; i < np; ++i) {
            if (pix >= total) throw std::runtime_error("TIFF has too much pixel data: " + path);
            const uint16_t raw = r.u16(base + size_t(i) * 2);
            img.pixels[pix++] = fmt == 2 ? real(int16_t(raw)) : real(raw);
        }
    }
    if (pix != total) throw std::runtime_error("TIFF pixel data incomplete: " + path);
    return img;
}

}  // namespace artinp
