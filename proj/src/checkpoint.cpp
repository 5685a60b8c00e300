#include "artinp/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace artinp::ckpt {

namespace {

using nlohmann::json;

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

void write_exact(std::FILE* f, const void* buf, size_t n, const std::string& path) {
    if (std::fwrite(buf, 1, n, f) != n)
        throw std::runtime_error("checkpoint: short write to " + path);
}

void read_exact(std::FILE* f, void* buf, size_t n, const std::string& path) {
    if (std::fread(buf, 1, n, f) != n)
        throw std::runtime_error("checkpoint: truncated file " + path);
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& c) {
    json header;
    header["format"] = 1;
    header["network"] = c.network;
    header["iteration"] = c.iteration;
    header["phase"] = c.phase;
    header["epoch"] = c.epoch;
    header["config_hash"] = c.config_hash;
    header["meta"] = c.meta;

    json dir = json::array();
    int64_t offset = 0;  // in doubles, from the start of the payload section
    for (const auto& [name, t] : c.tensors) {
        dir.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
        offset += t.size();
    }
    header["tensors"] = std::move(dir);

    const std::string hdr = header.dump();
    File f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    write_exact(f.get(), kMagic, sizeof(kMagic), path);
    const uint64_t hlen = hdr.size();
    unsigned char lenbuf[8];
    for (int i = 0; i < 8; ++i) lenbuf[i] = (unsigned char)(hlen >> (8 * i));
    write_exact(f.get(), lenbuf, 8, path);
    write_exact(f.get(), hdr.data(), hdr.size(), path);
    static_assert(sizeof(real) == 8, "payload format assumes 8-byte reals");
    for (const auto& [name, t] : c.tensors)
        write_exact(f.get(), t.data(), size_t(t.size()) * sizeof(real), path);
}

Checkpoint load_checkpoint(const std::string& path) {
    File f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[8];
    read_exact(f.get(), magic, 8, path);
    if (std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    unsigned char lenbuf[8];
    read_exact(f.get(), lenbuf, 8, path);
    uint64_t hlen = 0;
    for (int i = 0; i < 8; ++i) hlen |= uint64_t(lenbuf[i]) << (8 * i);
    if (hlen > (64u << 20)) throw std::runtime_error("checkpoint: implausible header in " + path);
    std::string hdr(hlen, '\0');
    read_exact(f.get(), hdr.data(), hlen, path);

    json header;
    try {
        header = json::parse(hdr);
    } catch (const std::exception& e) {
        throw std::runtime_error("checkpoint: corrupt header in " + path + ": " + e.what());
    }

    Checkpoint c;
    c.network = header.value("network", "");
    c.iteration = header.value("iteration", int64_t(0));
    c.phase = header.value("phase", 0);
    c.epoch = header.value("epoch", 0);
    c.config_hash = header.value("config_hash", "");
    if (header.contains("meta"))
        c.meta = header["meta"].get<std::map<std::string, std::string>>();

    for (const auto& entry : header.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
        Tensor t(shape);
        read_exact(f.get(), t.data(), size_t(t.size()) * sizeof(real), path);
        c.tensors.emplace(name, std::move(t));
    }
    return c;
}

void capture(Checkpoint& c, const Walker& walk) {
    walk([&c](const std::string& name, Tensor& v, Tensor*) {
        if (!c.tensors.emplace(name, v).second)
            throw std::logic_error("checkpoint: duplicate tensor name " + name);
    });
}

void restore(const Checkpoint& c, const Walker& walk) {
    walk([&c](const std::string& name, Tensor& v, Tensor*) {
        auto it = c.tensors.find(name);
        if (it == c.tensors.end())
            throw std::runtime_error("checkpoint: missing tensor " + name);
        if (!it->second.same_shape(v))
            throw std::runtime_error("checkpoint: shape mismatch for tensor " + name);
        v = it->second;
    });
}

}  // namespace artinp::ckpt
