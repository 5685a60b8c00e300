#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>

#include "artinp/nn.hpp"
#include "artinp/tensor.hpp"

namespace artinp::ckpt {

// On-disk container: 8-byte magic, little-endian u64 header length, JSON
// header (network tag, counters, tensor directory), then the raw tensor
// payloads as little-endian doubles in directory order.
inline constexpr char kMagic[8] = {'A', 'R', 'T', 'C', 'K', 'P', 'T', '1'};

struct Checkpoint {
    std::string network;  // e.g. "completion_gen", "translation_gen"
    int64_t iteration = 0;
    int phase = 0;  // completion training phase, 0 when not applicable
    int epoch = 0;  // translation training epoch, 0 when not applicable
    std::string config_hash;
    std::map<std::string, std::string> meta;  // free-form extras
    std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

// Walkers bridge networks/optimizers (anything exposing visit) to the
// name -> tensor map. capture copies current values in; restore copies them
// back out, throwing on missing names or shape mismatches.
using Walker = std::function<void(const nn::TensorVisitor&)>;

void capture(Checkpoint& c, const Walker& walk);
void restore(const Checkpoint& c, const Walker& walk);

}  // namespace artinp::ckpt
