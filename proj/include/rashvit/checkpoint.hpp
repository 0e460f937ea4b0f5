#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rashvit/model.hpp"

namespace rashvit::checkpoint {

// On-disk layout:
//   magic "RASHVIT1"
//   uint32 little-endian header length
//   UTF-8 JSON header {"config": ..., "tensors": [{name, dtype "f32", shape, offset}]}
//   raw little-endian row-major f32 blobs (offsets relative to the blob section)
// save(load(save(P))) is byte-identical.

struct LoadedCheckpoint {
    model::ModelConfig config;
    std::vector<std::pair<std::string, Tensor<float>>> tensors;  // params then buffers
};

void save(const std::string& path, const model::RaShvitNet<float>& net);
LoadedCheckpoint load(const std::string& path);

// Copies loaded tensors into a freshly constructed net by name; throws on any
// missing or shape-mismatched entry.
void apply(model::RaShvitNet<float>& net, const LoadedCheckpoint& ckpt);

// Convenience: load + construct + apply.
model::RaShvitNet<float> restore(const std::string& path);

}  // namespace rashvit::checkpoint
