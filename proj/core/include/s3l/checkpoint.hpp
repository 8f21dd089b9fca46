#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "s3l/backbone.hpp"
#include "s3l/tensor.hpp"

namespace s3l {

/// Versioned binary snapshot: magic "S3L1", little-endian payloads with
/// per-tensor byte lengths. load(save(x)) is bit-exact, including the rng
/// seed and loop counters, so a resumed run replays an uninterrupted one.
struct Checkpoint {
    static constexpr uint32_t kVersion = 1;

    uint64_t spec_digest = 0;
    uint64_t stage = 0;       // 0-based stage index
    uint64_t epoch = 0;       // epochs completed within the stage
    uint64_t rng_seed = 0;
    uint64_t queue_ptr = 0;   // MoCo ring state; zero when unused
    uint64_t queue_fill = 0;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Throws unless the checkpoint was produced from a structurally identical
/// backbone spec.
void require_digest(const Checkpoint& ckpt, const BackboneSpec& spec);

/// Network params/buffers under their own names. Strict load: every network
/// tensor must be present with matching shape.
void pack_network(Checkpoint& ckpt, const Network& net, const std::string& prefix = "");
void unpack_network(const Checkpoint& ckpt, Network& net, const std::string& prefix = "");

}  // namespace s3l
