#pragma once

#include <cstdint>
#include <string>

#include "r2o/encoder.hpp"
#include "r2o/optim.hpp"

namespace r2o {

struct CheckpointMeta {
    std::uint32_t version = 1;
    int epoch = 0;  // next epoch to run
    long step = 0;  // global step counter
    std::uint64_t config_hash = 0;
    std::uint64_t base_seed = 0;
};

// Versioned binary checkpoint (see docs/formats.md): online and target
// parameters, BN running statistics, optimizer momentum, counters, config
// hash and the derivation seed. Save-after-load reproduces the bytes.
void save_checkpoint(const std::string& path, NetworkPair& pair, const OptimizerState& opt,
                     const CheckpointMeta& meta);

// Restores tensors in place; shapes must match the constructed pair.
// Throws on config-hash mismatch unless `force`.
CheckpointMeta load_checkpoint(const std::string& path, NetworkPair& pair, OptimizerState& opt,
                               std::uint64_t expected_config_hash, bool force = false);

// Metadata only (epoch, seed, hash) without touching tensors.
CheckpointMeta peek_checkpoint(const std::string& path);

}  // namespace r2o
