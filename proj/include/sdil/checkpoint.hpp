#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "sdil/config.hpp"
#include "sdil/discovery.hpp"

namespace sdil::harness {

// Binary checkpoint: magic "SDIL", 32-bit little-endian version, RNG seed,
// the config echo, then repeated tensor records
//   [name_len u32][name utf-8][rank u32][dims u32 x rank][payload f32 LE]
// and a trailing CRC32 over all payload bytes. Round-trips are bitwise.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointBundle {
    std::unique_ptr<policy::PolicyStack> model;
    discovery::OptimalityTable table;
    RunConfig config;
    std::uint64_t seed = 0;
};

void save_checkpoint(policy::PolicyStack& model, const discovery::OptimalityTable* table,
                     const RunConfig& config, const std::string& path);

CheckpointBundle load_checkpoint(const std::string& path);

std::uint32_t crc32(const unsigned char* data, std::size_t len, std::uint32_t seed = 0);

} // namespace sdil::harness
