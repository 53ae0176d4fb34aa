#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "cefnet/nn/module.hpp"

namespace cefnet::nn {

// Layout: magic "CEFN", version byte, u32 record count, then per record
// u32 name length, name bytes, u32 rank, u64 dims, raw f64 values. All
// integers and floats little-endian.
inline constexpr std::array<char, 4> kCheckpointMagic{'C', 'E', 'F', 'N'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Snapshot& records);
Snapshot load_checkpoint(const std::filesystem::path& path);

inline void save_checkpoint(const std::filesystem::path& path, Module& module) {
  save_checkpoint(path, module.snapshot());
}

}  // namespace cefnet::nn
