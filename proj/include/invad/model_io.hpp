#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "invad/mlp.hpp"
#include "invad/schedule.hpp"

namespace invad {

// Model file, all little-endian:
//   "IVAD"  u32 version (= 1)
//   u32 T   f64 beta_first   f64 beta_last
//   u32 C   u32 h   u32 w
//   u32 depth   u32 width   u32 cond_dim   u32 time_dim
//   u64 parameter count, then that many float32 parameters
//   u32 CRC-32 (zlib polynomial) of every preceding byte
inline constexpr std::uint32_t kModelVersion = 1;

struct SavedModel {
    NoiseSchedule schedule;
    MlpEpsModel model;
};

std::vector<std::uint8_t> encode_model(const NoiseSchedule& schedule, const MlpEpsModel& model);
/// Throws FormatError (with byte offset) on bad magic, version, size or checksum.
SavedModel decode_model(std::span<const std::uint8_t> bytes);

void save_model(const std::filesystem::path& path, const NoiseSchedule& schedule, const MlpEpsModel& model);
SavedModel load_model(const std::filesystem::path& path);

/// Parameters rounded through float32, as they would be after a save/load cycle.
MlpEpsModel quantize_params(const MlpEpsModel& model);

}  // namespace invad
