#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "invad/tensor.hpp"

namespace invad {

// FTEN layout, all little-endian:
//   offset  0  "FTEN"
//   offset  4  u32 version (= 1)
//   offset  8  u32 N, u32 C, u32 h, u32 w
//   offset 24  N*C*h*w float32 in (n, c, y, x) row-major order
// Nothing may follow the payload.
inline constexpr std::uint32_t kFtenVersion = 1;
inline constexpr std::size_t kFtenHeaderBytes = 24;

/// Encodes tensors of identical shape {C, h, w}; values are narrowed to float32.
std::vector<std::uint8_t> encode_ften(std::span<const Tensor> tensors);
/// Throws FormatError with the failing byte offset.
std::vector<Tensor> decode_ften(std::span<const std::uint8_t> bytes);

void write_ften(const std::filesystem::path& path, std::span<const Tensor> tensors);
std::vector<Tensor> read_ften(const std::filesystem::path& path);

/// {h, w} masks stored as N x 1 x h x w.
void write_ften_masks(const std::filesystem::path& path, std::span<const Tensor> masks);
std::vector<Tensor> read_ften_masks(const std::filesystem::path& path);

}  // namespace invad
