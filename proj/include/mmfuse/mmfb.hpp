#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "mmfuse/tensor.hpp"

namespace mmfuse {

/// MMFB tensor encoding, little-endian:
///   "MMFB" | u32 version (=1) | u32 rows | u32 cols | rows*cols binary32, row-major
inline constexpr std::uint32_t kMmfbVersion = 1;
inline constexpr std::size_t kMmfbHeaderSize = 16;

std::vector<std::byte> encode_mmfb(const Matrix& m);

/// Decodes one tensor from the front of `bytes`. When `consumed` is null the
/// buffer must hold exactly one tensor; otherwise the number of bytes used is
/// written there and trailing data is left alone.
///
/// Throws FormatError (BadMagic, VersionMismatch, Truncated, NonFinite,
/// TrailingBytes). `base_offset` is added to reported offsets.
Matrix decode_mmfb(std::span<const std::byte> bytes, std::size_t* consumed = nullptr,
                   std::uint64_t base_offset = 0);

void save_matrix(const std::filesystem::path& path, const Matrix& m);
Matrix load_matrix(const std::filesystem::path& path);

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes);

} // namespace mmfuse
