#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pdn/param_store.h"

namespace pdn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Serialized parameter values. Layout (little endian):
///   "PDNCKPT\0" | u32 version | u64 group count
///   per group: u32 name length | name bytes | u64 rows | u64 cols | rows*cols f64
///   u64 FNV-1a of everything above
std::vector<std::byte> encode_checkpoint(const ParamStore& params);

/// Loads values into a store whose groups already exist with matching names and shapes.
/// Throws IntegrityError on truncation, bad magic, checksum mismatch or shape mismatch.
void decode_checkpoint(std::span<const std::byte> bytes, ParamStore& params);

/// Reconstructs a standalone store holding every group in the blob.
ParamStore decode_checkpoint(std::span<const std::byte> bytes);

/// Model id: FNV-1a over the encoded checkpoint.
std::uint64_t checkpoint_id(const ParamStore& params);

void save_checkpoint(const ParamStore& params, const std::filesystem::path& path);
void load_checkpoint(const std::filesystem::path& path, ParamStore& params);

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes);

}  // namespace pdn
