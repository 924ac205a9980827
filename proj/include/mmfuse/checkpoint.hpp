#pragma once

#include <filesystem>
#include <vector>

#include "mmfuse/train.hpp"

namespace mmfuse {

/// Checkpoint layout, little-endian:
///   "MMCK" | u32 version (=1) | u64 index length | JSON index | tensor blocks
/// Each tensor block is one MMFB record. The index echoes the model and
/// training configuration, the MSL lexicon and range, and lists every tensor
/// as {name, offset (from the first block), rows, cols, fnv1a64 of the block}.
/// Graph node embeddings are stored as "graph.txt.nodes" / "graph.img.nodes"
/// and the graphs are rebuilt on load.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::byte> encode_checkpoint(const TrainedModel& model);

/// Throws CheckpointError naming the offending tensor or field.
TrainedModel decode_checkpoint(std::span<const std::byte> bytes);

void save_checkpoint(const std::filesystem::path& path, const TrainedModel& model);
TrainedModel load_checkpoint(const std::filesystem::path& path);

} // namespace mmfuse
