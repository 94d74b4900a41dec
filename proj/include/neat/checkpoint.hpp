#pragma once

#include <cstdint>
#include <string>

#include "neat/training.hpp"

namespace neat {

/// Binary layout (little-endian on the platforms we build for):
///   "NEATCKPT"            8 bytes
///   format version        u32
///   header length         u64
///   header                JSON: shape table, adapter hyperparameters, seed
///   payload               f64 values in header order
///   checksum              u64 FNV-1a over every preceding byte
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  train::AdaptedModel model;
  std::uint64_t seed = 0;
  std::string note;  // free-form provenance, e.g. the experiment that wrote it
};

/// Throws IntegrityError when the file cannot be written.
void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);

/// Validates magic, version (VersionError), header and shape table before
/// reading buffers; truncation, trailing bytes or a checksum mismatch raise
/// IntegrityError.
Checkpoint load_checkpoint(const std::string& path);

/// Human-readable listing of layers, shapes and adapter settings.
std::string checkpoint_summary(const Checkpoint& checkpoint);

}  // namespace neat
