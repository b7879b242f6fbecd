#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "pah/config.hpp"
#include "pah/model.hpp"
#include "pah/optimizer.hpp"

namespace pah {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::size_t epoch = 0;  // completed epochs
  std::size_t optimizer_steps = 0;
  std::string rng_state;  // serialized generator states of the trainer
};

/// Writes config text, every parameter, BN running statistics and the
/// optimizer state into one binary file.
void save_checkpoint(const std::filesystem::path& path, const RunConfig& config,
                     const PahModel& model, const Optimizer* optimizer, const CheckpointMeta& meta);

struct LoadedCheckpoint {
  RunConfig config;
  PahModel model;
  CheckpointMeta meta;
  NamedTensors optimizer_state;
};

/// Rebuilds the model from the stored config and restores all tensors.
/// Throws IoError on a bad header or missing/mismatched tensor blocks.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Copies values of `source` into `target` tensors with the same names.
void restore_tensors(const NamedTensors& source, NamedTensors& target, const std::string& what);

}  // namespace pah
