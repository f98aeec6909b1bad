#pragma once

#include <cstdint>
#include <filesystem>

#include "stockode/model.hpp"

namespace stockode {

/// Everything a run needs to restart or evaluate: config snapshot, named
/// parameter tensors, Adam moments, epoch, and the training random streams.
struct CheckpointInfo {
  ModelConfig config;
  std::uint64_t epoch = 0;
  std::uint64_t rng_seed = 0;
  std::uint64_t noise_counter = 0;
  std::uint64_t pair_counter = 0;
};

void save_checkpoint(const std::filesystem::path& path, StockOde& model,
                     const AdamState& adam, const CheckpointInfo& info);

/// Header only; used to rebuild the model before loading tensors.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

/// Loads tensors into an already-constructed model; every stored parameter
/// must exist with a matching shape or ConfigError is thrown.
CheckpointInfo load_checkpoint(const std::filesystem::path& path,
                               StockOde& model, AdamState& adam);

}  // namespace stockode
