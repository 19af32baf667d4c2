#pragma once

// Single-file checkpoint: a pickled dictionary (readable with torch.load)
// holding parameters under nk/ ne/ ni/ nf/, the serialized optimizer, the
// resolved config JSON and the training counters / RNG states.

#include "bvsr/model.hpp"

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <filesystem>
#include <string>

namespace bvsr {

struct CheckpointMeta {
  int64_t epoch = 0;
  int64_t step = 0;
  nlohmann::json config;
  std::string sampler_rng;
  torch::Tensor torch_rng;
};

/// Written to a temporary file and renamed into place.
void save_checkpoint(const std::filesystem::path& path, VideoSR& model, torch::optim::Optimizer* optimizer,
                     const CheckpointMeta& meta);

/// Reads only the metadata (config, counters).
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);

/// Restores parameters (and optimizer state when given) into an already
/// constructed model whose architecture matches the stored config.
CheckpointMeta load_checkpoint(const std::filesystem::path& path, VideoSR& model,
                               torch::optim::Optimizer* optimizer);

}  // namespace bvsr
