#pragma once

// Procedural toy video data: textured scenes with moving rectangles,
// degraded with a known Gaussian kernel.

#include "bvsr/frame.hpp"

#include <torch/torch.h>

#include <filesystem>
#include <vector>

namespace bvsr::toy {

/// [frames, 3, size, size] float32 in [0, 1]; the background drifts by a
/// few pixels per frame and two rectangles move independently.
torch::Tensor make_hr_sequence(int64_t frames, int64_t size, uint64_t seed);

struct ToyDataset {
  std::filesystem::path lr_dir;  ///< lr/<seq>/%08d.png
  std::filesystem::path hr_dir;  ///< hr/<seq>/%08d.png
  Kernel kernel;
  std::vector<torch::Tensor> hr;  ///< per sequence [T, 3, sH, sW]
  std::vector<torch::Tensor> lr;  ///< per sequence, as written (8-bit quantized)
};

/// Writes `sequences` sequences of `frames` LR frames of lr_size x lr_size,
/// made from HR frames blurred with an isotropic Gaussian (13x13) and
/// decimated by `scale`.
ToyDataset write_toy_dataset(const std::filesystem::path& root, int64_t sequences = 2, int64_t frames = 10,
                             int64_t lr_size = 64, double sigma = 1.2, int64_t scale = 4, uint64_t seed = 7);

/// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace bvsr::toy
