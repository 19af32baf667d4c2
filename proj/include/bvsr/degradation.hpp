#pragma once

// Image formation model: y = decimate(blur(x, K)) + n.
//
// Blur is a 2-D correlation (the kernel is not flipped) so synthesis and the
// loss-side re-degradation use the kernel in the same orientation.

#include "bvsr/frame.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace bvsr {

enum class Padding { kReflect, kReplicate };

std::string to_string(Padding p);
Padding padding_from_string(const std::string& s);

struct DegradationConfig {
  int64_t scale = 4;
  /// Std of additive Gaussian noise in [0, 1] intensity units.
  double noise_sigma = 0.0;
  int64_t decimation_offset = 0;
  Padding padding = Padding::kReflect;

  void validate() const;
};

/// Anisotropic Gaussian sampled at integer offsets from the centre, with the
/// principal axes rotated by `theta` radians, normalized to unit mass.
Kernel make_gaussian_kernel(int64_t size, double sigma_x, double sigma_y, double theta);

/// Plain-text kernel file: first line k, then k rows of k reals.
Kernel read_kernel_file(const std::filesystem::path& path);
void write_kernel_file(const std::filesystem::path& path, const Kernel& kernel);

struct KernelBank {
  std::vector<Kernel> kernels;
  std::vector<std::filesystem::path> sources;
  /// One entry per rejected file.
  std::vector<std::string> warnings;
};

/// Loads every kernel file (`*.txt` text files, `*.pt` tensor archives) in a
/// directory. Kernels are renormalized to unit mass; kernels with negative
/// weights are rejected with a warning.
KernelBank load_kernel_bank(const std::filesystem::path& dir);

// Batched tensor forms used inside the training loop. `images` is
// [B, C, H, W]; `kernels` is [k, k] (shared) or [B, k, k] (per sample).

torch::Tensor blur(const torch::Tensor& images, const torch::Tensor& kernels, Padding padding);
torch::Tensor decimate(const torch::Tensor& images, int64_t scale, int64_t offset);

Frame blur(const Frame& frame, const Kernel& kernel, Padding padding = Padding::kReflect);
Frame decimate(const Frame& frame, int64_t scale, int64_t offset = 0);

/// Centre crop so both spatial sizes are multiples of `scale`.
Frame crop_to_multiple(const Frame& frame, int64_t scale);

/// Per frame: blur, decimate, add N(0, noise_sigma^2). Deterministic in `seed`.
FrameSequence degrade_sequence(const FrameSequence& hr, const Kernel& kernel,
                               const DegradationConfig& cfg, uint64_t seed);

}  // namespace bvsr
