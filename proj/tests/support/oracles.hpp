#pragma once

// Brute-force reference implementations used as independent test oracles.

#include <torch/torch.h>

#include <cstdint>

namespace bvsr::oracle {

/// Correlation of a [C, H, W] image with a [k, k] kernel, reflect (or
/// replicate) border, followed by sampling every `scale` pixels from
/// `offset`. Plain loops over doubles.
torch::Tensor blur_decimate(const torch::Tensor& image, const torch::Tensor& kernel, int64_t scale,
                            int64_t offset, bool replicate = false);

/// 10 log10(1 / mean squared difference).
double psnr(const torch::Tensor& a, const torch::Tensor& b);

/// SSIM on BT.601 luminance, computing each 11x11 Gaussian window directly.
double ssim(const torch::Tensor& a, const torch::Tensor& b);

/// Bilinear sample of a [C, H, W] image at (x, y) with border clamping.
double bilinear(const torch::Tensor& image, int64_t c, double x, double y);

}  // namespace bvsr::oracle
