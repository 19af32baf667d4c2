#pragma once

#include "bvsr/frame.hpp"

#include <torch/torch.h>

#include <vector>

namespace bvsr {

enum class PoolKind { kMax, kAverage };

struct KernelNetConfig {
  int64_t kernel_size = 13;
  std::vector<int64_t> conv_channels{64, 64, 128, 128};
  /// Zero-based conv layers followed by a stride-2 pooling.
  std::vector<int64_t> pool_after{1, 3};
  PoolKind pool = PoolKind::kMax;
  int64_t fc_hidden = 256;
  int64_t temporal_radius = 2;

  int64_t window_length() const { return 2 * temporal_radius + 1; }
  void validate() const;
};

/// Blur kernel estimator: a conv/pool feature stack over the channel-wise
/// concatenation of the window, global average pooling, two fully connected
/// layers and a softmax over k * k outputs.
class KernelNetImpl : public torch::nn::Module {
 public:
  explicit KernelNetImpl(KernelNetConfig cfg);

  /// window: [B, 2N+1, 3, H, W] -> unnormalized [B, k * k].
  torch::Tensor logits(const torch::Tensor& window);
  /// window: [B, 2N+1, 3, H, W] -> kernels [B, k, k], each summing to one.
  torch::Tensor forward(const torch::Tensor& window);

  const KernelNetConfig& config() const { return cfg_; }

 private:
  KernelNetConfig cfg_;
  torch::nn::ModuleList convs_;
  torch::nn::Linear fc1_{nullptr};
  torch::nn::Linear fc2_{nullptr};
};
TORCH_MODULE(KernelNet);

struct KernelEstimate {
  Kernel kernel;
};

/// Single-window convenience wrapper around KernelNet::forward.
KernelEstimate estimate_kernel(KernelNet& net, const std::vector<Frame>& window);

}  // namespace bvsr
