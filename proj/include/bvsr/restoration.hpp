#pragma once

#include "bvsr/frame.hpp"

#include <torch/torch.h>

#include <vector>

namespace bvsr {

struct RestorationConfig {
  int64_t n_resblocks = 20;
  int64_t feat_channels = 64;
  /// Residual blocks in the per-frame feature extractor.
  int64_t extractor_resblocks = 2;
  int64_t scale = 4;
  int64_t temporal_radius = 2;
  /// Add the bilinear upsampling of the centre frame to the output.
  bool global_residual = true;

  int64_t window_length() const { return 2 * temporal_radius + 1; }
  void validate() const;
};

/// conv3x3 -> ReLU -> conv3x3 plus identity, no normalization.
class ResBlockImpl : public torch::nn::Module {
 public:
  explicit ResBlockImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr};
  torch::nn::Conv2d conv2_{nullptr};
};
TORCH_MODULE(ResBlock);

/// Per-frame feature extractor; output keeps the input resolution.
class FeatureExtractorImpl : public torch::nn::Module {
 public:
  explicit FeatureExtractorImpl(const RestorationConfig& cfg);
  /// [B, 3, H, W] -> [B, F, H, W]
  torch::Tensor forward(const torch::Tensor& frames);

 private:
  torch::nn::Conv2d head_{nullptr};
  torch::nn::Sequential body_;
};
TORCH_MODULE(FeatureExtractor);

/// Fuses the centre features with the warped neighbour features, runs the
/// residual trunk at low resolution and upsamples with pixel shuffle.
class RestorerImpl : public torch::nn::Module {
 public:
  explicit RestorerImpl(const RestorationConfig& cfg);

  /// features: [B, 2N+1, F, H, W] in temporal order (centre in the middle),
  /// neighbours already aligned to the centre. center_frame: [B, 3, H, W],
  /// used only for the global residual. Returns [B, 3, scale*H, scale*W].
  torch::Tensor forward(const torch::Tensor& features, const torch::Tensor& center_frame);

  const RestorationConfig& config() const { return cfg_; }

 private:
  RestorationConfig cfg_;
  torch::nn::Conv2d fusion_{nullptr};
  torch::nn::Sequential trunk_;
  torch::nn::Conv2d trunk_tail_{nullptr};
  torch::nn::Sequential upsampler_;
  torch::nn::Conv2d tail_{nullptr};
};
TORCH_MODULE(Restorer);

FeatureMap extract_features(FeatureExtractor& net, const Frame& frame);

/// neighbours are ordered i-N .. i-1, i+1 .. i+N. `center_frame` feeds the
/// global residual and may be omitted when it is disabled.
Frame restore(Restorer& net, const FeatureMap& center, const std::vector<FeatureMap>& neighbours,
              const Frame* center_frame = nullptr);

}  // namespace bvsr
