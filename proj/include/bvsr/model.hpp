#pragma once

#include "bvsr/flow.hpp"
#include "bvsr/kernel_net.hpp"
#include "bvsr/restoration.hpp"

#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace bvsr {

struct ModelConfig {
  KernelNetConfig kernel;
  FlowProviderConfig flow;
  RestorationConfig restoration;
};

/// The four networks of the method: kernel estimator, flow estimator,
/// feature extractor and restorer. Parameter names are grouped under the
/// prefixes nk/, nf/, ne/ and ni/.
class VideoSR {
 public:
  explicit VideoSR(const ModelConfig& cfg);

  /// window [B, 2N+1, 3, h, w] -> kernels [B, k, k].
  torch::Tensor estimate_kernels(const torch::Tensor& window);

  /// Restoration path for a window: features of every frame, flow from each
  /// neighbour to the centre, feature warping, fusion and upsampling.
  /// Returns the centre frame at scale x resolution.
  torch::Tensor restore_window(const torch::Tensor& window);

  std::vector<std::pair<std::string, torch::Tensor>> named_parameters();
  std::vector<torch::Tensor> parameters(const std::string& group);
  void train(bool on);

  const ModelConfig& config() const { return cfg_; }
  int64_t center_index() const { return cfg_.restoration.temporal_radius; }

  KernelNet kernel_net;
  FeatureExtractor extractor;
  Restorer restorer;
  std::shared_ptr<FlowEstimator> flow;

 private:
  ModelConfig cfg_;
};

}  // namespace bvsr
