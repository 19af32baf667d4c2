#pragma once

#include "bvsr/frame.hpp"

#include <torch/script.h>
#include <torch/torch.h>

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace bvsr {

enum class FlowBackend { kBuiltin, kExternal };

std::string to_string(FlowBackend b);
FlowBackend flow_backend_from_string(const std::string& s);

struct FlowProviderConfig {
  FlowBackend backend = FlowBackend::kBuiltin;
  /// Required for kExternal (a TorchScript module); optional warm start for
  /// kBuiltin (a tensor archive written by save_flow_parameters).
  std::string checkpoint_path;
  bool trainable = true;
  /// Flow learning rate relative to the main one. Unset means: 1.0 when the
  /// builtin network starts from scratch, 0.01 when it starts from weights.
  std::optional<double> lr_scale;
  int64_t levels = 3;
  int64_t channels = 32;

  bool pretrained() const { return !checkpoint_path.empty(); }
  double resolved_lr_scale() const { return lr_scale.value_or(pretrained() ? 0.01 : 1.0); }
  void validate() const;
};

/// Bilinear "pull" warp with border replication:
/// out(p) = in(p + flow(p)). features [B, C, H, W], flow [B, 2, H, W].
/// Differentiable with respect to both arguments.
torch::Tensor warp(const torch::Tensor& features, const torch::Tensor& flow);

FeatureMap warp(const FeatureMap& features, const FlowField& flow);
Frame warp(const Frame& frame, const FlowField& flow);

/// Optical flow between two frames such that warp(source, flow) ~ target.
class FlowEstimator {
 public:
  virtual ~FlowEstimator() = default;

  /// source, target: [B, 3, H, W] -> flow [B, 2, H, W].
  virtual torch::Tensor forward(const torch::Tensor& source, const torch::Tensor& target) = 0;
  virtual std::vector<std::pair<std::string, torch::Tensor>> named_parameters() = 0;
  virtual void set_training(bool on) = 0;

  std::vector<torch::Tensor> parameters();
};

/// Small coarse-to-fine estimator: at every pyramid level a conv stack sees
/// the target, the source warped by the upsampled coarser flow, that flow
/// and a 5x5 correlation cost volume between the two, and predicts a
/// residual update.
class PyramidFlowNetImpl : public torch::nn::Module {
 public:
  PyramidFlowNetImpl(int64_t levels, int64_t channels);
  torch::Tensor forward(const torch::Tensor& source, const torch::Tensor& target);

 private:
  int64_t levels_;
  torch::nn::ModuleList stages_;
};
TORCH_MODULE(PyramidFlowNet);

class BuiltinFlow : public FlowEstimator {
 public:
  BuiltinFlow(int64_t levels, int64_t channels);

  torch::Tensor forward(const torch::Tensor& source, const torch::Tensor& target) override;
  std::vector<std::pair<std::string, torch::Tensor>> named_parameters() override;
  void set_training(bool on) override { net_->train(on); }

  PyramidFlowNet& net() { return net_; }

 private:
  PyramidFlowNet net_;
};

/// Wraps a TorchScript module whose forward(source, target) returns a
/// [B, 2, H, W] flow in the pull convention.
class ScriptedFlow : public FlowEstimator {
 public:
  explicit ScriptedFlow(const std::string& path);

  torch::Tensor forward(const torch::Tensor& source, const torch::Tensor& target) override;
  std::vector<std::pair<std::string, torch::Tensor>> named_parameters() override;
  void set_training(bool on) override { module_.train(on); }

 private:
  torch::jit::Module module_;
};

std::shared_ptr<FlowEstimator> make_flow_estimator(const FlowProviderConfig& cfg);

/// Writes / reads flow parameters as a named tensor archive.
void save_flow_parameters(FlowEstimator& flow, const std::string& path);
void load_flow_parameters(FlowEstimator& flow, const std::string& path);

FlowField estimate_flow(FlowEstimator& flow, const Frame& source, const Frame& target);

/// Supervised warm-up of a flow estimator on synthetic sub-pixel
/// translations of random textures. Returns the final mean endpoint error.
double pretrain_flow_on_translations(FlowEstimator& flow, int64_t steps, double lr,
                                     int64_t size, double max_shift, uint64_t seed);

}  // namespace bvsr
