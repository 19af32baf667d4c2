#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <vector>

namespace bvsr {

/// A single RGB frame stored channel-first as a [3, H, W] floating tensor.
/// Values are nominally in [0, 1]; clamping happens only when writing files.
class Frame {
 public:
  Frame() = default;
  /// Accepts [3, H, W] or [1, H, W] (replicated to three channels).
  explicit Frame(torch::Tensor data);

  const torch::Tensor& data() const { return data_; }
  int64_t channels() const { return data_.size(0); }
  int64_t height() const { return data_.size(1); }
  int64_t width() const { return data_.size(2); }

 private:
  torch::Tensor data_;
};

/// Ordered frames sharing one shape.
class FrameSequence {
 public:
  FrameSequence() = default;
  explicit FrameSequence(std::vector<Frame> frames, std::optional<double> fps_hint = std::nullopt);
  /// From a [T, 3, H, W] tensor.
  static FrameSequence from_stacked(const torch::Tensor& stacked);

  const std::vector<Frame>& frames() const { return frames_; }
  const Frame& operator[](size_t i) const { return frames_.at(i); }
  size_t size() const { return frames_.size(); }
  bool empty() const { return frames_.empty(); }
  std::optional<double> fps_hint() const { return fps_hint_; }

  /// [T, 3, H, W]
  torch::Tensor stacked() const;

 private:
  std::vector<Frame> frames_;
  std::optional<double> fps_hint_;
};

/// Square, odd-sized, non-negative blur kernel with unit mass.
///
/// The weights tensor may carry autograd history when it comes from the
/// kernel estimation network; the invariants are checked on its values.
class Kernel {
 public:
  static constexpr double kSumTolerance = 1e-5;

  Kernel() = default;
  /// Validates without modifying the weights.
  explicit Kernel(torch::Tensor weights);

  /// Divides by the total mass. Rejects negative weights and zero mass.
  static Kernel normalized(torch::Tensor raw);
  static Kernel delta(int64_t size);
  static Kernel uniform(int64_t size);

  const torch::Tensor& weights() const { return weights_; }
  int64_t size() const { return weights_.size(0); }

 private:
  torch::Tensor weights_;
};

/// Per-pixel displacement in pixels, [2, H, W] with channel 0 = dx, 1 = dy.
/// Sampling convention is "pull": output(p) = input(p + flow(p)).
struct FlowField {
  torch::Tensor data;
};

/// Feature tensor [F, H, W] at the resolution of the frame it came from.
struct FeatureMap {
  torch::Tensor data;
};

/// Indices of a (2 * radius + 1)-frame window centred on `center`, clamped
/// to [0, length) so edge frames are replicated.
std::vector<int64_t> window_indices(int64_t center, int64_t radius, int64_t length);

}  // namespace bvsr
