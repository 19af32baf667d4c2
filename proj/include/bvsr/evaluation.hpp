#pragma once

#include "bvsr/degradation.hpp"
#include "bvsr/frame.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace bvsr {

/// SSIM constants: luminance Y = 0.299 R + 0.587 G + 0.114 B, 11x11 Gaussian
/// window with sigma 1.5 applied over the valid region, C1 = (0.01 L)^2,
/// C2 = (0.03 L)^2 with dynamic range L = 1.
struct SsimParams {
  static constexpr int kWindow = 11;
  static constexpr double kSigma = 1.5;
  static constexpr double kC1 = 0.01 * 0.01;
  static constexpr double kC2 = 0.03 * 0.03;
};

/// 10 log10(1 / MSE) over all channels; +infinity for identical frames.
double psnr(const Frame& a, const Frame& b, int64_t crop_border = 0);
double ssim(const Frame& a, const Frame& b, int64_t crop_border = 0);

/// Pearson correlation of two kernels; the smaller one is zero-padded to the
/// size of the larger. Returns 0 when either kernel is constant.
double kernel_ncc(const Kernel& a, const Kernel& b);

struct FrameScore {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct SequenceReport {
  std::string name;
  std::vector<FrameScore> frames;
  /// Means over frames; psnr is +infinity if any frame matches exactly.
  double psnr = 0.0;
  double ssim = 0.0;
  std::optional<double> regenerated_psnr;
  std::optional<double> regenerated_ssim;
  std::optional<double> kernel_ncc;

  nlohmann::json to_json() const;
};

struct MetricReport {
  std::vector<SequenceReport> sequences;
  double psnr = 0.0;
  double ssim = 0.0;

  nlohmann::json to_json() const;
};

SequenceReport evaluate_sequence(const std::string& name, const FrameSequence& pred, const FrameSequence& gt,
                                 int64_t crop_border = 0);

/// Pairs sequences by directory name (or treats both directories as single
/// sequences) and scores frames with matching file names.
MetricReport evaluate_directories(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                                  int64_t crop_border = 0);

/// Degrades the ground-truth HR frames with `estimated` (no noise) and scores
/// the result against the observed LR frames. Fills regenerated_psnr/ssim.
SequenceReport evaluate_regenerated_lr(const Kernel& estimated, const FrameSequence& hr_gt,
                                       const FrameSequence& lr_obs, const DegradationConfig& cfg);

/// JSON encoding of metric values: non-finite numbers become "inf"/"-inf".
nlohmann::json metric_value(double v);

}  // namespace bvsr
