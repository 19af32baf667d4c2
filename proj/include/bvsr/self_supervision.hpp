#pragma once

// Self-supervised objective: re-degradation loss on the estimated HR frame,
// kernel priors, and the auxiliary paired-data restoration loss.

#include "bvsr/degradation.hpp"
#include "bvsr/kernel_net.hpp"

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <string>
#include <vector>

namespace bvsr {

enum class Rho { kL1, kL2 };

std::string to_string(Rho r);
Rho rho_from_string(const std::string& s);

struct LossConfig {
  double lambda = 1.0;
  double gamma = 0.04;
  double alpha = 0.5;
  Rho rho = Rho::kL1;
  double boundary_weight = 0.5;
  double center_weight = 1.0;
  /// Sever the gradient path from the re-degradation loss into the HR
  /// estimate, so that loss trains only the kernel estimator.
  bool detach_in_lself = true;
  bool enable_li = true;
  bool enable_lk = true;
  /// Let the auxiliary loss reach the kernel estimator through the
  /// auxiliary frames. Off by default.
  bool aux_kernel_grad = false;

  void validate() const;
};

/// Scalar loss values. Disabled terms are still reported but do not enter
/// `total`. `l_supervised` is only used in the supervised training mode.
struct LossBundle {
  double l_self = 0.0;
  double l_k = 0.0;
  double l_boundary = 0.0;
  double l_center = 0.0;
  double l_I = 0.0;
  double l_supervised = 0.0;
  double total = 0.0;

  nlohmann::json to_json() const;
};

/// Differentiable counterparts of the LossBundle terms (0-dim tensors).
struct LossParts {
  torch::Tensor l_self;
  torch::Tensor l_k;
  torch::Tensor l_boundary;
  torch::Tensor l_center;
  torch::Tensor l_I;
};

/// Mean robust distance between two equally sized tensors.
torch::Tensor robust_distance(const torch::Tensor& a, const torch::Tensor& b, Rho rho);

struct AuxiliaryPairs {
  torch::Tensor window;  ///< [B, 2N+1, 3, h/s, w/s]
  torch::Tensor target;  ///< [B, 3, h, w], the unmodified centre LR frame
};

/// Re-degrades every frame of the LR window with the window's kernel, so the
/// LR input acts as the HR target of an auxiliary pair. The kernel is
/// detached unless `keep_kernel_grad` is set.
AuxiliaryPairs generate_auxiliary_pairs(const torch::Tensor& lr_window, const torch::Tensor& kernels,
                                        const DegradationConfig& cfg, bool keep_kernel_grad = false);

struct AuxiliaryFrames {
  std::vector<Frame> window;
  Frame target;
};
AuxiliaryFrames generate_auxiliary_pairs(const std::vector<Frame>& lr_window, const KernelEstimate& kernel,
                                         const DegradationConfig& cfg);

/// rho(decimate(blur(hr, K)) - observed). hr [B, 3, sH, sW], kernels [B, k, k]
/// or [k, k], observed [B, 3, H, W].
torch::Tensor loss_self(const torch::Tensor& hr_estimate, const torch::Tensor& kernels,
                        const torch::Tensor& observed, const LossConfig& loss, const DegradationConfig& deg);
double loss_self(const Frame& hr_estimate, const KernelEstimate& kernel, const Frame& observed,
                 const LossConfig& loss, const DegradationConfig& deg);

// Kernel priors. `kernels` is [k, k] or [B, k, k]; batched inputs are averaged.

/// Hyper-Laplacian sparsity, sum_i |w_i|^alpha, with zero (sub)gradient at 0.
torch::Tensor loss_kernel_sparsity(const torch::Tensor& kernels, double alpha);
/// Mass outside the central half-extent box, weighted by a mask rising
/// linearly from 0 at the box to 1 at the kernel border.
torch::Tensor loss_kernel_boundary(const torch::Tensor& kernels);
/// Squared pixel distance between the centre of mass and the kernel centre.
torch::Tensor loss_kernel_center(const torch::Tensor& kernels);
/// The [k, k] mask used by loss_kernel_boundary.
torch::Tensor boundary_mask(int64_t k);

double loss_kernel_sparsity(const Kernel& kernel, double alpha);
double loss_kernel_boundary(const Kernel& kernel);
double loss_kernel_center(const Kernel& kernel);

torch::Tensor loss_restoration(const torch::Tensor& aux_output, const torch::Tensor& target, Rho rho);
double loss_restoration(const Frame& aux_output, const Frame& target, Rho rho);

/// Weighted objective. Disabled terms contribute exactly nothing.
torch::Tensor total_loss(const LossParts& parts, const LossConfig& cfg);
LossBundle total_loss(const LossBundle& parts, const LossConfig& cfg);

}  // namespace bvsr
