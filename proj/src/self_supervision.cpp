#include "bvsr/self_supervision.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace bvsr {

std::string to_string(Rho r) { return r == Rho::kL1 ? "l1" : "l2"; }

Rho rho_from_string(const std::string& s) {
  if (s == "l1" || s == "L1") return Rho::kL1;
  if (s == "l2" || s == "L2") return Rho::kL2;
  throw std::invalid_argument("unknown robust function '" + s + "' (expected l1|l2)");
}

void LossConfig::validate() const {
  if (!(lambda >= 0.0) || !(gamma >= 0.0)) throw std::invalid_argument("lambda and gamma must be >= 0");
  if (!(boundary_weight >= 0.0) || !(center_weight >= 0.0)) {
    throw std::invalid_argument("boundary and center weights must be >= 0");
  }
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in (0, 1]");
}

nlohmann::json LossBundle::to_json() const {
  return {{"l_self", l_self}, {"l_k", l_k},   {"l_boundary", l_boundary}, {"l_center", l_center},
          {"l_I", l_I},       {"l_supervised", l_supervised}, {"total", total}};
}

torch::Tensor robust_distance(const torch::Tensor& a, const torch::Tensor& b, Rho rho) {
  if (a.sizes() != b.sizes()) {
    std::ostringstream os;
    os << "loss inputs differ in shape: " << a.sizes() << " vs " << b.sizes();
    throw std::invalid_argument(os.str());
  }
  auto d = a - b;
  return rho == Rho::kL1 ? d.abs().mean() : d.pow(2).mean();
}

AuxiliaryPairs generate_auxiliary_pairs(const torch::Tensor& lr_window, const torch::Tensor& kernels,
                                        const DegradationConfig& cfg, bool keep_kernel_grad) {
  cfg.validate();
  if (lr_window.dim() != 5 || lr_window.size(1) % 2 == 0) {
    throw std::invalid_argument("auxiliary pairs need a [B, 2N+1, 3, h, w] window");
  }
  const int64_t b = lr_window.size(0);
  const int64_t t = lr_window.size(1);
  const int64_t k = kernels.size(-1);
  const int64_t need = cfg.scale * k;
  if (lr_window.size(3) < need || lr_window.size(4) < need) {
    std::ostringstream os;
    os << "LR frames of " << lr_window.size(3) << "x" << lr_window.size(4)
       << " are too small for auxiliary pairs with scale " << cfg.scale << " and a " << k << "x" << k
       << " kernel; increase the patch size to at least " << need;
    throw std::invalid_argument(os.str());
  }
  auto kern = keep_kernel_grad ? kernels : kernels.detach();
  if (kern.dim() == 2) kern = kern.unsqueeze(0).expand({b, k, k});
  if (kern.size(0) != b) throw std::invalid_argument("one kernel per window required");
  auto frames = lr_window.flatten(0, 1);
  auto blurred = blur(frames, kern.repeat_interleave(t, 0), cfg.padding);
  auto aux = decimate(blurred, cfg.scale, cfg.decimation_offset);
  return {aux.reshape({b, t, 3, aux.size(2), aux.size(3)}), lr_window.select(1, t / 2)};
}

AuxiliaryFrames generate_auxiliary_pairs(const std::vector<Frame>& lr_window, const KernelEstimate& kernel,
                                         const DegradationConfig& cfg) {
  if (lr_window.empty() || lr_window.size() % 2 == 0) {
    throw std::invalid_argument("auxiliary pairs need an odd-length window");
  }
  std::vector<torch::Tensor> frames;
  for (const auto& f : lr_window) {
    if (f.data().sizes() != lr_window.front().data().sizes()) {
      throw std::invalid_argument("window frames must share one shape");
    }
    frames.push_back(f.data());
  }
  auto pairs = generate_auxiliary_pairs(torch::stack(frames).unsqueeze(0), kernel.kernel.weights(), cfg);
  AuxiliaryFrames out{{}, Frame(pairs.target.squeeze(0))};
  for (int64_t j = 0; j < pairs.window.size(1); ++j) out.window.emplace_back(pairs.window[0][j]);
  return out;
}

torch::Tensor loss_self(const torch::Tensor& hr_estimate, const torch::Tensor& kernels,
                        const torch::Tensor& observed, const LossConfig& loss, const DegradationConfig& deg) {
  if (hr_estimate.dim() != 4 || observed.dim() != 4 || hr_estimate.size(0) != observed.size(0) ||
      hr_estimate.size(2) != deg.scale * observed.size(2) ||
      hr_estimate.size(3) != deg.scale * observed.size(3)) {
    throw std::invalid_argument("loss_self: HR estimate must be scale x the observed frame");
  }
  auto x = loss.detach_in_lself ? hr_estimate.detach() : hr_estimate;
  auto regenerated = decimate(blur(x, kernels, deg.padding), deg.scale, deg.decimation_offset);
  return robust_distance(regenerated, observed, loss.rho);
}

double loss_self(const Frame& hr_estimate, const KernelEstimate& kernel, const Frame& observed,
                 const LossConfig& loss, const DegradationConfig& deg) {
  return loss_self(hr_estimate.data().unsqueeze(0), kernel.kernel.weights(), observed.data().unsqueeze(0),
                   loss, deg)
      .item<double>();
}

namespace {

torch::Tensor as_batch(const torch::Tensor& kernels) {
  if (kernels.dim() == 2) return kernels.unsqueeze(0);
  if (kernels.dim() == 3) return kernels;
  throw std::invalid_argument("kernels must be [k, k] or [B, k, k]");
}

}  // namespace

torch::Tensor loss_kernel_sparsity(const torch::Tensor& kernels, double alpha) {
  auto mag = as_batch(kernels).abs();
  auto nonzero = mag > 0;
  auto powered = torch::where(nonzero, mag.clamp_min(1e-30).pow(alpha), torch::zeros_like(mag));
  return powered.sum({1, 2}).mean();
}

torch::Tensor boundary_mask(int64_t k) {
  const double c = static_cast<double>(k - 1) / 2.0;
  const double inner = static_cast<double>(k) / 4.0;
  if (c <= inner) return torch::zeros({k, k}, torch::kFloat64);
  auto coords = torch::arange(k, torch::kFloat64) - c;
  auto d = torch::maximum(coords.abs().reshape({k, 1}), coords.abs().reshape({1, k}));
  return ((d - inner) / (c - inner)).clamp(0.0, 1.0);
}

torch::Tensor loss_kernel_boundary(const torch::Tensor& kernels) {
  auto kb = as_batch(kernels);
  auto mask = boundary_mask(kb.size(-1)).to(kb.options().requires_grad(false));
  return (kb * mask).sum({1, 2}).mean();
}

torch::Tensor loss_kernel_center(const torch::Tensor& kernels) {
  auto kb = as_batch(kernels);
  const int64_t k = kb.size(-1);
  const double c = static_cast<double>(k - 1) / 2.0;
  auto coords = torch::arange(k, kb.options().requires_grad(false));
  auto mass = kb.sum({1, 2});
  auto row = (kb.sum(2) * coords).sum(1) / mass;
  auto col = (kb.sum(1) * coords).sum(1) / mass;
  return ((row - c).pow(2) + (col - c).pow(2)).mean();
}

double loss_kernel_sparsity(const Kernel& kernel, double alpha) {
  return loss_kernel_sparsity(kernel.weights(), alpha).item<double>();
}

double loss_kernel_boundary(const Kernel& kernel) {
  return loss_kernel_boundary(kernel.weights()).item<double>();
}

double loss_kernel_center(const Kernel& kernel) {
  return loss_kernel_center(kernel.weights()).item<double>();
}

torch::Tensor loss_restoration(const torch::Tensor& aux_output, const torch::Tensor& target, Rho rho) {
  return robust_distance(aux_output, target, rho);
}

double loss_restoration(const Frame& aux_output, const Frame& target, Rho rho) {
  return loss_restoration(aux_output.data(), target.data(), rho).item<double>();
}

namespace {

template <typename T>
T weighted_sum(const T& l_self, const T& l_i, const T& l_k, const T& l_boundary, const T& l_center,
               const LossConfig& cfg) {
  T total = l_self;
  if (cfg.enable_li) total = total + cfg.lambda * l_i;
  if (cfg.enable_lk) total = total + cfg.gamma * l_k;
  if (cfg.boundary_weight != 0.0) total = total + cfg.boundary_weight * l_boundary;
  if (cfg.center_weight != 0.0) total = total + cfg.center_weight * l_center;
  return total;
}

}  // namespace

torch::Tensor total_loss(const LossParts& p, const LossConfig& cfg) {
  return weighted_sum(p.l_self, p.l_I, p.l_k, p.l_boundary, p.l_center, cfg);
}

LossBundle total_loss(const LossBundle& p, const LossConfig& cfg) {
  LossBundle out = p;
  out.total = weighted_sum(p.l_self, p.l_I, p.l_k, p.l_boundary, p.l_center, cfg);
  return out;
}

}  // namespace bvsr
