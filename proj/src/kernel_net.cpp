#include "bvsr/kernel_net.hpp"

#include <algorithm>
#include <stdexcept>

namespace bvsr {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

void KernelNetConfig::validate() const {
  if (kernel_size < 1 || kernel_size % 2 == 0) throw std::invalid_argument("kernel_size must be odd");
  if (conv_channels.empty()) throw std::invalid_argument("kernel net needs at least one conv layer");
  for (auto c : conv_channels) {
    if (c < 1) throw std::invalid_argument("kernel net conv channels must be positive");
  }
  for (auto p : pool_after) {
    if (p < 0 || p >= static_cast<int64_t>(conv_channels.size())) {
      throw std::invalid_argument("kernel net pool index out of range");
    }
  }
  if (fc_hidden < 1) throw std::invalid_argument("fc_hidden must be positive");
  if (temporal_radius < 0) throw std::invalid_argument("temporal radius must be >= 0");
}

KernelNetImpl::KernelNetImpl(KernelNetConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  int64_t in = 3 * cfg_.window_length();
  for (auto out : cfg_.conv_channels) {
    convs_->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1)));
    in = out;
  }
  register_module("convs", convs_);
  fc1_ = register_module("fc1", nn::Linear(in, cfg_.fc_hidden));
  fc2_ = register_module("fc2", nn::Linear(cfg_.fc_hidden, cfg_.kernel_size * cfg_.kernel_size));

  // He init keeps the pooled features O(1); the output layer starts small so
  // the initial kernel is close to uniform.
  torch::NoGradGuard ng;
  for (auto& m : convs_->children()) {
    auto conv = m->as<nn::Conv2d>();
    nn::init::kaiming_normal_(conv->weight, 0.0, torch::kFanIn, torch::kReLU);
    nn::init::zeros_(conv->bias);
  }
  nn::init::kaiming_normal_(fc1_->weight, 0.0, torch::kFanIn, torch::kReLU);
  nn::init::zeros_(fc1_->bias);
  nn::init::normal_(fc2_->weight, 0.0, 1e-3);
  nn::init::zeros_(fc2_->bias);
}

torch::Tensor KernelNetImpl::logits(const torch::Tensor& window) {
  if (window.dim() != 5 || window.size(1) != cfg_.window_length() || window.size(2) != 3) {
    throw std::invalid_argument("kernel net expects a [B, 2N+1, 3, H, W] window");
  }
  auto x = window.flatten(1, 2);
  for (size_t i = 0; i < convs_->size(); ++i) {
    x = torch::relu(convs_[i]->as<nn::Conv2d>()->forward(x));
    if (std::find(cfg_.pool_after.begin(), cfg_.pool_after.end(), static_cast<int64_t>(i)) !=
        cfg_.pool_after.end()) {
      x = cfg_.pool == PoolKind::kMax
              ? F::max_pool2d(x, F::MaxPool2dFuncOptions(2).stride(2).ceil_mode(true))
              : F::avg_pool2d(x, F::AvgPool2dFuncOptions(2).stride(2).ceil_mode(true));
    }
  }
  x = x.mean({2, 3});
  return fc2_->forward(torch::relu(fc1_->forward(x)));
}

torch::Tensor KernelNetImpl::forward(const torch::Tensor& window) {
  const int64_t k = cfg_.kernel_size;
  return torch::softmax(logits(window), 1).reshape({-1, k, k});
}

KernelEstimate estimate_kernel(KernelNet& net, const std::vector<Frame>& window) {
  if (static_cast<int64_t>(window.size()) != net->config().window_length()) {
    throw std::invalid_argument("kernel estimation needs exactly 2N+1 frames");
  }
  std::vector<torch::Tensor> frames;
  for (const auto& f : window) {
    if (f.data().sizes() != window.front().data().sizes()) {
      throw std::invalid_argument("window frames must share one shape");
    }
    frames.push_back(f.data().to(torch::kFloat32));
  }
  auto kernels = net->forward(torch::stack(frames).unsqueeze(0));
  return KernelEstimate{Kernel(kernels[0])};
}

}  // namespace bvsr
