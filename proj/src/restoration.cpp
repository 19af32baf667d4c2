#include "bvsr/restoration.hpp"

#include <stdexcept>

namespace bvsr {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

void RestorationConfig::validate() const {
  if (n_resblocks < 0 || extractor_resblocks < 0) throw std::invalid_argument("resblock counts must be >= 0");
  if (feat_channels < 1) throw std::invalid_argument("feat_channels must be positive");
  // Scale 1 has no pixel-shuffle stage; it exists for degenerate test setups.
  if (scale != 1 && scale != 2 && scale != 4) throw std::invalid_argument("restoration scale must be 1, 2 or 4");
  if (temporal_radius < 0) throw std::invalid_argument("temporal radius must be >= 0");
}

namespace {

nn::Conv2d conv3x3(int64_t in, int64_t out) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1));
}

}  // namespace

ResBlockImpl::ResBlockImpl(int64_t channels) {
  conv1_ = register_module("conv1", conv3x3(channels, channels));
  conv2_ = register_module("conv2", conv3x3(channels, channels));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x) {
  return x + conv2_->forward(torch::relu(conv1_->forward(x)));
}

FeatureExtractorImpl::FeatureExtractorImpl(const RestorationConfig& cfg) {
  head_ = register_module("head", conv3x3(3, cfg.feat_channels));
  for (int64_t i = 0; i < cfg.extractor_resblocks; ++i) body_->push_back(ResBlock(cfg.feat_channels));
  register_module("body", body_);
}

torch::Tensor FeatureExtractorImpl::forward(const torch::Tensor& frames) {
  auto x = torch::relu(head_->forward(frames));
  return body_->is_empty() ? x : body_->forward(x);
}

RestorerImpl::RestorerImpl(const RestorationConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int64_t f = cfg_.feat_channels;
  fusion_ = register_module("fusion", conv3x3(cfg_.window_length() * f, f));
  for (int64_t i = 0; i < cfg_.n_resblocks; ++i) trunk_->push_back(ResBlock(f));
  register_module("trunk", trunk_);
  trunk_tail_ = register_module("trunk_tail", conv3x3(f, f));
  for (int64_t s = cfg_.scale; s > 1; s /= 2) {
    upsampler_->push_back(conv3x3(f, 4 * f));
    upsampler_->push_back(nn::PixelShuffle(2));
  }
  register_module("upsampler", upsampler_);
  tail_ = register_module("tail", conv3x3(f, 3));
}

torch::Tensor RestorerImpl::forward(const torch::Tensor& features, const torch::Tensor& center_frame) {
  if (features.dim() != 5 || features.size(1) != cfg_.window_length() ||
      features.size(2) != cfg_.feat_channels) {
    throw std::invalid_argument("restorer expects [B, 2N+1, F, H, W] features");
  }
  auto fused = fusion_->forward(features.flatten(1, 2));
  auto x = trunk_->is_empty() ? fused : trunk_->forward(fused);
  x = fused + trunk_tail_->forward(x);
  if (!upsampler_->is_empty()) x = upsampler_->forward(x);
  auto out = tail_->forward(x);
  if (cfg_.global_residual) {
    if (!center_frame.defined()) throw std::invalid_argument("global residual needs the centre frame");
    out = out + F::interpolate(center_frame, F::InterpolateFuncOptions()
                                                 .size(std::vector<int64_t>{center_frame.size(2) * cfg_.scale,
                                                                            center_frame.size(3) * cfg_.scale})
                                                 .mode(torch::kBilinear)
                                                 .align_corners(false));
  }
  return out;
}

FeatureMap extract_features(FeatureExtractor& net, const Frame& frame) {
  return FeatureMap{net->forward(frame.data().to(torch::kFloat32).unsqueeze(0)).squeeze(0)};
}

Frame restore(Restorer& net, const FeatureMap& center, const std::vector<FeatureMap>& neighbours,
              const Frame* center_frame) {
  const auto& cfg = net->config();
  if (static_cast<int64_t>(neighbours.size()) != 2 * cfg.temporal_radius) {
    throw std::invalid_argument("restore needs exactly 2N warped neighbour feature maps");
  }
  std::vector<torch::Tensor> ordered;
  const size_t half = static_cast<size_t>(cfg.temporal_radius);
  for (size_t j = 0; j < half; ++j) ordered.push_back(neighbours[j].data);
  ordered.push_back(center.data);
  for (size_t j = half; j < neighbours.size(); ++j) ordered.push_back(neighbours[j].data);
  for (const auto& t : ordered) {
    if (t.sizes() != center.data.sizes()) {
      throw std::invalid_argument("restore: feature maps differ in shape");
    }
  }
  torch::Tensor base;
  if (center_frame != nullptr) base = center_frame->data().to(torch::kFloat32).unsqueeze(0);
  return Frame(net->forward(torch::stack(ordered).unsqueeze(0), base).squeeze(0));
}

}  // namespace bvsr
