#include "bvsr/model.hpp"

#include <stdexcept>

namespace bvsr {

VideoSR::VideoSR(const ModelConfig& cfg)
    : kernel_net(cfg.kernel),
      extractor(cfg.restoration),
      restorer(cfg.restoration),
      flow(make_flow_estimator(cfg.flow)),
      cfg_(cfg) {
  if (cfg.kernel.temporal_radius != cfg.restoration.temporal_radius) {
    throw std::invalid_argument("kernel net and restorer must share the temporal radius");
  }
}

torch::Tensor VideoSR::estimate_kernels(const torch::Tensor& window) {
  return kernel_net->forward(window);
}

torch::Tensor VideoSR::restore_window(const torch::Tensor& window) {
  const int64_t t = cfg_.restoration.window_length();
  if (window.dim() != 5 || window.size(1) != t || window.size(2) != 3) {
    throw std::invalid_argument("restore_window expects a [B, 2N+1, 3, h, w] window");
  }
  const int64_t b = window.size(0);
  const int64_t h = window.size(3);
  const int64_t w = window.size(4);
  const int64_t c = center_index();

  auto features = extractor->forward(window.flatten(0, 1));
  features = features.reshape({b, t, features.size(1), h, w});
  if (t == 1) return restorer->forward(features, window.select(1, 0));

  std::vector<int64_t> neighbours;
  for (int64_t j = 0; j < t; ++j) {
    if (j != c) neighbours.push_back(j);
  }
  auto idx = torch::tensor(neighbours, torch::kLong);
  auto sources = window.index_select(1, idx).flatten(0, 1);
  auto centre = window.select(1, c);
  auto targets = centre.unsqueeze(1).expand({b, t - 1, 3, h, w}).flatten(0, 1);
  auto flows = flow->forward(sources, targets);
  auto warped = warp(features.index_select(1, idx).flatten(0, 1), flows)
                    .reshape({b, t - 1, features.size(2), h, w});

  std::vector<torch::Tensor> ordered;
  for (int64_t j = 0, n = 0; j < t; ++j) {
    ordered.push_back(j == c ? features.select(1, c) : warped.select(1, n++));
  }
  return restorer->forward(torch::stack(ordered, 1), centre);
}

std::vector<std::pair<std::string, torch::Tensor>> VideoSR::named_parameters() {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& p : kernel_net->named_parameters()) out.emplace_back("nk/" + p.key(), p.value());
  for (const auto& p : extractor->named_parameters()) out.emplace_back("ne/" + p.key(), p.value());
  for (const auto& p : restorer->named_parameters()) out.emplace_back("ni/" + p.key(), p.value());
  for (auto& [name, p] : flow->named_parameters()) out.emplace_back("nf/" + name, p);
  return out;
}

std::vector<torch::Tensor> VideoSR::parameters(const std::string& group) {
  std::vector<torch::Tensor> out;
  const std::string prefix = group + "/";
  for (auto& [name, p] : named_parameters()) {
    if (name.rfind(prefix, 0) == 0) out.push_back(p);
  }
  return out;
}

void VideoSR::train(bool on) {
  kernel_net->train(on);
  extractor->train(on);
  restorer->train(on);
  flow->set_training(on);
}

}  // namespace bvsr
