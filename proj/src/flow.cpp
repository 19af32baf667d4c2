#include "bvsr/flow.hpp"

#include "bvsr/errors.hpp"

#include <algorithm>
#include <filesystem>
#include <stdexcept>

namespace bvsr {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

std::string to_string(FlowBackend b) {
  return b == FlowBackend::kBuiltin ? "builtin" : "external";
}

FlowBackend flow_backend_from_string(const std::string& s) {
  if (s == "builtin" || s == "builtin_coarse2fine") return FlowBackend::kBuiltin;
  if (s == "external" || s == "pretrained_external") return FlowBackend::kExternal;
  throw std::invalid_argument("unknown flow backend '" + s + "' (expected builtin|external)");
}

void FlowProviderConfig::validate() const {
  if (backend == FlowBackend::kExternal && checkpoint_path.empty()) {
    throw std::invalid_argument("the external flow backend requires a checkpoint path");
  }
  if (lr_scale && !(*lr_scale > 0.0)) throw std::invalid_argument("flow lr_scale must be > 0");
  if (levels < 1) throw std::invalid_argument("flow pyramid needs at least one level");
  if (channels < 1) throw std::invalid_argument("flow channels must be positive");
}

torch::Tensor warp(const torch::Tensor& features, const torch::Tensor& flow) {
  if (features.dim() != 4 || flow.dim() != 4 || flow.size(1) != 2) {
    throw std::invalid_argument("warp expects features [B, C, H, W] and flow [B, 2, H, W]");
  }
  if (features.size(0) != flow.size(0) || features.size(2) != flow.size(2) ||
      features.size(3) != flow.size(3)) {
    throw std::invalid_argument("warp: feature and flow sizes differ");
  }
  const int64_t h = features.size(2);
  const int64_t w = features.size(3);
  auto opts = flow.options();
  auto xs = torch::arange(w, opts).reshape({1, 1, w}).expand({1, h, w});
  auto ys = torch::arange(h, opts).reshape({1, h, 1}).expand({1, h, w});
  // align_corners = true maps -1 / +1 onto the first / last pixel centres.
  const double sx = w > 1 ? 2.0 / static_cast<double>(w - 1) : 0.0;
  const double sy = h > 1 ? 2.0 / static_cast<double>(h - 1) : 0.0;
  auto gx = (xs + flow.select(1, 0)) * sx - 1.0;
  auto gy = (ys + flow.select(1, 1)) * sy - 1.0;
  if (w == 1) gx = gx * 0.0;
  if (h == 1) gy = gy * 0.0;
  auto grid = torch::stack({gx, gy}, 3).to(features.dtype());
  return F::grid_sample(features, grid,
                        F::GridSampleFuncOptions()
                            .mode(torch::kBilinear)
                            .padding_mode(torch::kBorder)
                            .align_corners(true));
}

FeatureMap warp(const FeatureMap& features, const FlowField& flow) {
  return FeatureMap{warp(features.data.unsqueeze(0), flow.data.unsqueeze(0)).squeeze(0)};
}

Frame warp(const Frame& frame, const FlowField& flow) {
  return Frame(warp(frame.data().unsqueeze(0), flow.data.unsqueeze(0)).squeeze(0));
}

std::vector<torch::Tensor> FlowEstimator::parameters() {
  std::vector<torch::Tensor> out;
  for (auto& [name, p] : named_parameters()) out.push_back(p);
  return out;
}

namespace {

constexpr int64_t kSearchRadius = 2;
constexpr int64_t kCostChannels = (2 * kSearchRadius + 1) * (2 * kSearchRadius + 1);

nn::Sequential make_stage(int64_t channels) {
  nn::Sequential stage(
      nn::Conv2d(nn::Conv2dOptions(8 + kCostChannels, channels, 3).padding(1)), nn::ReLU(),
      nn::Conv2d(nn::Conv2dOptions(channels, channels, 3).padding(1)), nn::ReLU(),
      nn::Conv2d(nn::Conv2dOptions(channels, channels / 2 + 1, 3).padding(1)), nn::ReLU(),
      nn::Conv2d(nn::Conv2dOptions(channels / 2 + 1, 2, 3).padding(1)));
  // Small initial residuals keep the untrained estimator close to zero flow.
  torch::NoGradGuard no_grad;
  auto last = stage[stage->size() - 1]->as<nn::Conv2d>();
  last->weight.mul_(0.1);
  last->bias.zero_();
  return stage;
}

torch::Tensor standardize(const torch::Tensor& x) {
  auto c = x - x.mean({1, 2, 3}, true);
  return c / (c.pow(2).mean({1, 2, 3}, true).sqrt() + 1e-3);
}

// Correlation of `a` with `b` displaced by every offset in the search window.
torch::Tensor cost_volume(const torch::Tensor& a, const torch::Tensor& b) {
  using torch::indexing::Slice;
  const int64_t r = kSearchRadius;
  const int64_t h = a.size(2);
  const int64_t w = a.size(3);
  auto na = standardize(a);
  auto nb = F::pad(standardize(b), F::PadFuncOptions({r, r, r, r}).mode(torch::kReplicate));
  std::vector<torch::Tensor> costs;
  for (int64_t dy = 0; dy <= 2 * r; ++dy) {
    for (int64_t dx = 0; dx <= 2 * r; ++dx) {
      auto shifted = nb.index({Slice(), Slice(), Slice(dy, dy + h), Slice(dx, dx + w)});
      costs.push_back((na * shifted).mean(1, true));
    }
  }
  return torch::cat(costs, 1);
}

torch::Tensor downsample(const torch::Tensor& x) {
  return F::avg_pool2d(x, F::AvgPool2dFuncOptions(2).stride(2).ceil_mode(true));
}

}  // namespace

PyramidFlowNetImpl::PyramidFlowNetImpl(int64_t levels, int64_t channels) : levels_(levels) {
  for (int64_t l = 0; l < levels; ++l) stages_->push_back(make_stage(channels));
  register_module("stages", stages_);
}

torch::Tensor PyramidFlowNetImpl::forward(const torch::Tensor& source, const torch::Tensor& target) {
  if (source.sizes() != target.sizes() || source.dim() != 4) {
    throw std::invalid_argument("flow estimation expects two [B, 3, H, W] frames of one shape");
  }
  std::vector<torch::Tensor> src{source};
  std::vector<torch::Tensor> tgt{target};
  for (int64_t l = 1; l < levels_; ++l) {
    if (src.back().size(2) < 2 || src.back().size(3) < 2) break;
    src.push_back(downsample(src.back()));
    tgt.push_back(downsample(tgt.back()));
  }
  torch::Tensor flow;
  for (int64_t l = static_cast<int64_t>(src.size()) - 1; l >= 0; --l) {
    const auto& s = src[static_cast<size_t>(l)];
    const auto& t = tgt[static_cast<size_t>(l)];
    if (!flow.defined()) {
      flow = torch::zeros({s.size(0), 2, s.size(2), s.size(3)}, s.options());
    } else {
      const double ry = static_cast<double>(s.size(2)) / static_cast<double>(flow.size(2));
      const double rx = static_cast<double>(s.size(3)) / static_cast<double>(flow.size(3));
      flow = F::interpolate(flow, F::InterpolateFuncOptions()
                                      .size(std::vector<int64_t>{s.size(2), s.size(3)})
                                      .mode(torch::kBilinear)
                                      .align_corners(false));
      flow = flow * torch::tensor({rx, ry}, s.options()).reshape({1, 2, 1, 1});
    }
    auto stage = stages_[static_cast<size_t>(l)]->as<nn::Sequential>();
    auto warped = warp(s, flow);
    flow = flow + stage->forward(torch::cat({t, warped, flow, cost_volume(t, warped)}, 1));
  }
  return flow;
}

BuiltinFlow::BuiltinFlow(int64_t levels, int64_t channels) : net_(levels, channels) {}

torch::Tensor BuiltinFlow::forward(const torch::Tensor& source, const torch::Tensor& target) {
  return net_->forward(source, target);
}

std::vector<std::pair<std::string, torch::Tensor>> BuiltinFlow::named_parameters() {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : net_->named_parameters()) out.emplace_back(item.key(), item.value());
  return out;
}

ScriptedFlow::ScriptedFlow(const std::string& path) {
  if (!std::filesystem::exists(path)) throw NotFoundError("flow checkpoint not found: " + path);
  try {
    module_ = torch::jit::load(path);
  } catch (const c10::Error& e) {
    throw ParseError("cannot load TorchScript flow module " + path + ": " + e.what_without_backtrace());
  }
}

torch::Tensor ScriptedFlow::forward(const torch::Tensor& source, const torch::Tensor& target) {
  if (source.sizes() != target.sizes()) throw std::invalid_argument("flow frames differ in shape");
  auto flow = module_.forward({source, target}).toTensor();
  if (flow.dim() != 4 || flow.size(1) != 2 || flow.size(2) != source.size(2) ||
      flow.size(3) != source.size(3)) {
    throw std::runtime_error("external flow module returned a tensor of the wrong shape");
  }
  return flow;
}

std::vector<std::pair<std::string, torch::Tensor>> ScriptedFlow::named_parameters() {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : module_.named_parameters(/*recurse=*/true)) {
    out.emplace_back(item.name, item.value);
  }
  return out;
}

std::shared_ptr<FlowEstimator> make_flow_estimator(const FlowProviderConfig& cfg) {
  cfg.validate();
  std::shared_ptr<FlowEstimator> flow;
  if (cfg.backend == FlowBackend::kExternal) {
    flow = std::make_shared<ScriptedFlow>(cfg.checkpoint_path);
  } else {
    flow = std::make_shared<BuiltinFlow>(cfg.levels, cfg.channels);
    if (cfg.pretrained()) load_flow_parameters(*flow, cfg.checkpoint_path);
  }
  if (!cfg.trainable) {
    for (auto& p : flow->parameters()) p.set_requires_grad(false);
  }
  return flow;
}

void save_flow_parameters(FlowEstimator& flow, const std::string& path) {
  torch::serialize::OutputArchive archive;
  for (auto& [name, p] : flow.named_parameters()) archive.write(name, p.detach());
  archive.save_to(path);
}

void load_flow_parameters(FlowEstimator& flow, const std::string& path) {
  if (!std::filesystem::exists(path)) throw NotFoundError("flow checkpoint not found: " + path);
  torch::serialize::InputArchive archive;
  archive.load_from(path);
  torch::NoGradGuard no_grad;
  for (auto& [name, p] : flow.named_parameters()) {
    torch::Tensor value;
    if (!archive.try_read(name, value)) throw ParseError("flow checkpoint " + path + " lacks " + name);
    if (value.sizes() != p.sizes()) throw ParseError("flow checkpoint " + path + ": shape mismatch for " + name);
    p.copy_(value);
  }
}

FlowField estimate_flow(FlowEstimator& flow, const Frame& source, const Frame& target) {
  if (source.data().sizes() != target.data().sizes()) {
    throw std::invalid_argument("estimate_flow: frames differ in shape");
  }
  auto f = flow.forward(source.data().to(torch::kFloat32).unsqueeze(0),
                        target.data().to(torch::kFloat32).unsqueeze(0));
  return FlowField{f.squeeze(0)};
}

namespace {

torch::Tensor random_texture(int64_t size, torch::Generator& gen) {
  auto tex = torch::zeros({1, 3, size, size});
  double amp = 1.0;
  for (int64_t cell = 8; cell >= 1; cell /= 2) {
    const int64_t n = (size + cell - 1) / cell;
    auto noise = torch::randn({1, 3, n, n}, gen, torch::TensorOptions());
    tex = tex + amp * F::interpolate(noise, F::InterpolateFuncOptions()
                                                .size(std::vector<int64_t>{size, size})
                                                .mode(torch::kBilinear)
                                                .align_corners(false));
    amp *= 0.6;
  }
  return torch::sigmoid(tex);
}

}  // namespace

double pretrain_flow_on_translations(FlowEstimator& flow, int64_t steps, double lr, int64_t size,
                                     double max_shift, uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  torch::optim::Adam opt(flow.parameters(), torch::optim::AdamOptions(lr));
  const int64_t margin = static_cast<int64_t>(std::ceil(max_shift)) + 2;
  const int64_t big = size + 2 * margin;
  const int64_t batch = 4;
  using torch::indexing::Slice;
  auto crop = [&](const torch::Tensor& t) {
    return t.index({Slice(), Slice(), Slice(margin, margin + size), Slice(margin, margin + size)});
  };
  flow.set_training(true);
  double epe = 0.0;
  for (int64_t step = 0; step < steps; ++step) {
    std::vector<torch::Tensor> srcs, tgts, shifts;
    for (int64_t b = 0; b < batch; ++b) {
      auto tex = random_texture(big, gen);
      auto d = (torch::rand({2}, gen, torch::TensorOptions()) * 2.0 - 1.0) * max_shift;
      if (b == 0) d.zero_();
      auto field = d.reshape({1, 2, 1, 1}).expand({1, 2, big, big});
      srcs.push_back(crop(tex));
      tgts.push_back(crop(warp(tex, field)));
      shifts.push_back(d.reshape({1, 2, 1, 1}).expand({1, 2, size, size}));
    }
    auto src = torch::cat(srcs);
    auto tgt = torch::cat(tgts);
    auto truth = torch::cat(shifts);
    auto pred = flow.forward(src, tgt);
    auto err = (pred - truth).index({Slice(), Slice(), Slice(margin, size - margin), Slice(margin, size - margin)});
    auto loss = err.abs().mean();
    opt.zero_grad();
    loss.backward();
    opt.step();
    epe = err.pow(2).sum(1).sqrt().mean().item<double>();
  }
  flow.set_training(false);
  return epe;
}

}  // namespace bvsr
