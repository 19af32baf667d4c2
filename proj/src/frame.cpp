#include "bvsr/frame.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace bvsr {

Frame::Frame(torch::Tensor data) {
  if (data.dim() != 3) {
    throw std::invalid_argument("Frame expects a [C, H, W] tensor");
  }
  if (data.size(0) == 1) {
    data = data.expand({3, data.size(1), data.size(2)}).contiguous();
  }
  if (data.size(0) != 3 || data.size(1) < 1 || data.size(2) < 1) {
    std::ostringstream os;
    os << "Frame expects 3 channels and a non-empty image, got " << data.sizes();
    throw std::invalid_argument(os.str());
  }
  if (!data.is_floating_point()) {
    throw std::invalid_argument("Frame data must be floating point");
  }
  data_ = std::move(data);
}

FrameSequence::FrameSequence(std::vector<Frame> frames, std::optional<double> fps_hint)
    : frames_(std::move(frames)), fps_hint_(fps_hint) {
  for (const auto& f : frames_) {
    if (f.data().sizes() != frames_.front().data().sizes()) {
      throw std::invalid_argument("all frames of a sequence must share one shape");
    }
  }
}

FrameSequence FrameSequence::from_stacked(const torch::Tensor& stacked) {
  if (stacked.dim() != 4) {
    throw std::invalid_argument("expected a [T, C, H, W] tensor");
  }
  std::vector<Frame> frames;
  frames.reserve(static_cast<size_t>(stacked.size(0)));
  for (int64_t t = 0; t < stacked.size(0); ++t) {
    frames.emplace_back(stacked[t]);
  }
  return FrameSequence(std::move(frames));
}

torch::Tensor FrameSequence::stacked() const {
  if (frames_.empty()) {
    throw std::invalid_argument("empty sequence");
  }
  std::vector<torch::Tensor> parts;
  parts.reserve(frames_.size());
  for (const auto& f : frames_) parts.push_back(f.data());
  return torch::stack(parts);
}

namespace {

void check_shape(const torch::Tensor& w) {
  if (w.dim() != 2 || w.size(0) != w.size(1)) {
    throw std::invalid_argument("kernel must be a square 2-D array");
  }
  if (w.size(0) % 2 == 0) {
    throw std::invalid_argument("kernel size must be odd");
  }
  if (!w.is_floating_point()) {
    throw std::invalid_argument("kernel weights must be floating point");
  }
}

}  // namespace

Kernel::Kernel(torch::Tensor weights) {
  check_shape(weights);
  torch::NoGradGuard no_grad;
  const double min_w = weights.min().item<double>();
  const double total = weights.sum().item<double>();
  if (!(min_w >= 0.0)) {
    throw std::invalid_argument("kernel weights must be non-negative");
  }
  if (!(std::abs(total - 1.0) <= kSumTolerance)) {
    std::ostringstream os;
    os << "kernel weights must sum to 1 (got " << total << ")";
    throw std::invalid_argument(os.str());
  }
  weights_ = std::move(weights);
}

Kernel Kernel::normalized(torch::Tensor raw) {
  check_shape(raw);
  torch::Tensor w = raw.to(torch::kFloat64);
  if (!(w.min().item<double>() >= 0.0)) {
    throw std::invalid_argument("kernel weights must be non-negative");
  }
  const double total = w.sum().item<double>();
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw std::invalid_argument("kernel has no positive mass");
  }
  return Kernel(w / total);
}

Kernel Kernel::delta(int64_t size) {
  auto w = torch::zeros({size, size}, torch::kFloat64);
  if (size > 0) w[size / 2][size / 2] = 1.0;
  return Kernel(w);
}

Kernel Kernel::uniform(int64_t size) {
  return Kernel(torch::full({size, size}, 1.0 / static_cast<double>(size * size), torch::kFloat64));
}

std::vector<int64_t> window_indices(int64_t center, int64_t radius, int64_t length) {
  std::vector<int64_t> out;
  out.reserve(static_cast<size_t>(2 * radius + 1));
  for (int64_t j = center - radius; j <= center + radius; ++j) {
    out.push_back(std::clamp<int64_t>(j, 0, length - 1));
  }
  return out;
}

}  // namespace bvsr
