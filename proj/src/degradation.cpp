#include "bvsr/degradation.hpp"

#include "bvsr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <stdexcept>

namespace bvsr {

namespace fs = std::filesystem;
namespace F = torch::nn::functional;

std::string to_string(Padding p) {
  return p == Padding::kReflect ? "reflect" : "replicate";
}

Padding padding_from_string(const std::string& s) {
  if (s == "reflect") return Padding::kReflect;
  if (s == "replicate") return Padding::kReplicate;
  throw std::invalid_argument("unknown padding mode '" + s + "' (expected reflect|replicate)");
}

void DegradationConfig::validate() const {
  if (scale < 1) throw std::invalid_argument("scale must be >= 1");
  if (decimation_offset < 0 || decimation_offset >= scale) {
    throw std::invalid_argument("decimation offset must lie in [0, scale)");
  }
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise sigma must be >= 0");
}

Kernel make_gaussian_kernel(int64_t size, double sigma_x, double sigma_y, double theta) {
  if (size % 2 == 0 || size < 3 || size > 31) {
    throw std::invalid_argument("gaussian kernel size must be odd and in [3, 31]");
  }
  if (!(sigma_x > 0.0) || !(sigma_y > 0.0) || sigma_x > 10.0 || sigma_y > 10.0) {
    throw std::invalid_argument("gaussian sigmas must lie in (0, 10]");
  }
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const int64_t r = size / 2;
  auto w = torch::empty({size, size}, torch::kFloat64);
  auto acc = w.accessor<double, 2>();
  for (int64_t i = 0; i < size; ++i) {
    for (int64_t j = 0; j < size; ++j) {
      const double dx = static_cast<double>(j - r);
      const double dy = static_cast<double>(i - r);
      const double u = c * dx + s * dy;
      const double v = -s * dx + c * dy;
      acc[i][j] = std::exp(-(u * u / (2.0 * sigma_x * sigma_x) + v * v / (2.0 * sigma_y * sigma_y)));
    }
  }
  return Kernel::normalized(w);
}

namespace {

// Raw weight table of a text kernel file, before any validation.
torch::Tensor read_kernel_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open kernel file " + path.string());
  int64_t k = 0;
  if (!(in >> k) || k <= 0 || k % 2 == 0) {
    throw ParseError("kernel file " + path.string() + ": first value must be an odd positive size");
  }
  auto w = torch::empty({k, k}, torch::kFloat64);
  auto acc = w.accessor<double, 2>();
  for (int64_t i = 0; i < k * k; ++i) {
    if (!(in >> acc[i / k][i % k])) {
      std::ostringstream os;
      os << "kernel file " << path.string() << ": expected " << k * k << " weights, read " << i;
      throw ParseError(os.str());
    }
  }
  std::string extra;
  if (in >> extra) {
    throw ParseError("kernel file " + path.string() + ": trailing data '" + extra + "'");
  }
  return w;
}

}  // namespace

Kernel read_kernel_file(const fs::path& path) {
  return Kernel::normalized(read_kernel_table(path));
}

void write_kernel_file(const fs::path& path, const Kernel& kernel) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write kernel file " + path.string());
  const auto w = kernel.weights().detach().to(torch::kCPU, torch::kFloat64).contiguous();
  const auto acc = w.accessor<double, 2>();
  out << kernel.size() << '\n';
  out.precision(17);
  for (int64_t i = 0; i < kernel.size(); ++i) {
    for (int64_t j = 0; j < kernel.size(); ++j) {
      out << (j ? " " : "") << acc[i][j];
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing kernel file " + path.string());
}

namespace {

torch::Tensor read_tensor_archive(const fs::path& path) {
  try {
    torch::Tensor t;
    torch::load(t, path.string());
    return t;
  } catch (const c10::Error&) {
  }
  // Files written by the Python frontend's torch.save.
  try {
    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return torch::pickle_load(bytes).toTensor();
  } catch (const c10::Error& e) {
    throw ParseError("kernel archive " + path.string() + ": " + e.what_without_backtrace());
  }
}

}  // namespace

KernelBank load_kernel_bank(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw NotFoundError("kernel bank directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension();
    if (ext == ".txt" || ext == ".pt") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw NotFoundError("no kernel files in " + dir.string());

  KernelBank bank;
  for (const auto& file : files) {
    torch::Tensor raw;
    if (file.extension() == ".txt") {
      raw = read_kernel_table(file);
    } else {
      raw = read_tensor_archive(file).to(torch::kFloat64);
      if (raw.dim() != 2 || raw.size(0) != raw.size(1) || raw.size(0) % 2 == 0) {
        throw ParseError("kernel archive " + file.string() + ": expected an odd square 2-D array");
      }
    }
    if (raw.min().item<double>() < 0.0) {
      std::string msg = "rejected kernel " + file.string() + ": negative weights";
      std::cerr << "[warn] " << msg << '\n';
      bank.warnings.push_back(std::move(msg));
      continue;
    }
    try {
      bank.kernels.push_back(Kernel::normalized(raw));
      bank.sources.push_back(file);
    } catch (const std::invalid_argument& e) {
      std::string msg = "rejected kernel " + file.string() + ": " + e.what();
      std::cerr << "[warn] " << msg << '\n';
      bank.warnings.push_back(std::move(msg));
    }
  }
  return bank;
}

torch::Tensor blur(const torch::Tensor& images, const torch::Tensor& kernels, Padding padding) {
  if (images.dim() != 4) throw std::invalid_argument("blur expects [B, C, H, W] images");
  const int64_t b = images.size(0);
  const int64_t c = images.size(1);
  const int64_t k = kernels.size(-1);
  if (kernels.size(-2) != k || k % 2 == 0 || (kernels.dim() != 2 && kernels.dim() != 3)) {
    throw std::invalid_argument("blur expects odd square kernels");
  }
  if (kernels.dim() == 3 && kernels.size(0) != b) {
    throw std::invalid_argument("blur: one kernel per batch element required");
  }
  if (k > images.size(2) || k > images.size(3)) {
    throw std::invalid_argument("blur: kernel larger than the frame");
  }
  const int64_t r = k / 2;
  F::PadFuncOptions pad({r, r, r, r});
  if (padding == Padding::kReflect) {
    pad.mode(torch::kReflect);
  } else {
    pad.mode(torch::kReplicate);
  }
  auto padded = F::pad(images, pad);
  const auto w = kernels.to(images.dtype());
  if (w.dim() == 2) {
    auto weight = w.reshape({1, 1, k, k}).expand({c, 1, k, k});
    return F::conv2d(padded, weight, F::Conv2dFuncOptions().groups(c));
  }
  auto weight = w.reshape({b, 1, 1, k, k}).expand({b, c, 1, k, k}).reshape({b * c, 1, k, k});
  auto out = F::conv2d(padded.reshape({1, b * c, padded.size(2), padded.size(3)}), weight,
                       F::Conv2dFuncOptions().groups(b * c));
  return out.reshape({b, c, images.size(2), images.size(3)});
}

torch::Tensor decimate(const torch::Tensor& images, int64_t scale, int64_t offset) {
  using torch::indexing::Slice;
  if (scale < 1) throw std::invalid_argument("decimate: scale must be >= 1");
  if (offset < 0 || offset >= scale) throw std::invalid_argument("decimate: offset must lie in [0, scale)");
  const int64_t h = images.size(-2);
  const int64_t w = images.size(-1);
  if (h % scale != 0 || w % scale != 0) {
    throw std::invalid_argument("decimate: spatial size must be divisible by the scale");
  }
  return images.index({"...", Slice(offset, torch::indexing::None, scale),
                       Slice(offset, torch::indexing::None, scale)});
}

Frame blur(const Frame& frame, const Kernel& kernel, Padding padding) {
  return Frame(blur(frame.data().unsqueeze(0), kernel.weights(), padding).squeeze(0));
}

Frame decimate(const Frame& frame, int64_t scale, int64_t offset) {
  return Frame(decimate(frame.data(), scale, offset));
}

Frame crop_to_multiple(const Frame& frame, int64_t scale) {
  using torch::indexing::Slice;
  const int64_t h = frame.height() / scale * scale;
  const int64_t w = frame.width() / scale * scale;
  if (h == 0 || w == 0) throw std::invalid_argument("frame smaller than the scale factor");
  const int64_t top = (frame.height() - h) / 2;
  const int64_t left = (frame.width() - w) / 2;
  return Frame(frame.data().index({Slice(), Slice(top, top + h), Slice(left, left + w)}).contiguous());
}

FrameSequence degrade_sequence(const FrameSequence& hr, const Kernel& kernel,
                               const DegradationConfig& cfg, uint64_t seed) {
  cfg.validate();
  if (hr.empty()) throw std::invalid_argument("cannot degrade an empty sequence");
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  std::vector<Frame> out;
  out.reserve(hr.size());
  for (const auto& f : hr.frames()) {
    auto lr = decimate(blur(f.data().unsqueeze(0), kernel.weights(), cfg.padding), cfg.scale,
                       cfg.decimation_offset)
                  .squeeze(0)
                  .contiguous();
    if (cfg.noise_sigma > 0.0) {
      lr = lr + cfg.noise_sigma * torch::randn(lr.sizes(), gen, lr.options());
    }
    out.emplace_back(lr);
  }
  return FrameSequence(std::move(out), hr.fps_hint());
}

}  // namespace bvsr
