#include "bvsr/evaluation.hpp"

#include "bvsr/dataset.hpp"
#include "bvsr/errors.hpp"
#include "bvsr/image_io.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace bvsr {

namespace fs = std::filesystem;

namespace {

// [C, H, W] doubles with the border removed.
torch::Tensor prepared(const Frame& f, int64_t crop) {
  using torch::indexing::Slice;
  auto t = f.data().detach().to(torch::kCPU, torch::kFloat64);
  if (crop > 0) {
    if (2 * crop >= f.height() || 2 * crop >= f.width()) {
      throw std::invalid_argument("crop border removes the whole frame");
    }
    t = t.index({Slice(), Slice(crop, -crop), Slice(crop, -crop)});
  }
  return t.contiguous();
}

void check_same_shape(const Frame& a, const Frame& b) {
  if (a.data().sizes() != b.data().sizes()) throw std::invalid_argument("metric inputs differ in shape");
}

std::vector<double> luminance(const torch::Tensor& chw) {
  const auto acc = chw.accessor<double, 3>();
  const int64_t h = chw.size(1);
  const int64_t w = chw.size(2);
  std::vector<double> y(static_cast<size_t>(h * w));
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      y[static_cast<size_t>(i * w + j)] = 0.299 * acc[0][i][j] + 0.587 * acc[1][i][j] + 0.114 * acc[2][i][j];
    }
  }
  return y;
}

// Separable valid-region filtering with a normalized 1-D Gaussian.
std::vector<double> filter_valid(const std::vector<double>& img, int64_t h, int64_t w,
                                 const std::vector<double>& taps) {
  const int64_t n = static_cast<int64_t>(taps.size());
  const int64_t oh = h - n + 1;
  const int64_t ow = w - n + 1;
  std::vector<double> rows(static_cast<size_t>(h * ow));
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < ow; ++j) {
      double s = 0.0;
      for (int64_t t = 0; t < n; ++t) s += taps[static_cast<size_t>(t)] * img[static_cast<size_t>(i * w + j + t)];
      rows[static_cast<size_t>(i * ow + j)] = s;
    }
  }
  std::vector<double> out(static_cast<size_t>(oh * ow));
  for (int64_t i = 0; i < oh; ++i) {
    for (int64_t j = 0; j < ow; ++j) {
      double s = 0.0;
      for (int64_t t = 0; t < n; ++t) s += taps[static_cast<size_t>(t)] * rows[static_cast<size_t>((i + t) * ow + j)];
      out[static_cast<size_t>(i * ow + j)] = s;
    }
  }
  return out;
}

double mean_or_inf(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double psnr(const Frame& a, const Frame& b, int64_t crop_border) {
  check_same_shape(a, b);
  const auto ta = prepared(a, crop_border);
  const auto tb = prepared(b, crop_border);
  const double* pa = ta.data_ptr<double>();
  const double* pb = tb.data_ptr<double>();
  const int64_t n = ta.numel();
  double sse = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = pa[i] - pb[i];
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(n);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Frame& a, const Frame& b, int64_t crop_border) {
  check_same_shape(a, b);
  const auto ta = prepared(a, crop_border);
  const auto tb = prepared(b, crop_border);
  const int64_t h = ta.size(1);
  const int64_t w = ta.size(2);
  constexpr int64_t n = SsimParams::kWindow;
  if (h < n || w < n) throw std::invalid_argument("SSIM needs frames of at least 11x11 pixels");

  std::vector<double> taps(n);
  for (int64_t t = 0; t < n; ++t) {
    const double d = static_cast<double>(t - n / 2);
    taps[static_cast<size_t>(t)] = std::exp(-d * d / (2.0 * SsimParams::kSigma * SsimParams::kSigma));
  }
  const double norm = std::accumulate(taps.begin(), taps.end(), 0.0);
  for (auto& t : taps) t /= norm;

  const auto ya = luminance(ta);
  const auto yb = luminance(tb);
  std::vector<double> aa(ya.size()), bb(ya.size()), ab(ya.size());
  for (size_t i = 0; i < ya.size(); ++i) {
    aa[i] = ya[i] * ya[i];
    bb[i] = yb[i] * yb[i];
    ab[i] = ya[i] * yb[i];
  }
  const auto mu_a = filter_valid(ya, h, w, taps);
  const auto mu_b = filter_valid(yb, h, w, taps);
  const auto e_aa = filter_valid(aa, h, w, taps);
  const auto e_bb = filter_valid(bb, h, w, taps);
  const auto e_ab = filter_valid(ab, h, w, taps);
  double total = 0.0;
  for (size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i];
    const double mb = mu_b[i];
    const double va = e_aa[i] - ma * ma;
    const double vb = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    total += ((2.0 * ma * mb + SsimParams::kC1) * (2.0 * cov + SsimParams::kC2)) /
             ((ma * ma + mb * mb + SsimParams::kC1) * (va + vb + SsimParams::kC2));
  }
  return total / static_cast<double>(mu_a.size());
}

double kernel_ncc(const Kernel& a, const Kernel& b) {
  const int64_t k = std::max(a.size(), b.size());
  auto pad = [k](const Kernel& x) {
    const int64_t p = (k - x.size()) / 2;
    auto w = x.weights().detach().to(torch::kCPU, torch::kFloat64);
    return p > 0 ? torch::constant_pad_nd(w, {p, p, p, p}, 0.0) : w;
  };
  auto wa = pad(a);
  auto wb = pad(b);
  wa = wa - wa.mean();
  wb = wb - wb.mean();
  const double denom = std::sqrt(wa.pow(2).sum().item<double>() * wb.pow(2).sum().item<double>());
  if (denom == 0.0) return 0.0;
  return (wa * wb).sum().item<double>() / denom;
}

nlohmann::json metric_value(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

nlohmann::json SequenceReport::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["psnr"] = metric_value(psnr);
  j["ssim"] = metric_value(ssim);
  j["frames"] = nlohmann::json::array();
  for (const auto& f : frames) {
    j["frames"].push_back({{"name", f.name}, {"psnr", metric_value(f.psnr)}, {"ssim", metric_value(f.ssim)}});
  }
  if (regenerated_psnr) j["regenerated_psnr"] = metric_value(*regenerated_psnr);
  if (regenerated_ssim) j["regenerated_ssim"] = metric_value(*regenerated_ssim);
  if (kernel_ncc) j["kernel_ncc"] = metric_value(*kernel_ncc);
  return j;
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["psnr"] = metric_value(psnr);
  j["ssim"] = metric_value(ssim);
  j["sequences"] = nlohmann::json::array();
  for (const auto& s : sequences) j["sequences"].push_back(s.to_json());
  return j;
}

SequenceReport evaluate_sequence(const std::string& name, const FrameSequence& pred, const FrameSequence& gt,
                                 int64_t crop_border) {
  if (pred.size() != gt.size()) throw std::invalid_argument("sequence " + name + ": frame counts differ");
  SequenceReport r;
  r.name = name;
  std::vector<double> ps, ss;
  for (size_t i = 0; i < pred.size(); ++i) {
    FrameScore f{frame_name(i), psnr(pred[i], gt[i], crop_border), ssim(pred[i], gt[i], crop_border)};
    ps.push_back(f.psnr);
    ss.push_back(f.ssim);
    r.frames.push_back(std::move(f));
  }
  r.psnr = mean_or_inf(ps);
  r.ssim = mean_or_inf(ss);
  return r;
}

MetricReport evaluate_directories(const fs::path& pred_dir, const fs::path& gt_dir, int64_t crop_border) {
  MetricReport report;
  auto gt_seqs = discover_sequences(gt_dir);
  const bool single = gt_seqs.size() == 1 && gt_seqs.front().second == gt_dir;
  std::vector<double> ps, ss;
  for (const auto& [name, gt_path] : gt_seqs) {
    const fs::path pred_path = single ? pred_dir : pred_dir / name;
    SequenceReport r;
    r.name = name;
    std::vector<double> fp, fs_;
    for (const auto& gt_file : list_frames(gt_path)) {
      const fs::path pred_file = pred_path / gt_file.filename();
      if (!fs::exists(pred_file)) throw NotFoundError("missing prediction " + pred_file.string());
      const Frame p = read_png(pred_file);
      const Frame g = read_png(gt_file);
      if (p.data().sizes() != g.data().sizes()) {
        throw DataError("size mismatch between " + pred_file.string() + " and " + gt_file.string());
      }
      FrameScore f{gt_file.filename().string(), psnr(p, g, crop_border), ssim(p, g, crop_border)};
      fp.push_back(f.psnr);
      fs_.push_back(f.ssim);
      r.frames.push_back(std::move(f));
    }
    r.psnr = mean_or_inf(fp);
    r.ssim = mean_or_inf(fs_);
    ps.push_back(r.psnr);
    ss.push_back(r.ssim);
    report.sequences.push_back(std::move(r));
  }
  report.psnr = mean_or_inf(ps);
  report.ssim = mean_or_inf(ss);
  return report;
}

SequenceReport evaluate_regenerated_lr(const Kernel& estimated, const FrameSequence& hr_gt,
                                       const FrameSequence& lr_obs, const DegradationConfig& cfg) {
  if (hr_gt.size() != lr_obs.size() || hr_gt.empty()) {
    throw std::invalid_argument("regenerated-LR evaluation needs equally long, non-empty sequences");
  }
  if (hr_gt[0].height() != cfg.scale * lr_obs[0].height() || hr_gt[0].width() != cfg.scale * lr_obs[0].width()) {
    throw std::invalid_argument("HR frames must be exactly scale x the observed LR frames");
  }
  DegradationConfig noiseless = cfg;
  noiseless.noise_sigma = 0.0;
  const auto regenerated = degrade_sequence(hr_gt, estimated, noiseless, 0);
  auto r = evaluate_sequence("regenerated", regenerated, lr_obs);
  r.regenerated_psnr = r.psnr;
  r.regenerated_ssim = r.ssim;
  return r;
}

}  // namespace bvsr
