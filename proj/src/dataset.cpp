#include "bvsr/dataset.hpp"

#include "bvsr/errors.hpp"
#include "bvsr/frame.hpp"
#include "bvsr/image_io.hpp"

#include <algorithm>
#include <iostream>
#include <sstream>

namespace bvsr {

namespace fs = std::filesystem;
using torch::indexing::Slice;

nlohmann::json DatasetSummary::to_json() const {
  nlohmann::json seqs = nlohmann::json::array();
  for (const auto& s : sequences) {
    seqs.push_back({{"name", s.name}, {"dir", s.dir.string()}, {"frames", s.frames},
                    {"height", s.height}, {"width", s.width}});
  }
  return {{"sequences", seqs}};
}

std::vector<std::pair<std::string, fs::path>> discover_sequences(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw NotFoundError("dataset directory not found: " + dir.string());
  std::vector<std::pair<std::string, fs::path>> out;
  if (!list_frames(dir).empty()) {
    out.emplace_back(dir.filename().string(), dir);
    return out;
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() && !list_frames(entry.path()).empty()) {
      out.emplace_back(entry.path().filename().string(), entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw NotFoundError("no sequences with PNG frames in " + dir.string());
  return out;
}

DatasetSummary validate_dataset(const fs::path& dir, int64_t temporal_radius) {
  DatasetSummary summary;
  std::vector<std::string> problems;
  const size_t min_len = static_cast<size_t>(2 * temporal_radius + 1);
  for (const auto& [name, path] : discover_sequences(dir)) {
    SequenceSummary s{name, path, 0, 0, 0};
    for (const auto& file : list_frames(path)) {
      try {
        const Frame f = read_png(file);
        if (s.frames == 0) {
          s.height = f.height();
          s.width = f.width();
        } else if (f.height() != s.height || f.width() != s.width) {
          std::ostringstream os;
          os << file.string() << ": size " << f.height() << "x" << f.width() << " differs from "
             << s.height << "x" << s.width;
          problems.push_back(os.str());
        }
        ++s.frames;
      } catch (const DataError& e) {
        problems.push_back(e.what());
      }
    }
    if (s.frames < min_len) {
      std::ostringstream os;
      os << "sequence " << name << " has " << s.frames << " readable frames, needs at least " << min_len;
      problems.push_back(os.str());
    }
    summary.sequences.push_back(std::move(s));
  }
  if (!problems.empty()) {
    std::string msg = "dataset validation failed for " + dir.string() + ":";
    for (const auto& p : problems) msg += "\n  " + p;
    throw DataError(msg);
  }
  return summary;
}

std::vector<Video> load_videos(const fs::path& dir, const fs::path& hr_dir, int64_t min_length,
                               int64_t scale) {
  std::vector<Video> videos;
  for (const auto& [name, path] : discover_sequences(dir)) {
    auto seq = read_sequence(path);
    if (static_cast<int64_t>(seq.size()) < min_length) {
      std::cerr << "[warn] skipping sequence " << name << ": " << seq.size() << " frames < " << min_length
                << '\n';
      continue;
    }
    Video v{name, seq.stacked(), {}};
    if (!hr_dir.empty()) {
      const fs::path hr_path = fs::is_directory(hr_dir / name) ? hr_dir / name : hr_dir;
      auto hr = read_sequence(hr_path).stacked();
      if (hr.size(0) != v.frames.size(0) || hr.size(2) != scale * v.frames.size(2) ||
          hr.size(3) != scale * v.frames.size(3)) {
        throw DataError("HR sequence " + hr_path.string() + " does not match its LR sequence at scale " +
                        std::to_string(scale));
      }
      v.hr = hr;
    }
    videos.push_back(std::move(v));
  }
  if (videos.empty()) throw DataError("no usable sequences in " + dir.string());
  return videos;
}

torch::Tensor gather_window(const torch::Tensor& frames, int64_t center, int64_t radius) {
  auto idx = window_indices(center, radius, frames.size(0));
  return frames.index_select(0, torch::tensor(idx, torch::kLong));
}

WindowSampler::WindowSampler(const std::vector<Video>& videos, int64_t radius, int64_t patch,
                             int64_t batch_size, int64_t scale, uint64_t seed)
    : videos_(videos), radius_(radius), patch_(patch), batch_size_(batch_size), scale_(scale), rng_(seed) {
  for (const auto& v : videos_) {
    if (v.frames.size(2) < patch_ || v.frames.size(3) < patch_) {
      std::ostringstream os;
      os << "sequence " << v.name << " (" << v.frames.size(2) << "x" << v.frames.size(3)
         << ") is smaller than the training patch " << patch_;
      throw DataError(os.str());
    }
  }
}

size_t WindowSampler::windows_per_epoch() const {
  size_t n = 0;
  for (const auto& v : videos_) n += static_cast<size_t>(v.frames.size(0));
  return n;
}

std::vector<std::vector<std::pair<size_t, int64_t>>> WindowSampler::epoch_plan() {
  std::vector<std::pair<size_t, int64_t>> all;
  for (size_t i = 0; i < videos_.size(); ++i) {
    for (int64_t t = 0; t < videos_[i].frames.size(0); ++t) all.emplace_back(i, t);
  }
  std::shuffle(all.begin(), all.end(), rng_);
  std::vector<std::vector<std::pair<size_t, int64_t>>> plan;
  for (size_t start = 0; start < all.size(); start += static_cast<size_t>(batch_size_)) {
    const size_t end = std::min(all.size(), start + static_cast<size_t>(batch_size_));
    plan.emplace_back(all.begin() + static_cast<std::ptrdiff_t>(start), all.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return plan;
}

Batch WindowSampler::make_batch(const std::vector<std::pair<size_t, int64_t>>& items) {
  std::vector<torch::Tensor> windows;
  std::vector<torch::Tensor> hr;
  for (const auto& [vi, center] : items) {
    const auto& v = videos_.at(vi);
    const int64_t top = std::uniform_int_distribution<int64_t>(0, v.frames.size(2) - patch_)(rng_);
    const int64_t left = std::uniform_int_distribution<int64_t>(0, v.frames.size(3) - patch_)(rng_);
    auto w = gather_window(v.frames, center, radius_);
    windows.push_back(w.index({Slice(), Slice(), Slice(top, top + patch_), Slice(left, left + patch_)}));
    if (v.hr.defined()) {
      hr.push_back(v.hr[center].index({Slice(), Slice(top * scale_, (top + patch_) * scale_),
                                       Slice(left * scale_, (left + patch_) * scale_)}));
    }
  }
  Batch b{torch::stack(windows).contiguous(), {}};
  if (!hr.empty()) b.hr_center = torch::stack(hr).contiguous();
  return b;
}

std::string WindowSampler::rng_state() const {
  std::ostringstream os;
  os << rng_;
  return os.str();
}

void WindowSampler::set_rng_state(const std::string& state) {
  std::istringstream is(state);
  is >> rng_;
}

}  // namespace bvsr
