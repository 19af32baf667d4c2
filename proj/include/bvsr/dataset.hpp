#pragma once

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace bvsr {

struct SequenceSummary {
  std::string name;
  std::filesystem::path dir;
  size_t frames = 0;
  int64_t height = 0;
  int64_t width = 0;
};

struct DatasetSummary {
  std::vector<SequenceSummary> sequences;
  nlohmann::json to_json() const;
};

/// Sequence directories of a dataset: every subdirectory holding PNG frames,
/// or the directory itself when it holds frames directly.
std::vector<std::pair<std::string, std::filesystem::path>> discover_sequences(const std::filesystem::path& dir);

/// Decodes every frame and checks shapes and lengths. Throws DataError that
/// lists every unreadable file and every sequence shorter than 2N+1.
DatasetSummary validate_dataset(const std::filesystem::path& dir, int64_t temporal_radius);

struct Video {
  std::string name;
  torch::Tensor frames;  ///< [T, 3, H, W]
  torch::Tensor hr;      ///< [T, 3, sH, sW] in supervised mode, else undefined
};

/// Loads all sequences; sequences shorter than `min_length` are skipped with
/// a warning. `hr_dir` may be empty.
std::vector<Video> load_videos(const std::filesystem::path& dir, const std::filesystem::path& hr_dir,
                               int64_t min_length, int64_t scale);

/// [2N+1, 3, H, W] window of frames around `center` with edge replication.
torch::Tensor gather_window(const torch::Tensor& frames, int64_t center, int64_t radius);

struct Batch {
  torch::Tensor window;     ///< [B, 2N+1, 3, p, p]
  torch::Tensor hr_center;  ///< [B, 3, s*p, s*p] or undefined
};

/// Enumerates every (sequence, centre frame) window once per epoch in a
/// shuffled order and cuts a random patch shared by the whole window.
class WindowSampler {
 public:
  WindowSampler(const std::vector<Video>& videos, int64_t radius, int64_t patch, int64_t batch_size,
                int64_t scale, uint64_t seed);

  /// Index lists of one epoch's batches.
  std::vector<std::vector<std::pair<size_t, int64_t>>> epoch_plan();
  Batch make_batch(const std::vector<std::pair<size_t, int64_t>>& items);

  size_t windows_per_epoch() const;
  std::string rng_state() const;
  void set_rng_state(const std::string& state);

 private:
  const std::vector<Video>& videos_;
  int64_t radius_;
  int64_t patch_;
  int64_t batch_size_;
  int64_t scale_;
  std::mt19937_64 rng_;
};

}  // namespace bvsr
