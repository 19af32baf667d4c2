#pragma once

#include "bvsr/config.hpp"
#include "bvsr/dataset.hpp"
#include "bvsr/model.hpp"
#include "bvsr/self_supervision.hpp"

#include <torch/torch.h>

#include <filesystem>
#include <memory>
#include <vector>

namespace bvsr {

struct LossEvaluation {
  torch::Tensor total;    ///< differentiable objective
  torch::Tensor kernels;  ///< [B, k, k] estimated for the batch
  LossBundle bundle;
};

/// Runs both branches for a batch and evaluates the objective of the
/// configured mode. In self-supervised / finetune mode:
///   main branch       K = N_k(window), x = restore(window)
///   auxiliary branch  L = decimate(blur(window, stop_grad(K))), restore(L) vs centre
/// In supervised mode the objective is rho(restore(window) - hr_center).
LossEvaluation compute_losses(VideoSR& model, const ExperimentConfig& cfg, const Batch& batch);

/// Owns the model and an Adam optimizer with two parameter groups: group 0
/// holds nk/ne/ni at lr_main, group 1 (if the flow is trainable) holds nf at
/// lr_flow. Both follow the halving schedule.
class Trainer {
 public:
  explicit Trainer(ExperimentConfig cfg);

  VideoSR& model() { return *model_; }
  torch::optim::Adam& optimizer() { return *optimizer_; }
  const ExperimentConfig& config() const { return cfg_; }

  /// Applies the learning-rate schedule for a 1-based epoch.
  void set_epoch(int64_t epoch);
  double group_lr(size_t group) const;
  size_t group_count() const;

  /// One optimizer step. Throws NumericError (after writing a dump next to
  /// `dump_dir`) if the loss is not finite.
  LossBundle step(const Batch& batch);

  void set_dump_dir(std::filesystem::path dir) { dump_dir_ = std::move(dir); }

 private:
  ExperimentConfig cfg_;
  std::unique_ptr<VideoSR> model_;
  std::unique_ptr<torch::optim::Adam> optimizer_;
  std::filesystem::path dump_dir_ = ".";
};

struct TrainResult {
  std::vector<LossBundle> history;
  std::filesystem::path checkpoint;
  int64_t steps = 0;
  int64_t epochs = 0;
};

/// Trains on cfg.data_dir (and cfg.hr_data_dir in supervised mode), writing
/// resolved_config.json, train_log.jsonl (one JSON line per step) and
/// checkpoints (latest.ckpt, plus epoch_XXXX.ckpt every save_every epochs)
/// into cfg.run_dir().
TrainResult train(const ExperimentConfig& cfg);

/// Builds a model from the config stored in a checkpoint and loads it.
std::unique_ptr<VideoSR> load_model(const std::filesystem::path& checkpoint);

/// Configuration the checkpoint was trained with.
ExperimentConfig checkpoint_config(const std::filesystem::path& checkpoint);

struct FinetuneOptions {
  int64_t steps = 100;
  double lr_main = 1e-5;
  int64_t batch_size = 4;
  uint64_t seed = 0;
  /// Write inference results before and after adaptation.
  bool emit_inference = true;
};

/// Self-supervised adaptation of a trained model to unlabeled LR videos.
/// Writes out_dir/finetuned.ckpt and, if enabled, out_dir/before and
/// out_dir/after inference results. Returns the checkpoint path.
std::filesystem::path finetune(const std::filesystem::path& checkpoint, const std::filesystem::path& real_lr_dir,
                               const std::filesystem::path& out_dir, const FinetuneOptions& opts);

struct InferenceSummary {
  size_t frames = 0;
  std::vector<std::filesystem::path> outputs;
  std::vector<std::filesystem::path> kernels;
};

/// Super-resolves every frame with a sliding window (edge frames
/// replicated) and writes the window's kernel as kernels/<frame>.txt.
InferenceSummary infer(VideoSR& model, const std::filesystem::path& lr_dir, const std::filesystem::path& out_dir);
InferenceSummary infer(const std::filesystem::path& checkpoint, const std::filesystem::path& lr_dir,
                       const std::filesystem::path& out_dir);

/// Mean of the per-window kernel estimates over a [T, 3, H, W] sequence.
Kernel estimate_sequence_kernel(VideoSR& model, const torch::Tensor& frames);

/// Mean loss terms over every full-frame window of a sequence (no update).
LossBundle evaluate_losses(VideoSR& model, const ExperimentConfig& cfg, const torch::Tensor& frames);

}  // namespace bvsr
