#pragma once

#include "bvsr/degradation.hpp"
#include "bvsr/kernel_net.hpp"
#include "bvsr/model.hpp"
#include "bvsr/self_supervision.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace bvsr {

enum class TrainMode { kSelfSupervised, kSupervised, kFinetune };

std::string to_string(TrainMode m);
TrainMode train_mode_from_string(const std::string& s);

struct TrainConfig {
  TrainMode mode = TrainMode::kSelfSupervised;
  double lr_main = 1e-4;
  /// Unset: lr_main times the flow provider's lr scale.
  std::optional<double> lr_flow;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int64_t epochs = 200;
  int64_t lr_halving_period = 100;
  int64_t batch_size = 8;
  /// Square LR crop, shared by every frame of a window.
  int64_t patch_size = 64;
  int64_t temporal_radius = 2;
  uint64_t seed = 0;
  /// Stop after this many optimizer steps (0: run all epochs).
  int64_t max_steps = 0;
  /// Global gradient norm clip (0: off).
  double grad_clip = 0.0;
  /// Skip optimizer steps whose gradients are not finite.
  bool nan_guard = false;
  /// Keep an extra numbered checkpoint every this many epochs (0: latest only).
  int64_t save_every = 0;

  /// Learning rate of the main parameter group in a 1-based epoch.
  double lr_main_at(int64_t epoch) const;
  double halving_factor(int64_t epoch) const;
};

/// Every option of a run. Scale, temporal radius and decimation offset are
/// stored once here and copied into the module configs by resolve().
struct ExperimentConfig {
  std::string name = "experiment";
  std::string output_root = "runs";
  std::string data_dir;
  std::string hr_data_dir;
  int64_t scale = 4;
  int64_t temporal_radius = 2;

  DegradationConfig degradation;
  KernelNetConfig kernel_net;
  FlowProviderConfig flow;
  RestorationConfig restoration;
  LossConfig loss;
  TrainConfig train;

  /// Propagates the shared fields into the module configs.
  void resolve();
  /// Per-module and cross-field checks. Throws ConfigError.
  void validate() const;

  double lr_flow() const;
  ModelConfig model_config() const;
  std::filesystem::path run_dir() const;

  nlohmann::json to_json() const;
  /// Rejects unknown keys, listing every one of them.
  static ExperimentConfig from_json(const nlohmann::json& j);
};

/// Loads a JSON file (empty path or empty file: all defaults), applies the
/// overrides as a JSON merge patch, resolves and validates.
ExperimentConfig parse_config(const std::filesystem::path& file, const nlohmann::json& overrides);

/// Writes resolved_config.json into `dir`.
void write_resolved_config(const ExperimentConfig& cfg, const std::filesystem::path& dir);

}  // namespace bvsr
