#include "bvsr/training.hpp"

#include "bvsr/checkpoint.hpp"
#include "bvsr/errors.hpp"
#include "bvsr/image_io.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;

namespace bvsr {

namespace {

double item(const torch::Tensor& t) { return t.defined() ? t.item<double>() : 0.0; }

torch::Tensor torch_rng_state() { return at::detail::getDefaultCPUGenerator().get_state(); }

std::string checkpoint_name(int64_t epoch) {
  std::ostringstream os;
  os << "epoch_" << std::setw(4) << std::setfill('0') << epoch << ".ckpt";
  return os.str();
}

void dump_batch(const fs::path& dir, const Batch& batch, const torch::Tensor& kernels) {
  try {
    fs::create_directories(dir);
    c10::Dict<std::string, torch::Tensor> d;
    d.insert("window", batch.window.detach().contiguous());
    if (kernels.defined()) d.insert("kernels", kernels.detach().contiguous());
    auto bytes = torch::pickle_save(c10::IValue(d));
    std::ofstream out(dir / "nan_dump.pt", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  } catch (const std::exception& e) {
    std::cerr << "[warn] could not write numeric dump: " << e.what() << "\n";
  }
}

bool gradients_finite(VideoSR& model) {
  for (auto& [name, p] : model.named_parameters()) {
    if (p.grad().defined() && !torch::isfinite(p.grad()).all().item<bool>()) return false;
  }
  return true;
}

ExperimentConfig model_only_config(ExperimentConfig cfg) {
  // weights come from the checkpoint, not from the warm-start file
  if (cfg.flow.backend == FlowBackend::kBuiltin) {
    if (!cfg.flow.lr_scale) cfg.flow.lr_scale = cfg.flow.resolved_lr_scale();
    cfg.flow.checkpoint_path.clear();
  }
  return cfg;
}

}  // namespace

LossEvaluation compute_losses(VideoSR& model, const ExperimentConfig& cfg, const Batch& batch) {
  const LossConfig& lc = cfg.loss;
  LossEvaluation ev;

  if (cfg.train.mode == TrainMode::kSupervised) {
    if (!batch.hr_center.defined()) throw ConfigError("supervised mode needs hr_data");
    auto x = model.restore_window(batch.window);
    ev.total = robust_distance(x, batch.hr_center, lc.rho);
    ev.bundle.l_supervised = item(ev.total);
    ev.bundle.total = ev.bundle.l_supervised;
    return ev;
  }

  const auto& window = batch.window;
  auto y = window.select(1, model.center_index());
  auto kernels = model.estimate_kernels(window);
  ev.kernels = kernels;

  torch::Tensor x;
  if (lc.detach_in_lself) {
    torch::NoGradGuard ng;
    x = model.restore_window(window);
  } else {
    x = model.restore_window(window);
  }

  LossParts parts;
  parts.l_self = loss_self(x, kernels, y, lc, cfg.degradation);

  auto aux = generate_auxiliary_pairs(window, kernels, cfg.degradation, lc.aux_kernel_grad);
  if (lc.enable_li) {
    parts.l_I = loss_restoration(model.restore_window(aux.window), aux.target, lc.rho);
  } else {
    torch::NoGradGuard ng;
    parts.l_I = loss_restoration(model.restore_window(aux.window), aux.target, lc.rho);
  }

  parts.l_k = loss_kernel_sparsity(kernels, lc.alpha);
  parts.l_boundary = loss_kernel_boundary(kernels);
  parts.l_center = loss_kernel_center(kernels);
  ev.total = total_loss(parts, lc);

  ev.bundle.l_self = item(parts.l_self);
  ev.bundle.l_I = item(parts.l_I);
  ev.bundle.l_k = item(parts.l_k);
  ev.bundle.l_boundary = item(parts.l_boundary);
  ev.bundle.l_center = item(parts.l_center);
  ev.bundle.total = item(ev.total);
  return ev;
}

Trainer::Trainer(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.resolve();
  cfg_.validate();
  torch::manual_seed(cfg_.train.seed);
  model_ = std::make_unique<VideoSR>(cfg_.model_config());
  model_->train(true);

  std::vector<torch::optim::OptimizerParamGroup> groups;
  auto main_opts = std::make_unique<torch::optim::AdamOptions>(cfg_.train.lr_main);
  main_opts->betas({cfg_.train.adam_beta1, cfg_.train.adam_beta2}).eps(cfg_.train.adam_eps);
  std::vector<torch::Tensor> main_params;
  for (const char* g : {"nk", "ne", "ni"}) {
    for (auto& p : model_->parameters(g)) main_params.push_back(p);
  }
  groups.emplace_back(main_params, std::move(main_opts));

  std::vector<torch::Tensor> flow_params;
  for (auto& p : model_->parameters("nf")) {
    if (p.requires_grad()) flow_params.push_back(p);
  }
  if (!flow_params.empty()) {
    auto flow_opts = std::make_unique<torch::optim::AdamOptions>(cfg_.lr_flow());
    flow_opts->betas({cfg_.train.adam_beta1, cfg_.train.adam_beta2}).eps(cfg_.train.adam_eps);
    groups.emplace_back(flow_params, std::move(flow_opts));
  }
  optimizer_ = std::make_unique<torch::optim::Adam>(groups, torch::optim::AdamOptions(cfg_.train.lr_main));
}

void Trainer::set_epoch(int64_t epoch) {
  const double f = cfg_.train.halving_factor(epoch);
  auto& groups = optimizer_->param_groups();
  static_cast<torch::optim::AdamOptions&>(groups[0].options()).lr(cfg_.train.lr_main * f);
  if (groups.size() > 1) static_cast<torch::optim::AdamOptions&>(groups[1].options()).lr(cfg_.lr_flow() * f);
}

double Trainer::group_lr(size_t group) const {
  const auto& groups = optimizer_->param_groups();
  if (group >= groups.size()) throw std::out_of_range("no such parameter group");
  return static_cast<const torch::optim::AdamOptions&>(groups[group].options()).lr();
}

size_t Trainer::group_count() const { return optimizer_->param_groups().size(); }

LossBundle Trainer::step(const Batch& batch) {
  model_->train(true);
  optimizer_->zero_grad();
  auto ev = compute_losses(*model_, cfg_, batch);
  if (!std::isfinite(ev.bundle.total)) {
    dump_batch(dump_dir_, batch, ev.kernels);
    throw NumericError("non-finite loss (" + ev.bundle.to_json().dump() + "); batch written to " +
                       (dump_dir_ / "nan_dump.pt").string());
  }
  ev.total.backward();
  if (cfg_.train.grad_clip > 0.0) {
    std::vector<torch::Tensor> params;
    for (auto& g : optimizer_->param_groups())
      for (auto& p : g.params()) params.push_back(p);
    torch::nn::utils::clip_grad_norm_(params, cfg_.train.grad_clip);
  }
  if (cfg_.train.nan_guard && !gradients_finite(*model_)) {
    std::cerr << "[warn] skipping step with non-finite gradients\n";
    return ev.bundle;
  }
  optimizer_->step();
  return ev.bundle;
}

namespace {

TrainResult run_loop(Trainer& trainer, const std::vector<Video>& videos, const fs::path& out_dir,
                     const std::string& final_name) {
  const auto& cfg = trainer.config();
  fs::create_directories(out_dir);
  write_resolved_config(cfg, out_dir);
  trainer.set_dump_dir(out_dir);

  WindowSampler sampler(videos, cfg.temporal_radius, cfg.train.patch_size, cfg.train.batch_size, cfg.scale,
                        cfg.train.seed);
  std::ofstream log(out_dir / "train_log.jsonl", std::ios::app);
  if (!log) throw DataError("cannot write " + (out_dir / "train_log.jsonl").string());

  TrainResult res;
  const fs::path latest = out_dir / final_name;
  auto save = [&](int64_t epoch) {
    CheckpointMeta meta;
    meta.epoch = epoch;
    meta.step = res.steps;
    meta.config = cfg.to_json();
    meta.sampler_rng = sampler.rng_state();
    meta.torch_rng = torch_rng_state();
    save_checkpoint(latest, trainer.model(), &trainer.optimizer(), meta);
    res.checkpoint = latest;
  };

  const int64_t max_steps = cfg.train.max_steps;
  bool done = max_steps < 0 || (max_steps == 0 && cfg.train.epochs == 0);
  int64_t epoch = 0;
  while (!done && (max_steps > 0 || epoch < cfg.train.epochs)) {
    ++epoch;
    trainer.set_epoch(epoch);
    for (const auto& items : sampler.epoch_plan()) {
      if (max_steps > 0 && res.steps >= max_steps) break;
      auto bundle = trainer.step(sampler.make_batch(items));
      ++res.steps;
      nlohmann::json line = bundle.to_json();
      line["step"] = res.steps;
      line["epoch"] = epoch;
      line["lr_main"] = trainer.group_lr(0);
      if (trainer.group_count() > 1) line["lr_flow"] = trainer.group_lr(1);
      log << line.dump() << "\n";
      log.flush();
      res.history.push_back(bundle);
    }
    res.epochs = epoch;
    save(epoch);
    if (cfg.train.save_every > 0 && epoch % cfg.train.save_every == 0) {
      fs::copy_file(latest, out_dir / checkpoint_name(epoch), fs::copy_options::overwrite_existing);
    }
    if (max_steps > 0 && res.steps >= max_steps) done = true;
    if (max_steps == 0 && epoch >= cfg.train.epochs) done = true;
  }
  if (res.checkpoint.empty()) save(0);
  return res;
}

}  // namespace

TrainResult train(const ExperimentConfig& cfg_in) {
  ExperimentConfig cfg = cfg_in;
  cfg.resolve();
  cfg.validate();
  if (cfg.data_dir.empty()) throw ConfigError("data directory is not set");
  const bool supervised = cfg.train.mode == TrainMode::kSupervised;
  auto videos = load_videos(cfg.data_dir, supervised ? fs::path(cfg.hr_data_dir) : fs::path(),
                            2 * cfg.temporal_radius + 1, cfg.scale);
  if (videos.empty()) throw DataError("no usable sequences in " + cfg.data_dir);
  Trainer trainer(cfg);
  return run_loop(trainer, videos, cfg.run_dir(), "latest.ckpt");
}

ExperimentConfig checkpoint_config(const fs::path& checkpoint) {
  auto meta = read_checkpoint_meta(checkpoint);
  auto cfg = ExperimentConfig::from_json(meta.config);
  cfg.resolve();
  return cfg;
}

std::unique_ptr<VideoSR> load_model(const fs::path& checkpoint) {
  auto cfg = model_only_config(checkpoint_config(checkpoint));
  auto model = std::make_unique<VideoSR>(cfg.model_config());
  load_checkpoint(checkpoint, *model, nullptr);
  model->train(false);
  return model;
}

fs::path finetune(const fs::path& checkpoint, const fs::path& real_lr_dir, const fs::path& out_dir,
                  const FinetuneOptions& opts) {
  if (opts.steps < 0) throw ConfigError("finetune steps must be >= 0");
  if (!(opts.lr_main > 0.0)) throw ConfigError("finetune lr must be > 0");
  auto cfg = model_only_config(checkpoint_config(checkpoint));
  cfg.train.mode = TrainMode::kFinetune;
  if (cfg.train.lr_flow) cfg.train.lr_flow = *cfg.train.lr_flow * opts.lr_main / cfg.train.lr_main;
  cfg.train.lr_main = opts.lr_main;
  cfg.train.max_steps = opts.steps;
  cfg.train.epochs = std::max<int64_t>(cfg.train.epochs, 1);
  cfg.train.lr_halving_period = std::max(cfg.train.lr_halving_period, opts.steps + 1);
  cfg.train.batch_size = opts.batch_size;
  cfg.train.seed = opts.seed;
  cfg.train.save_every = 0;
  cfg.data_dir = real_lr_dir.string();
  cfg.hr_data_dir.clear();

  auto videos = load_videos(real_lr_dir, {}, 2 * cfg.temporal_radius + 1, cfg.scale);
  if (videos.empty()) throw DataError("no usable sequences in " + real_lr_dir.string());
  for (const auto& v : videos) {
    const int64_t h = v.frames.size(2), w = v.frames.size(3);
    if (std::min(h, w) < cfg.train.patch_size) {
      cfg.train.patch_size = std::min(h, w) / cfg.scale * cfg.scale;
    }
  }
  cfg.validate();

  Trainer trainer(cfg);
  load_checkpoint(checkpoint, trainer.model(), nullptr);
  fs::create_directories(out_dir);
  if (opts.emit_inference) infer(trainer.model(), real_lr_dir, out_dir / "before");

  fs::path ckpt;
  if (opts.steps == 0) {
    write_resolved_config(cfg, out_dir);
    CheckpointMeta meta;
    meta.config = cfg.to_json();
    meta.torch_rng = torch_rng_state();
    ckpt = out_dir / "finetuned.ckpt";
    save_checkpoint(ckpt, trainer.model(), &trainer.optimizer(), meta);
  } else {
    ckpt = run_loop(trainer, videos, out_dir, "finetuned.ckpt").checkpoint;
  }
  if (opts.emit_inference) infer(trainer.model(), real_lr_dir, out_dir / "after");
  return ckpt;
}

InferenceSummary infer(VideoSR& model, const fs::path& lr_dir, const fs::path& out_dir) {
  auto sequences = discover_sequences(lr_dir);
  if (sequences.empty()) throw NotFoundError("no PNG frames under " + lr_dir.string());
  const bool flat = sequences.size() == 1 && fs::equivalent(sequences[0].second, lr_dir);
  const int64_t radius = model.center_index();

  model.train(false);
  torch::NoGradGuard ng;
  InferenceSummary summary;
  for (const auto& [name, dir] : sequences) {
    auto files = list_frames(dir);
    auto seq = read_sequence(dir);
    auto frames = seq.stacked();
    const fs::path dst = flat ? out_dir : out_dir / name;
    fs::create_directories(dst / "kernels");
    for (int64_t t = 0; t < frames.size(0); ++t) {
      auto window = gather_window(frames, t, radius).unsqueeze(0);
      auto x = model.restore_window(window)[0];
      auto k = model.estimate_kernels(window)[0].to(torch::kDouble);
      const auto& src = files[static_cast<size_t>(t)];
      auto out = dst / src.filename();
      write_png(out, Frame(x));
      auto kpath = dst / "kernels" / (src.stem().string() + ".txt");
      write_kernel_file(kpath, Kernel::normalized(k));
      summary.outputs.push_back(out);
      summary.kernels.push_back(kpath);
      ++summary.frames;
    }
  }
  return summary;
}

InferenceSummary infer(const fs::path& checkpoint, const fs::path& lr_dir, const fs::path& out_dir) {
  auto model = load_model(checkpoint);
  return infer(*model, lr_dir, out_dir);
}

Kernel estimate_sequence_kernel(VideoSR& model, const torch::Tensor& frames) {
  torch::NoGradGuard ng;
  const int64_t radius = model.center_index();
  torch::Tensor sum;
  for (int64_t t = 0; t < frames.size(0); ++t) {
    auto k = model.estimate_kernels(gather_window(frames, t, radius).unsqueeze(0))[0].to(torch::kDouble);
    sum = sum.defined() ? sum + k : k;
  }
  return Kernel::normalized(sum);
}

LossBundle evaluate_losses(VideoSR& model, const ExperimentConfig& cfg_in, const torch::Tensor& frames) {
  torch::NoGradGuard ng;
  ExperimentConfig cfg = cfg_in;
  cfg.train.mode = TrainMode::kSelfSupervised;
  const int64_t radius = model.center_index();
  LossBundle mean;
  const int64_t n = frames.size(0);
  for (int64_t t = 0; t < n; ++t) {
    Batch b;
    b.window = gather_window(frames, t, radius).unsqueeze(0);
    auto ev = compute_losses(model, cfg, b);
    mean.l_self += ev.bundle.l_self / n;
    mean.l_I += ev.bundle.l_I / n;
    mean.l_k += ev.bundle.l_k / n;
    mean.l_boundary += ev.bundle.l_boundary / n;
    mean.l_center += ev.bundle.l_center / n;
    mean.total += ev.bundle.total / n;
  }
  return mean;
}

}  // namespace bvsr
