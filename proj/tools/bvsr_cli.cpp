#include "bvsr/checkpoint.hpp"
#include "bvsr/config.hpp"
#include "bvsr/dataset.hpp"
#include "bvsr/degradation.hpp"
#include "bvsr/errors.hpp"
#include "bvsr/evaluation.hpp"
#include "bvsr/image_io.hpp"
#include "bvsr/training.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <random>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct SynthArgs {
  std::string hr_dir;
  std::string out_dir;
  int64_t scale = 4;
  std::string kernel = "gaussian";
  double sigma_min = 0.4;
  double sigma_max = 2.0;
  std::string bank_path;
  double noise_sigma = 0.0;
  uint64_t seed = 0;
  int64_t kernel_size = 13;
};

int run_synth(const SynthArgs& a) {
  if (a.kernel != "gaussian" && a.kernel != "bank") throw bvsr::ConfigError("--kernel must be gaussian or bank");
  if (!(a.sigma_min > 0.0) || a.sigma_max < a.sigma_min)
    throw bvsr::ConfigError("--sigma-min must be > 0 and <= --sigma-max");
  bvsr::DegradationConfig deg;
  deg.scale = a.scale;
  deg.noise_sigma = a.noise_sigma;
  deg.validate();

  std::optional<bvsr::KernelBank> bank;
  if (a.kernel == "bank") {
    if (a.bank_path.empty()) throw bvsr::ConfigError("--kernel bank needs --bank-path");
    bank = bvsr::load_kernel_bank(a.bank_path);
  }

  auto sequences = bvsr::discover_sequences(a.hr_dir);
  if (sequences.empty()) throw bvsr::NotFoundError("no PNG frames under " + a.hr_dir);
  std::mt19937_64 rng(a.seed);
  const fs::path out(a.out_dir);
  json summary = json::array();
  for (const auto& [name, dir] : sequences) {
    bvsr::Kernel k;
    json entry{{"sequence", name}};
    if (bank) {
      std::uniform_int_distribution<size_t> pick(0, bank->kernels.size() - 1);
      const size_t i = pick(rng);
      k = bank->kernels[i];
      entry["kernel_source"] = bank->sources[i].string();
    } else {
      std::uniform_real_distribution<double> sig(a.sigma_min, a.sigma_max);
      const double s = sig(rng);
      k = bvsr::make_gaussian_kernel(a.kernel_size, s, s, 0.0);
      entry["sigma"] = s;
    }
    std::vector<bvsr::Frame> hr;
    const auto source = bvsr::read_sequence(dir);
    for (const auto& f : source.frames()) hr.push_back(bvsr::crop_to_multiple(f, a.scale));
    bvsr::FrameSequence hr_seq(hr);
    const uint64_t noise_seed = rng();
    auto lr = bvsr::degrade_sequence(hr_seq, k, deg, noise_seed);
    bvsr::write_sequence(out / "lr" / name, lr);
    bvsr::write_sequence(out / "hr" / name, hr_seq);
    fs::create_directories(out / "kernels");
    bvsr::write_kernel_file(out / "kernels" / (name + ".txt"), k);
    entry["frames"] = hr.size();
    summary.push_back(entry);
    std::cerr << "synth: " << name << " (" << hr.size() << " frames)\n";
  }
  std::ofstream(out / "synth.json") << summary.dump(2) << "\n";
  return 0;
}

struct TrainArgs {
  std::string config;
  std::optional<std::string> data, hr_data, out, mode, rho, global_residual;
  std::optional<int64_t> scale, epochs, batch, patch, n, steps;
  std::optional<uint64_t> seed;
  std::optional<double> grad_clip, lr;
  bool no_li = false, no_lk = false, no_detach = false, aux_kernel_grad = false, nan_guard = false;
};

json train_overrides(const TrainArgs& a) {
  json o = json::object();
  if (a.data) o["data"] = *a.data;
  if (a.hr_data) o["hr_data"] = *a.hr_data;
  if (a.out) {
    fs::path p = fs::path(*a.out).lexically_normal();
    if (p.filename().empty()) p = p.parent_path();
    o["output_root"] = p.parent_path().empty() ? std::string(".") : p.parent_path().string();
    o["name"] = p.filename().string();
  }
  if (a.scale) o["scale"] = *a.scale;
  if (a.n) o["n"] = *a.n;
  if (a.seed) o["seed"] = *a.seed;
  if (a.mode) o["train"]["mode"] = *a.mode;
  if (a.epochs) o["train"]["epochs"] = *a.epochs;
  if (a.batch) o["train"]["batch"] = *a.batch;
  if (a.patch) o["train"]["patch"] = *a.patch;
  if (a.steps) o["train"]["max_steps"] = *a.steps;
  if (a.grad_clip) o["train"]["grad_clip"] = *a.grad_clip;
  if (a.lr) o["train"]["lr_main"] = *a.lr;
  if (a.nan_guard) o["train"]["nan_guard"] = true;
  if (a.rho) o["loss"]["rho"] = *a.rho;
  if (a.no_li) o["loss"]["enable_li"] = false;
  if (a.no_lk) o["loss"]["enable_lk"] = false;
  if (a.no_detach) o["loss"]["detach"] = false;
  if (a.aux_kernel_grad) o["loss"]["aux_kernel_grad"] = true;
  if (a.global_residual) {
    if (*a.global_residual != "on" && *a.global_residual != "off")
      throw bvsr::ConfigError("--global-residual must be on or off");
    o["restoration"]["global_residual"] = *a.global_residual == "on";
  }
  return o;
}

int run_train(const TrainArgs& a) {
  auto cfg = bvsr::parse_config(a.config, train_overrides(a));
  auto res = bvsr::train(cfg);
  json out{{"checkpoint", res.checkpoint.string()}, {"steps", res.steps}, {"epochs", res.epochs}};
  if (!res.history.empty()) out["final"] = res.history.back().to_json();
  std::cout << out.dump() << "\n";
  return 0;
}

int run_eval(const std::string& pred, const std::string& gt, const std::string& report, int64_t crop) {
  auto r = bvsr::evaluate_directories(pred, gt, crop);
  const std::string text = r.to_json().dump(2);
  if (!report.empty()) {
    if (fs::path(report).has_parent_path()) fs::create_directories(fs::path(report).parent_path());
    std::ofstream f(report);
    if (!f) throw bvsr::DataError("cannot write " + report);
    f << text << "\n";
  }
  std::cout << text << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised blind video super-resolution"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Synthesize LR sequences from HR frames");
  synth->add_option("--hr-dir", sa.hr_dir, "HR sequence directory")->required();
  synth->add_option("--out-dir", sa.out_dir, "Output directory (lr/, hr/, kernels/)")->required();
  synth->add_option("--scale", sa.scale, "Downscaling factor")->capture_default_str();
  synth->add_option("--kernel", sa.kernel, "gaussian or bank")->capture_default_str();
  synth->add_option("--sigma-min", sa.sigma_min)->capture_default_str();
  synth->add_option("--sigma-max", sa.sigma_max)->capture_default_str();
  synth->add_option("--kernel-size", sa.kernel_size)->capture_default_str();
  synth->add_option("--bank-path", sa.bank_path, "Directory of kernel files");
  synth->add_option("--noise-sigma", sa.noise_sigma)->capture_default_str();
  synth->add_option("--seed", sa.seed)->capture_default_str();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--config", ta.config, "JSON config file");
  tr->add_option("--data", ta.data, "LR dataset directory");
  tr->add_option("--hr-data", ta.hr_data, "HR dataset directory (supervised mode)");
  tr->add_option("--out", ta.out, "Run directory");
  tr->add_option("--mode", ta.mode, "self or supervised");
  tr->add_option("--scale", ta.scale);
  tr->add_option("--epochs", ta.epochs);
  tr->add_option("--batch", ta.batch);
  tr->add_option("--patch", ta.patch);
  tr->add_option("--n", ta.n, "Temporal radius");
  tr->add_option("--seed", ta.seed);
  tr->add_option("--steps", ta.steps, "Stop after this many steps");
  tr->add_option("--lr", ta.lr, "Main learning rate");
  tr->add_option("--rho", ta.rho, "l1 or l2");
  tr->add_option("--global-residual", ta.global_residual, "on or off");
  tr->add_option("--grad-clip", ta.grad_clip, "Global gradient norm clip");
  tr->add_flag("--nan-guard", ta.nan_guard, "Skip steps with non-finite gradients");
  tr->add_flag("--no-li", ta.no_li, "Drop the auxiliary restoration loss");
  tr->add_flag("--no-lk", ta.no_lk, "Drop the kernel sparsity loss");
  tr->add_flag("--no-detach", ta.no_detach, "Let the re-degradation loss reach the restorer");
  tr->add_flag("--aux-kernel-grad", ta.aux_kernel_grad, "Let the auxiliary loss reach the kernel estimator");

  std::string ckpt, lr_dir, out_dir;
  auto* inf = app.add_subcommand("infer", "Super-resolve LR sequences");
  inf->add_option("--checkpoint", ckpt)->required();
  inf->add_option("--lr-dir", lr_dir)->required();
  inf->add_option("--out-dir", out_dir)->required();

  bvsr::FinetuneOptions fo;
  auto* ft = app.add_subcommand("finetune", "Adapt a model to unlabeled LR videos");
  ft->add_option("--checkpoint", ckpt)->required();
  ft->add_option("--real-lr-dir", lr_dir)->required();
  ft->add_option("--out", out_dir)->required();
  ft->add_option("--steps", fo.steps)->capture_default_str();
  ft->add_option("--lr", fo.lr_main)->capture_default_str();
  ft->add_option("--batch", fo.batch_size)->capture_default_str();
  ft->add_option("--seed", fo.seed)->capture_default_str();
  bool no_inference = false;
  ft->add_flag("--no-inference", no_inference, "Skip before/after inference outputs");

  std::string pred, gt, report;
  std::vector<std::string> crop_arg;
  int64_t eval_scale = 4;
  auto* ev = app.add_subcommand("eval", "PSNR / SSIM against ground truth");
  ev->add_option("--pred-dir", pred)->required();
  ev->add_option("--gt-dir", gt)->required();
  ev->add_option("--report", report, "JSON report path");
  ev->add_option("--crop-border", crop_arg, "Border pixels excluded from the metrics (no value: the scale)")
      ->expected(0, 1)
      ->allow_extra_args(false);
  ev->add_option("--scale", eval_scale, "Scale factor used by a bare --crop-border")->capture_default_str();

  std::string vdir;
  int64_t vn = 2;
  auto* va = app.add_subcommand("validate", "Check a dataset directory");
  va->add_option("--data", vdir)->required();
  va->add_option("--n", vn, "Temporal radius")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*synth) return run_synth(sa);
    if (*tr) return run_train(ta);
    if (*inf) {
      auto s = bvsr::infer(ckpt, lr_dir, out_dir);
      std::cout << json{{"frames", s.frames}, {"out_dir", out_dir}}.dump() << "\n";
      return 0;
    }
    if (*ft) {
      fo.emit_inference = !no_inference;
      auto p = bvsr::finetune(ckpt, lr_dir, out_dir, fo);
      std::cout << json{{"checkpoint", p.string()}}.dump() << "\n";
      return 0;
    }
    if (*ev) {
      int64_t crop = 0;
      if (ev->count("--crop-border") > 0) {
        crop = crop_arg.empty() || crop_arg.front().empty() ? eval_scale : std::stoll(crop_arg.front());
      }
      return run_eval(pred, gt, report, crop);
    }
    if (*va) {
      std::cout << bvsr::validate_dataset(vdir, vn).to_json().dump(2) << "\n";
      return 0;
    }
  } catch (const bvsr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return 2;
  } catch (const bvsr::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const bvsr::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
