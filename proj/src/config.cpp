#include "bvsr/config.hpp"

#include "bvsr/errors.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace bvsr {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::kSelfSupervised: return "self";
    case TrainMode::kSupervised: return "supervised";
    case TrainMode::kFinetune: return "finetune";
  }
  return "self";
}

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "self" || s == "self_supervised") return TrainMode::kSelfSupervised;
  if (s == "supervised") return TrainMode::kSupervised;
  if (s == "finetune") return TrainMode::kFinetune;
  throw std::invalid_argument("unknown training mode '" + s + "' (expected self|supervised|finetune)");
}

double TrainConfig::halving_factor(int64_t epoch) const {
  if (lr_halving_period <= 0) return 1.0;
  const int64_t halvings = (std::max<int64_t>(epoch, 1) - 1) / lr_halving_period;
  return std::ldexp(1.0, -static_cast<int>(halvings));
}

double TrainConfig::lr_main_at(int64_t epoch) const { return lr_main * halving_factor(epoch); }

namespace {

// Reads one JSON object, remembering which keys were consumed.
class Section {
 public:
  Section(const json& j, std::string prefix, std::vector<std::string>& unknown)
      : j_(j), prefix_(std::move(prefix)), unknown_(unknown) {
    if (!j_.is_object()) throw ConfigError("config section '" + label() + "' must be an object");
  }
  Section(const Section&) = delete;
  ~Section() {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) unknown_.push_back(prefix_ + key);
    }
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + prefix_ + key + "': " + e.what());
    }
  }

  void get_optional(const std::string& key, std::optional<double>& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    if (j_.at(key).is_null()) {
      out.reset();
      return;
    }
    double v = 0.0;
    get(key, v);
    out = v;
  }

  template <typename Enum, typename Parse>
  void get_enum(const std::string& key, Enum& out, Parse parse) {
    std::string s;
    seen_.insert(key);
    if (!j_.contains(key)) return;
    get(key, s);
    try {
      out = parse(s);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("config key '" + prefix_ + key + "': " + e.what());
    }
  }

  const json& child(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    return j_.contains(key) ? j_.at(key) : empty;
  }

 private:
  std::string label() const { return prefix_.empty() ? "<root>" : prefix_.substr(0, prefix_.size() - 1); }

  const json& j_;
  std::string prefix_;
  std::vector<std::string>& unknown_;
  std::set<std::string> seen_;
};

template <typename F>
void checked(const char* section, F&& fn) {
  try {
    fn();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string(section) + ": " + e.what());
  }
}

}  // namespace

void ExperimentConfig::resolve() {
  degradation.scale = scale;
  kernel_net.temporal_radius = temporal_radius;
  restoration.scale = scale;
  restoration.temporal_radius = temporal_radius;
  train.temporal_radius = temporal_radius;
}

void ExperimentConfig::validate() const {
  if (scale < 1) throw ConfigError("scale must be >= 1");
  if (temporal_radius < 0) throw ConfigError("n (temporal radius) must be >= 0");
  checked("degradation", [&] { degradation.validate(); });
  checked("kernel_net", [&] { kernel_net.validate(); });
  checked("flow", [&] { flow.validate(); });
  checked("restoration", [&] { restoration.validate(); });
  checked("loss", [&] { loss.validate(); });

  if (degradation.scale != scale || restoration.scale != scale) {
    throw ConfigError("degradation.scale and restoration.scale must equal scale");
  }
  if (kernel_net.temporal_radius != temporal_radius || restoration.temporal_radius != temporal_radius ||
      train.temporal_radius != temporal_radius) {
    throw ConfigError("kernel_net, restoration and train must share n (temporal radius)");
  }
  if (!(train.lr_main > 0.0)) throw ConfigError("train.lr_main must be > 0");
  if (train.lr_flow && !(*train.lr_flow > 0.0)) throw ConfigError("train.lr_flow must be > 0");
  if (train.epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (train.batch_size < 1) throw ConfigError("train.batch must be >= 1");
  if (train.max_steps < 0) throw ConfigError("train.max_steps must be >= 0");
  if (!(train.grad_clip >= 0.0)) throw ConfigError("train.grad_clip must be >= 0");
  if (!(train.adam_beta1 >= 0.0 && train.adam_beta1 < 1.0) || !(train.adam_beta2 >= 0.0 && train.adam_beta2 < 1.0)) {
    throw ConfigError("train.beta1 and train.beta2 must lie in [0, 1)");
  }
  const int64_t min_patch = scale * kernel_net.kernel_size;
  if (train.patch_size < min_patch) {
    std::ostringstream os;
    os << "train.patch (" << train.patch_size << ") must be >= scale (" << scale
       << ") * kernel_net.kernel_size (" << kernel_net.kernel_size << ") = " << min_patch;
    throw ConfigError(os.str());
  }
  if (train.patch_size % scale != 0) {
    std::ostringstream os;
    os << "train.patch (" << train.patch_size << ") must be a multiple of scale (" << scale << ")";
    throw ConfigError(os.str());
  }
  if (train.mode == TrainMode::kSupervised && hr_data_dir.empty()) {
    throw ConfigError("train.mode supervised requires hr_data");
  }
}

double ExperimentConfig::lr_flow() const {
  return train.lr_flow.value_or(train.lr_main * flow.resolved_lr_scale());
}

ModelConfig ExperimentConfig::model_config() const {
  return ModelConfig{kernel_net, flow, restoration};
}

fs::path ExperimentConfig::run_dir() const { return fs::path(output_root) / name; }

json ExperimentConfig::to_json() const {
  json j;
  j["name"] = name;
  j["output_root"] = output_root;
  j["data"] = data_dir;
  j["hr_data"] = hr_data_dir;
  j["scale"] = scale;
  j["n"] = temporal_radius;
  j["seed"] = train.seed;
  j["degradation"] = {{"noise_sigma", degradation.noise_sigma},
                      {"decimation_offset", degradation.decimation_offset},
                      {"padding", to_string(degradation.padding)}};
  j["kernel_net"] = {{"kernel_size", kernel_net.kernel_size},
                     {"conv_channels", kernel_net.conv_channels},
                     {"pool_after", kernel_net.pool_after},
                     {"pool", kernel_net.pool == PoolKind::kMax ? "max" : "average"},
                     {"fc_hidden", kernel_net.fc_hidden}};
  j["flow"] = {{"backend", to_string(flow.backend)},
               {"checkpoint", flow.checkpoint_path},
               {"trainable", flow.trainable},
               {"lr_scale", flow.resolved_lr_scale()},
               {"levels", flow.levels},
               {"channels", flow.channels}};
  j["restoration"] = {{"n_resblocks", restoration.n_resblocks},
                      {"feat_channels", restoration.feat_channels},
                      {"extractor_resblocks", restoration.extractor_resblocks},
                      {"global_residual", restoration.global_residual}};
  j["loss"] = {{"lambda", loss.lambda},
               {"gamma", loss.gamma},
               {"alpha", loss.alpha},
               {"rho", to_string(loss.rho)},
               {"boundary_weight", loss.boundary_weight},
               {"center_weight", loss.center_weight},
               {"detach", loss.detach_in_lself},
               {"enable_li", loss.enable_li},
               {"enable_lk", loss.enable_lk},
               {"aux_kernel_grad", loss.aux_kernel_grad}};
  j["train"] = {{"mode", to_string(train.mode)},
                {"lr_main", train.lr_main},
                {"lr_flow", lr_flow()},
                {"beta1", train.adam_beta1},
                {"beta2", train.adam_beta2},
                {"eps", train.adam_eps},
                {"epochs", train.epochs},
                {"lr_halving_period", train.lr_halving_period},
                {"batch", train.batch_size},
                {"patch", train.patch_size},
                {"max_steps", train.max_steps},
                {"grad_clip", train.grad_clip},
                {"nan_guard", train.nan_guard},
                {"save_every", train.save_every}};
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  std::vector<std::string> unknown;
  {
    Section root(j, "", unknown);
    root.get("name", c.name);
    root.get("output_root", c.output_root);
    root.get("data", c.data_dir);
    root.get("hr_data", c.hr_data_dir);
    root.get("scale", c.scale);
    root.get("n", c.temporal_radius);
    root.get("seed", c.train.seed);
    {
      Section s(root.child("degradation"), "degradation.", unknown);
      s.get("noise_sigma", c.degradation.noise_sigma);
      s.get("decimation_offset", c.degradation.decimation_offset);
      s.get_enum("padding", c.degradation.padding, padding_from_string);
    }
    {
      Section s(root.child("kernel_net"), "kernel_net.", unknown);
      s.get("kernel_size", c.kernel_net.kernel_size);
      s.get("conv_channels", c.kernel_net.conv_channels);
      s.get("pool_after", c.kernel_net.pool_after);
      s.get_enum("pool", c.kernel_net.pool, [](const std::string& v) {
        if (v == "max") return PoolKind::kMax;
        if (v == "average" || v == "avg") return PoolKind::kAverage;
        throw std::invalid_argument("unknown pool '" + v + "' (expected max|average)");
      });
      s.get("fc_hidden", c.kernel_net.fc_hidden);
    }
    {
      Section s(root.child("flow"), "flow.", unknown);
      s.get_enum("backend", c.flow.backend, flow_backend_from_string);
      s.get("checkpoint", c.flow.checkpoint_path);
      s.get("trainable", c.flow.trainable);
      s.get_optional("lr_scale", c.flow.lr_scale);
      s.get("levels", c.flow.levels);
      s.get("channels", c.flow.channels);
    }
    {
      Section s(root.child("restoration"), "restoration.", unknown);
      s.get("n_resblocks", c.restoration.n_resblocks);
      s.get("feat_channels", c.restoration.feat_channels);
      s.get("extractor_resblocks", c.restoration.extractor_resblocks);
      s.get("global_residual", c.restoration.global_residual);
    }
    {
      Section s(root.child("loss"), "loss.", unknown);
      s.get("lambda", c.loss.lambda);
      s.get("gamma", c.loss.gamma);
      s.get("alpha", c.loss.alpha);
      s.get_enum("rho", c.loss.rho, rho_from_string);
      s.get("boundary_weight", c.loss.boundary_weight);
      s.get("center_weight", c.loss.center_weight);
      s.get("detach", c.loss.detach_in_lself);
      s.get("enable_li", c.loss.enable_li);
      s.get("enable_lk", c.loss.enable_lk);
      s.get("aux_kernel_grad", c.loss.aux_kernel_grad);
    }
    {
      Section s(root.child("train"), "train.", unknown);
      s.get_enum("mode", c.train.mode, train_mode_from_string);
      s.get("lr_main", c.train.lr_main);
      s.get_optional("lr_flow", c.train.lr_flow);
      s.get("beta1", c.train.adam_beta1);
      s.get("beta2", c.train.adam_beta2);
      s.get("eps", c.train.adam_eps);
      s.get("epochs", c.train.epochs);
      s.get("lr_halving_period", c.train.lr_halving_period);
      s.get("batch", c.train.batch_size);
      s.get("patch", c.train.patch_size);
      s.get("max_steps", c.train.max_steps);
      s.get("grad_clip", c.train.grad_clip);
      s.get("nan_guard", c.train.nan_guard);
      s.get("save_every", c.train.save_every);
    }
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }
  c.resolve();
  return c;
}

ExperimentConfig parse_config(const fs::path& file, const json& overrides) {
  json base = json::object();
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config file " + file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
      try {
        base = json::parse(text);
      } catch (const json::parse_error& e) {
        throw ConfigError("config file " + file.string() + ": " + e.what());
      }
    }
  }
  if (!overrides.is_null()) base.merge_patch(overrides);
  auto cfg = ExperimentConfig::from_json(base);
  cfg.validate();
  return cfg;
}

void write_resolved_config(const ExperimentConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream out(dir / "resolved_config.json");
  out << cfg.to_json().dump(2) << '\n';
  if (!out) throw DataError("cannot write " + (dir / "resolved_config.json").string());
}

}  // namespace bvsr
