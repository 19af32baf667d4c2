#include "bvsr/checkpoint.hpp"

#include "bvsr/errors.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

namespace bvsr {

namespace fs = std::filesystem;

namespace {

using Dict = c10::Dict<std::string, c10::IValue>;

torch::Tensor bytes_to_tensor(const std::string& bytes) {
  auto t = torch::empty({static_cast<int64_t>(bytes.size())}, torch::kUInt8);
  std::memcpy(t.data_ptr<uint8_t>(), bytes.data(), bytes.size());
  return t;
}

std::string tensor_to_bytes(const torch::Tensor& t) {
  auto c = t.contiguous();
  return std::string(reinterpret_cast<const char*>(c.data_ptr<uint8_t>()), static_cast<size_t>(c.numel()));
}

Dict read_dict(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw NotFoundError("checkpoint not found: " + path.string());
  std::ifstream in(path, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return c10::impl::toTypedDict<std::string, c10::IValue>(torch::pickle_load(bytes).toGenericDict());
  } catch (const c10::Error& e) {
    throw ParseError("corrupt checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
}

const c10::IValue& lookup(const Dict& d, const std::string& key, const fs::path& path) {
  auto it = d.find(key);
  if (it == d.end()) throw ParseError("checkpoint " + path.string() + " lacks entry " + key);
  return it->value();
}

CheckpointMeta meta_from(const Dict& d, const fs::path& path) {
  CheckpointMeta m;
  m.epoch = lookup(d, "meta/epoch", path).toInt();
  m.step = lookup(d, "meta/step", path).toInt();
  try {
    m.config = nlohmann::json::parse(lookup(d, "meta/config", path).toStringRef());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint " + path.string() + ": bad config blob: " + e.what());
  }
  m.sampler_rng = lookup(d, "meta/sampler_rng", path).toStringRef();
  const auto& rng = lookup(d, "meta/torch_rng", path);
  if (rng.isTensor()) m.torch_rng = rng.toTensor();
  return m;
}

}  // namespace

void save_checkpoint(const fs::path& path, VideoSR& model, torch::optim::Optimizer* optimizer,
                     const CheckpointMeta& meta) {
  c10::impl::GenericDict d(c10::StringType::get(), c10::AnyType::get());
  for (auto& [name, p] : model.named_parameters()) d.insert(name, p.detach().clone());
  if (optimizer != nullptr) {
    torch::serialize::OutputArchive archive;
    optimizer->save(archive);
    std::ostringstream os;
    archive.save_to(os);
    d.insert("optimizer", bytes_to_tensor(os.str()));
  }
  d.insert("meta/epoch", meta.epoch);
  d.insert("meta/step", meta.step);
  d.insert("meta/config", meta.config.dump());
  d.insert("meta/sampler_rng", meta.sampler_rng);
  d.insert("meta/torch_rng", meta.torch_rng.defined() ? c10::IValue(meta.torch_rng) : c10::IValue());

  const auto bytes = torch::pickle_save(c10::IValue(d));
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("cannot write checkpoint " + tmp.string());
  }
  fs::rename(tmp, path);
}

CheckpointMeta read_checkpoint_meta(const fs::path& path) { return meta_from(read_dict(path), path); }

CheckpointMeta load_checkpoint(const fs::path& path, VideoSR& model, torch::optim::Optimizer* optimizer) {
  const Dict d = read_dict(path);
  {
    torch::NoGradGuard no_grad;
    for (auto& [name, p] : model.named_parameters()) {
      auto value = lookup(d, name, path).toTensor();
      if (value.sizes() != p.sizes()) {
        throw ParseError("checkpoint " + path.string() + ": shape mismatch for " + name);
      }
      p.copy_(value);
    }
  }
  if (optimizer != nullptr) {
    auto it = d.find("optimizer");
    if (it != d.end()) {
      std::istringstream is(tensor_to_bytes(it->value().toTensor()));
      torch::serialize::InputArchive archive;
      archive.load_from(is);
      optimizer->load(archive);
    }
  }
  return meta_from(d, path);
}

}  // namespace bvsr
