#include "layerforge/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <utility>
#include <vector>

#include "layerforge/error.hpp"

namespace layerforge::checkpoint {

using nlohmann::json;

namespace {

constexpr char kMagic[6] = {'L', 'F', 'C', 'P', '1', '\n'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

double get_f64(const unsigned char* p) { return std::bit_cast<double>(get_u64(p)); }

std::string kind_name(vae::ArchKind k) {
  switch (k) {
    case vae::ArchKind::fc: return "fc";
    case vae::ArchKind::conv: return "conv";
    case vae::ArchKind::laplacian_conv: return "laplacian_conv";
  }
  throw ConfigError("unknown arch kind");
}

vae::ArchKind kind_from(const std::string& s) {
  if (s == "fc") return vae::ArchKind::fc;
  if (s == "conv") return vae::ArchKind::conv;
  if (s == "laplacian_conv") return vae::ArchKind::laplacian_conv;
  throw IoError("checkpoint: unknown arch kind '" + s + "'");
}

std::string op_name(vae::StageSpec::Op op) {
  switch (op) {
    case vae::StageSpec::Op::conv_same: return "conv_same";
    case vae::StageSpec::Op::conv_valid: return "conv_valid";
    case vae::StageSpec::Op::fc: return "fc";
  }
  throw ConfigError("unknown stage op");
}

vae::StageSpec::Op op_from(const std::string& s) {
  if (s == "conv_same") return vae::StageSpec::Op::conv_same;
  if (s == "conv_valid") return vae::StageSpec::Op::conv_valid;
  if (s == "fc") return vae::StageSpec::Op::fc;
  throw IoError("checkpoint: unknown stage op '" + s + "'");
}

// One named tensor headed for the blob.
struct Entry {
  std::string name;
  const Tensor* tensor;
};

json write_container(const std::string& path, json manifest, const std::vector<Entry>& entries) {
  json params = json::array();
  std::uint64_t offset = 0;
  for (const Entry& e : entries) {
    json p;
    p["name"] = e.name;
    p["shape"] = e.tensor->shape();
    p["dtype"] = "f64";
    p["offset"] = offset;
    params.push_back(std::move(p));
    offset += static_cast<std::uint64_t>(e.tensor->size()) * 8;
  }
  manifest["params"] = std::move(params);
  manifest["blob_bytes"] = offset;

  std::string body = manifest.dump(2);
  std::string out;
  out.reserve(sizeof(kMagic) + 8 + body.size() + offset);
  out.append(kMagic, sizeof(kMagic));
  put_u64(out, body.size());
  out += body;
  for (const Entry& e : entries) {
    const Tensor& t = *e.tensor;
    for (std::size_t i = 0; i < t.size(); ++i) put_f64(out, static_cast<double>(t[i]));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("checkpoint: cannot open " + path + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("checkpoint: short write to " + path);
  return manifest;
}

struct Container {
  json manifest;
  std::vector<unsigned char> blob;
};

Container read_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) + 8 ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IoError("checkpoint: " + path + " is not a checkpoint container");
  }
  std::uint64_t body_size = get_u64(bytes.data() + sizeof(kMagic));
  std::size_t body_start = sizeof(kMagic) + 8;
  if (bytes.size() < body_start + body_size) {
    throw IoError("checkpoint: truncated manifest in " + path);
  }
  Container c;
  try {
    c.manifest = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(body_start),
                             bytes.begin() + static_cast<std::ptrdiff_t>(body_start + body_size));
  } catch (const json::exception& e) {
    throw IoError("checkpoint: bad manifest in " + path + ": " + e.what());
  }
  c.blob.assign(bytes.begin() + static_cast<std::ptrdiff_t>(body_start + body_size), bytes.end());
  std::uint64_t expect = c.manifest.value("blob_bytes", std::uint64_t(0));
  if (c.blob.size() != expect) throw IoError("checkpoint: truncated blob in " + path);
  return c;
}

std::map<std::string, Tensor> read_entries(const Container& c, const std::string& path) {
  std::map<std::string, Tensor> out;
  for (const json& p : c.manifest.at("params")) {
    std::vector<int> shape = p.at("shape").get<std::vector<int>>();
    if (p.at("dtype").get<std::string>() != "f64") {
      throw IoError("checkpoint: unsupported dtype in " + path);
    }
    std::uint64_t offset = p.at("offset").get<std::uint64_t>();
    Tensor t(shape);
    if (offset + t.size() * 8 > c.blob.size()) {
      throw IoError("checkpoint: entry past end of blob in " + path);
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
      t[i] = static_cast<real>(get_f64(c.blob.data() + offset + i * 8));
    }
    out.emplace(p.at("name").get<std::string>(), std::move(t));
  }
  return out;
}

json config_to_json(const vae::TrainConfig& cfg) {
  json j;
  j["lr0"] = cfg.lr0;
  j["decay"] = cfg.decay;
  j["decay_every"] = cfg.decay_every;
  j["kl_base"] = cfg.kl_base;
  j["residual_weight"] = cfg.residual_weight;
  j["image_prior_weight"] = cfg.image_prior_weight;
  j["epochs"] = cfg.epochs;
  j["batch"] = cfg.batch;
  j["patch"] = cfg.patch;
  j["seed"] = cfg.seed;
  return j;
}

vae::TrainConfig config_from_json(const json& j) {
  vae::TrainConfig cfg;
  cfg.lr0 = j.at("lr0").get<double>();
  cfg.decay = j.at("decay").get<double>();
  cfg.decay_every = j.at("decay_every").get<long>();
  cfg.kl_base = j.at("kl_base").get<real>();
  cfg.residual_weight = j.at("residual_weight").get<real>();
  cfg.image_prior_weight = j.at("image_prior_weight").get<real>();
  cfg.epochs = j.at("epochs").get<int>();
  cfg.batch = j.at("batch").get<int>();
  cfg.patch = j.at("patch").get<int>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

json model_manifest(const vae::LayerModel& model, const std::string& kind) {
  json m;
  m["kind"] = kind;
  m["arch"] = arch_to_json(model.arch);
  m["seed"] = model.seed;
  m["iteration"] = model.iteration;
  m["dataset_id"] = model.dataset_id;
  m["prior"] = prior_to_json(model.prior);
  return m;
}

vae::LayerModel model_from(const Container& c, std::map<std::string, Tensor>&& entries,
                           const std::string& path) {
  vae::LayerModel model;
  model.arch = arch_from_json(c.manifest.at("arch"));
  model.seed = c.manifest.at("seed").get<std::uint64_t>();
  model.iteration = c.manifest.at("iteration").get<std::int64_t>();
  model.dataset_id = c.manifest.value("dataset_id", std::string());
  model.prior = prior_from_json(c.manifest.at("prior"));
  for (const auto& def : vae::param_defs(model.arch)) {
    auto it = entries.find(def.name);
    if (it == entries.end()) throw IoError("checkpoint: missing parameter " + def.name);
    if (it->second.shape() != def.shape) {
      throw IoError("checkpoint: shape mismatch for " + def.name + " in " + path);
    }
    model.params.emplace(def.name, std::move(it->second));
  }
  return model;
}

}  // namespace

json arch_to_json(const vae::ArchSpec& arch) {
  json j;
  j["name"] = arch.name;
  j["kind"] = kind_name(arch.kind);
  j["patch"] = arch.patch;
  j["levels"] = arch.levels;
  j["code_channels"] = arch.code_channels;
  j["code_dims"] = arch.code_dims;
  json stages = json::array();
  for (const auto& st : arch.stages) {
    stages.push_back(
        {{"op", op_name(st.op)}, {"k", st.k}, {"stride", st.stride}, {"width", st.width}});
  }
  j["stages"] = std::move(stages);
  return j;
}

vae::ArchSpec arch_from_json(const json& j) {
  vae::ArchSpec arch;
  arch.name = j.at("name").get<std::string>();
  arch.kind = kind_from(j.at("kind").get<std::string>());
  arch.patch = j.at("patch").get<int>();
  arch.levels = j.at("levels").get<int>();
  arch.code_channels = j.at("code_channels").get<int>();
  arch.code_dims = j.at("code_dims").get<int>();
  for (const json& s : j.at("stages")) {
    vae::StageSpec st;
    st.op = op_from(s.at("op").get<std::string>());
    st.k = s.at("k").get<int>();
    st.stride = s.at("stride").get<int>();
    st.width = s.at("width").get<int>();
    arch.stages.push_back(st);
  }
  return arch;
}

json prior_to_json(const vae::GaussianCodePrior& prior) {
  json j;
  j["mean"] = prior.mean;
  j["variance"] = prior.variance;
  j["d"] = prior.d;
  j["sample_count"] = prior.sample_count;
  return j;
}

vae::GaussianCodePrior prior_from_json(const json& j) {
  vae::GaussianCodePrior p;
  p.mean = j.at("mean").get<std::vector<real>>();
  p.variance = j.at("variance").get<real>();
  p.d = j.at("d").get<int>();
  p.sample_count = j.at("sample_count").get<std::int64_t>();
  if (p.d != static_cast<int>(p.mean.size())) {
    throw IoError("checkpoint: prior width does not match its mean vector");
  }
  return p;
}

void save_model(const vae::LayerModel& model, const std::string& path) {
  std::vector<Entry> entries;
  for (const auto& def : vae::param_defs(model.arch)) {
    entries.push_back({def.name, &model.params.at(def.name)});
  }
  write_container(path, model_manifest(model, "model"), entries);
}

vae::LayerModel load_model(const std::string& path) {
  Container c = read_container(path);
  try {
    return model_from(c, read_entries(c, path), path);
  } catch (const json::exception& e) {
    throw IoError("checkpoint: bad manifest in " + path + ": " + e.what());
  }
}

namespace {

vae::TrainState load_training_body(const Container& c, const std::string& path) {
  vae::TrainState st;
  st.model = model_from(c, read_entries(c, path), path);
  auto fresh = read_entries(c, path);
  st.config = config_from_json(c.manifest.at("config"));
  const json& steps = c.manifest.at("adam_steps");
  for (const auto& def : vae::param_defs(st.model.arch)) {
    auto mit = fresh.find("adam.m." + def.name);
    auto vit = fresh.find("adam.v." + def.name);
    if (mit == fresh.end() || vit == fresh.end()) {
      if (steps.contains(def.name)) throw IoError("checkpoint: missing moments for " + def.name);
      continue;
    }
    AdamState a;
    a.exp_avg = std::move(mit->second);
    a.exp_avg_sq = std::move(vit->second);
    a.step_count = steps.at(def.name).get<long>();
    st.adam.emplace(def.name, std::move(a));
  }
  std::size_t hist_len = c.manifest.at("loss_history_len").get<std::size_t>();
  auto hit = fresh.find("loss_history");
  if (hit == fresh.end() || hit->second.size() < hist_len) {
    throw IoError("checkpoint: loss history missing in " + path);
  }
  for (std::size_t i = 0; i < hist_len; ++i) st.loss_history.push_back(hit->second[i]);
  return st;
}

}  // namespace

void save_training(const vae::TrainState& state, const std::string& path) {
  json m = model_manifest(state.model, "training");
  m["config"] = config_to_json(state.config);
  json steps = json::object();
  std::vector<Entry> entries;
  for (const auto& def : vae::param_defs(state.model.arch)) {
    entries.push_back({def.name, &state.model.params.at(def.name)});
  }
  for (const auto& def : vae::param_defs(state.model.arch)) {
    auto it = state.adam.find(def.name);
    if (it == state.adam.end()) continue;
    entries.push_back({"adam.m." + def.name, &it->second.exp_avg});
    entries.push_back({"adam.v." + def.name, &it->second.exp_avg_sq});
    steps[def.name] = it->second.step_count;
  }
  m["adam_steps"] = std::move(steps);
  Tensor history({std::max(1, static_cast<int>(state.loss_history.size()))});
  for (std::size_t i = 0; i < state.loss_history.size(); ++i) history[i] = state.loss_history[i];
  m["loss_history_len"] = state.loss_history.size();
  entries.push_back({"loss_history", &history});
  write_container(path, std::move(m), entries);
}

vae::TrainState load_training(const std::string& path) {
  Container c = read_container(path);
  if (c.manifest.value("kind", std::string()) != "training") {
    throw IoError("checkpoint: " + path + " has no training state to resume");
  }
  try {
    return load_training_body(c, path);
  } catch (const json::exception& e) {
    throw IoError("checkpoint: bad manifest in " + path + ": " + e.what());
  }
}

}  // namespace layerforge::checkpoint
