#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "layerforge/authoring.hpp"
#include "layerforge/checkpoint.hpp"
#include "layerforge/decompose.hpp"
#include "layerforge/error.hpp"
#include "layerforge/image_io.hpp"
#include "layerforge/metrics.hpp"
#include "layerforge/ops.hpp"
#include "layerforge/prior.hpp"
#include "layerforge/rng.hpp"
#include "layerforge/vae.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using namespace layerforge;

constexpr const char* kVersion = "0.1.0";

json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  json j = json::parse(is, nullptr, false);
  if (j.is_discarded()) throw IoError(path + ": invalid JSON");
  return j;
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << j.dump(2) << "\n";
  if (!os) throw IoError("short write: " + path);
}

void write_run_json(const fs::path& dir, const std::string& subcommand, const json& cfg) {
  fs::create_directories(dir);
  json run{{"tool", "layerforge"}, {"version", kVersion}, {"subcommand", subcommand},
           {"config", cfg}};
  write_json_file((dir / "run.json").string(), run);
}

// Binds CLI flags to config keys. Resolution order: built-in defaults, then
// the --config file, then explicit flags, then the preset for keys nothing
// pinned. The resolved json is what run.json records.
struct Binder {
  CLI::App* cmd = nullptr;
  json defaults = json::object();
  std::vector<std::function<void(json&, std::set<std::string>&)>> overlay;
  std::vector<std::function<void(const json&)>> writeback;

  template <class T>
  CLI::Option* opt(T& var, const std::string& flag, const std::string& key,
                   const std::string& help) {
    defaults[key] = var;
    CLI::Option* o = cmd->add_option(flag, var, help);
    overlay.push_back([&var, key, o](json& cfg, std::set<std::string>& pinned) {
      if (o->count() > 0) {
        cfg[key] = var;
        pinned.insert(key);
      }
    });
    writeback.push_back([&var, key](const json& cfg) { var = cfg.at(key).get<T>(); });
    return o;
  }

  CLI::Option* flag(bool& var, const std::string& spec, const std::string& key,
                    const std::string& help) {
    defaults[key] = var;
    CLI::Option* o = cmd->add_flag(spec, var, help);
    overlay.push_back([&var, key, o](json& cfg, std::set<std::string>& pinned) {
      if (o->count() > 0) {
        cfg[key] = var;
        pinned.insert(key);
      }
    });
    writeback.push_back([&var, key](const json& cfg) { var = cfg.at(key).get<bool>(); });
    return o;
  }
};

void set_if(json& cfg, const std::set<std::string>& pinned, const std::string& key,
            const json& value) {
  if (!pinned.count(key)) cfg[key] = value;
}

using PresetFn = std::function<void(json&, std::set<std::string>&, const std::string&)>;

json resolve(Binder& b, const std::string& subcommand, const std::string& config_path,
             const PresetFn& apply_preset = {}) {
  json cfg = b.defaults;
  std::set<std::string> pinned;
  if (!config_path.empty()) {
    json file = read_json_file(config_path);
    if (file.is_object() && file.contains("config")) {
      std::string sub = file.value("subcommand", subcommand);
      if (sub != subcommand) {
        throw ConfigError(config_path + ": config belongs to subcommand '" + sub + "'");
      }
      file = file["config"];
    }
    if (!file.is_object()) throw ConfigError(config_path + ": expected a JSON object");
    for (auto it = file.begin(); it != file.end(); ++it) {
      if (!cfg.contains(it.key())) {
        throw ConfigError(config_path + ": unknown config key '" + it.key() + "'");
      }
      cfg[it.key()] = it.value();
      pinned.insert(it.key());
    }
  }
  for (auto& f : b.overlay) f(cfg, pinned);
  std::string preset = cfg.value("preset", std::string());
  if (!preset.empty() && apply_preset) apply_preset(cfg, pinned, preset);
  for (auto& f : b.writeback) f(cfg);
  return cfg;
}

// The only environment input; the deterministic flag pins one thread and
// ordered reductions. The resolved count is recorded so a rerun needs no env.
int resolve_threads(json& cfg) {
  int t = cfg.value("threads", 0);
  if (t == 0) {
    if (const char* env = std::getenv("LAYERFORGE_THREADS")) {
      char* end = nullptr;
      long v = std::strtol(env, &end, 10);
      if (end == env || *end != '\0' || v < 1) {
        throw ConfigError("LAYERFORGE_THREADS must be a positive integer");
      }
      t = static_cast<int>(v);
    } else {
      t = 1;
    }
  }
  if (t < 1) throw ConfigError("threads must be >= 1");
  if (cfg.value("deterministic", false)) t = 1;
  cfg["threads"] = t;
  return t;
}

std::string fmt_real(real v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<real>::max_digits10) << v;
  return os.str();
}

Tensor load_image(const std::string& path) {
  Tensor t;
  if (fs::path(path).extension() == ".rawf") {
    t = io::read_rawf(path);
  } else {
    t = io::read_png(path);
  }
  if (t.rank() != 3) throw ConfigError(path + ": expected an (H, W, C) image");
  return t;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// ---------------------------------------------------------------------------
// author

struct AuthorCmd {
  std::string config_path;
  std::string kind = "composite";
  std::string preset;
  std::string out;
  int n = 100;
  int size = 128;
  std::uint64_t seed = 0;
  bool with_detail = false;
  bool deterministic = false;
  int threads = 0;
  Binder bind;

  void setup(CLI::App& app) {
    CLI::App* cmd = app.add_subcommand("author", "Generate a layer corpus on disk");
    bind.cmd = cmd;
    cmd->add_option("--config", config_path, "Load options from a config or run.json file");
    bind.opt(kind, "--kind", "kind",
             "Corpus kind: mondrian (alias albedo), shading, detail, composite");
    bind.opt(preset, "--preset", "preset", "Scale preset: paper (500 full-size) or desk (64 px)");
    bind.opt(n, "--n", "n", "Number of images");
    bind.opt(size, "--size", "size", "Image side in pixels");
    bind.opt(seed, "--seed", "seed", "Corpus seed");
    bind.flag(with_detail, "--with-detail,!--no-with-detail", "with_detail",
              "Multiply a detail layer into composites");
    bind.opt(out, "--out", "out", "Output directory");
    bind.flag(deterministic, "--deterministic,!--no-deterministic", "deterministic",
              "Single thread, ordered reductions");
    bind.opt(threads, "--threads", "threads", "Worker threads (0: LAYERFORGE_THREADS or 1)");
    cmd->callback([this] { run(); });
  }

  static void apply_preset(json& cfg, std::set<std::string>& pinned, const std::string& name) {
    std::string kind = cfg.value("kind", std::string());
    if (name == "paper") {
      set_if(cfg, pinned, "n", 500);
      set_if(cfg, pinned, "size", (kind == "mondrian" || kind == "albedo") ? 150 : 128);
    } else if (name == "desk") {
      set_if(cfg, pinned, "n", 500);
      set_if(cfg, pinned, "size", 64);
    } else {
      throw ConfigError("unknown author preset '" + name + "' (expected paper or desk)");
    }
  }

  void run() {
    json cfg = resolve(bind, "author", config_path, &AuthorCmd::apply_preset);
    resolve_threads(cfg);
    if (out.empty()) throw ConfigError("author: --out is required");
    std::string k = kind == "albedo" ? "mondrian" : kind;
    authoring::CorpusOptions opt;
    opt.kind = k;
    opt.n = n;
    opt.size = size;
    opt.seed = seed;
    opt.with_detail = with_detail;
    authoring::write_corpus(out, opt);
    write_run_json(out, "author", cfg);
    std::cerr << "author: wrote " << n << " " << k << " images (" << size << "x" << size
              << ") to " << out << "\n";
  }
};

// ---------------------------------------------------------------------------
// train

struct TrainCmd {
  std::string config_path;
  std::string arch;
  std::string preset;
  std::string layer = "layer";
  std::string corpus_dir;
  std::string out;
  bool resume = false;
  int epochs = 25;
  int batch = 16;
  real lr0 = real(1e-3);
  real decay = real(0.9);
  int decay_every = 500;
  real kl_base = real(20);
  real residual_weight = real(1000);
  real image_prior_weight = real(0.1);
  int patch = 0;
  std::uint64_t seed = 0;
  bool deterministic = false;
  int threads = 0;
  Binder bind;

  void setup(CLI::App& app) {
    CLI::App* cmd = app.add_subcommand("train", "Train a layer model on a corpus");
    bind.cmd = cmd;
    cmd->add_option("--config", config_path, "Load options from a config or run.json file");
    bind.opt(arch, "--arch", "arch", "Architecture preset (vae-1, vae-2, cvae, lcvae, authored, "
                                     "desk-vae1, desk-vae2, desk-cvae, desk-lcvae)");
    bind.opt(preset, "--preset", "preset",
             "Scale preset: paper (authored architecture) or desk (desk-lcvae)");
    bind.opt(layer, "--layer", "layer", "Layer name this model is meant for (bookkeeping)");
    bind.opt(corpus_dir, "--corpus", "corpus", "Corpus directory to train on");
    bind.opt(out, "--out", "out", "Output directory (checkpoint.lfcp, loss.csv, run.json)");
    bind.flag(resume, "--resume,!--no-resume", "resume",
              "Continue from out/checkpoint.lfcp; the stored config wins, --epochs adds passes");
    bind.opt(epochs, "--epochs", "epochs", "Epoch passes to run in this invocation");
    bind.opt(batch, "--batch", "batch", "Patches per optimizer step");
    bind.opt(lr0, "--lr0", "lr0", "Initial learning rate");
    bind.opt(decay, "--decay", "decay", "Learning-rate decay factor");
    bind.opt(decay_every, "--decay-every", "decay_every", "Iterations between decays");
    bind.opt(kl_base, "--kl-base", "kl_base", "KL weight scale (schedule kl_base*sigmoid(.02t-.5))");
    bind.opt(residual_weight, "--residual-weight", "residual_weight", "Reconstruction weight");
    bind.opt(image_prior_weight, "--image-prior-weight", "image_prior_weight",
             "Gradient-sparsity weight on decoded patches");
    bind.opt(patch, "--patch", "patch", "Training crop size (0: architecture default)");
    bind.opt(seed, "--seed", "seed", "Training seed");
    bind.flag(deterministic, "--deterministic,!--no-deterministic", "deterministic",
              "Single thread, ordered reductions");
    bind.opt(threads, "--threads", "threads", "Worker threads (0: LAYERFORGE_THREADS or 1)");
    cmd->callback([this] { run(); });
  }

  static void apply_preset(json& cfg, std::set<std::string>& pinned, const std::string& name) {
    if (name == "paper") {
      set_if(cfg, pinned, "arch", "authored");
    } else if (name == "desk") {
      set_if(cfg, pinned, "arch", "desk-lcvae");
    } else {
      throw ConfigError("unknown train preset '" + name + "' (expected paper or desk)");
    }
  }

  void run() {
    json cfg = resolve(bind, "train", config_path, &TrainCmd::apply_preset);
    resolve_threads(cfg);
    if (corpus_dir.empty()) throw ConfigError("train: --corpus is required");
    if (out.empty()) throw ConfigError("train: --out is required");
    authoring::Corpus corpus = authoring::read_corpus(corpus_dir);
    if (corpus.images.empty()) throw ConfigError("train: corpus is empty");
    std::string dataset_id =
        corpus.kind + ":" + std::to_string(corpus.images.size());
    fs::create_directories(out);
    fs::path ckpt = fs::path(out) / "checkpoint.lfcp";

    vae::TrainState st;
    if (resume) {
      st = checkpoint::load_training(ckpt.string());
      if (st.model.dataset_id != dataset_id) {
        throw ConfigError("train: checkpoint was trained on '" + st.model.dataset_id +
                          "' but the corpus is '" + dataset_id + "'");
      }
      // Stored config wins; epochs accumulate so a split run saves the same
      // state as a straight one.
      st.config.epochs += epochs;
      cfg["arch"] = st.model.arch.name;
      cfg["batch"] = st.config.batch;
      cfg["lr0"] = st.config.lr0;
      cfg["decay"] = st.config.decay;
      cfg["decay_every"] = st.config.decay_every;
      cfg["kl_base"] = st.config.kl_base;
      cfg["residual_weight"] = st.config.residual_weight;
      cfg["image_prior_weight"] = st.config.image_prior_weight;
      cfg["patch"] = st.config.patch;
      cfg["seed"] = st.config.seed;
    } else {
      if (arch.empty()) throw ConfigError("train: --arch or --preset is required");
      vae::ArchSpec spec = vae::preset(arch);
      vae::TrainConfig tc;
      tc.lr0 = lr0;
      tc.decay = decay;
      tc.decay_every = decay_every;
      tc.kl_base = kl_base;
      tc.residual_weight = residual_weight;
      tc.image_prior_weight = image_prior_weight;
      tc.epochs = epochs;
      tc.batch = batch;
      tc.patch = patch;
      tc.seed = seed;
      st = vae::init_training(spec, tc);
      st.model.dataset_id = dataset_id;
      cfg["arch"] = spec.name;
    }

    vae::train_epochs(st, corpus.images, corpus.masks, epochs);
    checkpoint::save_training(st, ckpt.string());

    std::ofstream csv(fs::path(out) / "loss.csv", std::ios::binary);
    if (!csv) throw IoError("cannot open " + (fs::path(out) / "loss.csv").string());
    csv << "iteration,loss\n";
    for (std::size_t i = 0; i < st.loss_history.size(); ++i) {
      csv << i << "," << fmt_real(st.loss_history[i]) << "\n";
    }
    if (!csv) throw IoError("short write: loss.csv");
    write_run_json(out, "train", cfg);
    std::cerr << "train: " << cfg["arch"].get<std::string>() << " on " << dataset_id << ", "
              << epochs << " epochs, " << st.loss_history.size() << " iterations, final loss "
              << (st.loss_history.empty() ? real(0) : st.loss_history.back()) << "\n";
  }
};

// ---------------------------------------------------------------------------
// fit-prior

struct FitPriorCmd {
  std::string config_path;
  std::string ckpt_path;
  std::string corpus_dir;
  std::string out;
  std::string report;
  real scale_factor = real(3);
  bool deterministic = false;
  int threads = 0;
  Binder bind;

  void setup(CLI::App& app) {
    CLI::App* cmd =
        app.add_subcommand("fit-prior", "Fit the spherical code prior of a trained model");
    bind.cmd = cmd;
    cmd->add_option("--config", config_path, "Load options from a config or run.json file");
    bind.opt(ckpt_path, "--checkpoint", "checkpoint", "Model or training checkpoint to update");
    bind.opt(corpus_dir, "--corpus", "corpus", "Corpus whose codes define the prior");
    bind.opt(out, "--out", "out", "Output checkpoint path (default: update in place)");
    bind.opt(report, "--report", "report",
             "Sanity report path (default: prior_report.json next to the checkpoint)");
    bind.opt(scale_factor, "--scale", "scale",
             "Code scale for the out-of-distribution NLL comparison");
    bind.flag(deterministic, "--deterministic,!--no-deterministic", "deterministic",
              "Single thread, ordered reductions");
    bind.opt(threads, "--threads", "threads", "Worker threads (0: LAYERFORGE_THREADS or 1)");
    cmd->callback([this] { run(); });
  }

  void run() {
    json cfg = resolve(bind, "fit-prior", config_path);
    resolve_threads(cfg);
    if (ckpt_path.empty()) throw ConfigError("fit-prior: --checkpoint is required");
    if (corpus_dir.empty()) throw ConfigError("fit-prior: --corpus is required");

    bool is_training = true;
    vae::TrainState st;
    try {
      st = checkpoint::load_training(ckpt_path);
    } catch (const Error&) {
      is_training = false;
      st = vae::TrainState{};
      st.model = checkpoint::load_model(ckpt_path);
    }

    authoring::Corpus corpus = authoring::read_corpus(corpus_dir);
    if (corpus.images.empty()) throw ConfigError("fit-prior: corpus is empty");
    Tensor codes = prior::collect_codes(st.model, corpus.images);
    st.model.prior = prior::fit_prior(codes);

    real nll_in = 0;
    real nll_scaled = 0;
    for (const Tensor& image : corpus.images) {
      std::vector<vae::CodeField> fields = vae::encode(st.model, to_log_domain(image));
      std::vector<Tensor> means;
      means.reserve(fields.size());
      for (vae::CodeField& f : fields) means.push_back(std::move(f.mean));
      nll_in += prior::code_nll(st.model.prior, means);
      for (Tensor& m : means) m = scale(m, scale_factor);
      nll_scaled += prior::code_nll(st.model.prior, means);
    }
    nll_in /= real(corpus.images.size());
    nll_scaled /= real(corpus.images.size());
    bool sane = nll_in < nll_scaled;

    std::string out_path = out.empty() ? ckpt_path : out;
    if (!fs::path(out_path).parent_path().empty()) {
      fs::create_directories(fs::path(out_path).parent_path());
    }
    if (is_training) {
      checkpoint::save_training(st, out_path);
    } else {
      checkpoint::save_model(st.model, out_path);
    }

    fs::path out_dir = fs::path(out_path).parent_path();
    if (out_dir.empty()) out_dir = ".";
    std::string report_path =
        report.empty() ? (out_dir / "prior_report.json").string() : report;
    json rep{{"schema_version", 1},
             {"prior",
              {{"d", st.model.prior.d},
               {"variance", st.model.prior.variance},
               {"sample_count", st.model.prior.sample_count}}},
             {"scale", scale_factor},
             {"nll_in_distribution", nll_in},
             {"nll_scaled", nll_scaled},
             {"sane", sane}};
    write_json_file(report_path, rep);
    write_run_json(out_dir, "fit-prior", cfg);
    std::cerr << "fit-prior: d=" << st.model.prior.d << " variance=" << st.model.prior.variance
              << " nll_in=" << nll_in << " nll_scaled=" << nll_scaled
              << (sane ? " (sane)" : " (NOT sane)") << "\n";
    if (!sane) throw NumericError("fit-prior: in-distribution NLL is not below scaled-code NLL");
  }
};

// ---------------------------------------------------------------------------
// decompose

struct DecomposeCmd {
  std::string config_path;
  std::string image_path;
  std::vector<std::string> models;
  std::string preset;
  std::string out;
  real lambda_r = real(-1);  // -1: default for the layer count
  real lambda_p = real(1e-4);
  real lambda_c = real(1e4);
  int corr_patch = 8;
  int steps = 2000;
  real lr = real(0.01);
  real detail_dc = real(0);
  bool exact_sum = false;
  bool negate_prior = false;
  std::string init = "smoothed";
  std::uint64_t seed = 0;
  bool deterministic = false;
  int threads = 0;
  Binder bind;

  void setup(CLI::App& app) {
    CLI::App* cmd = app.add_subcommand("decompose", "Decompose an image into layers");
    bind.cmd = cmd;
    cmd->add_option("--config", config_path, "Load options from a config or run.json file");
    bind.opt(image_path, "--image", "image", "Input image (.png or .rawf), linear domain");
    bind.opt(models, "--model", "models",
             "Layer model as name=checkpoint.lfcp (repeat per layer)");
    bind.opt(preset, "--preset", "preset",
             "Objective preset: as (albedo+shading), sd (shading+detail), asd (all three)");
    bind.opt(lambda_r, "--lambda-r", "lambda_r",
             "Reconstruction weight (-1: 100 for 2 layers, 10000 for 3+)");
    bind.opt(lambda_p, "--lambda-p", "lambda_p", "Code prior weight");
    bind.opt(lambda_c, "--lambda-c", "lambda_c", "Decorrelation weight");
    bind.opt(corr_patch, "--corr-patch", "corr_patch", "Correlation patch size");
    bind.opt(steps, "--steps", "steps", "Optimizer steps");
    bind.opt(lr, "--lr", "lr", "Optimizer learning rate");
    bind.opt(detail_dc, "--detail-dc", "detail_dc",
             "Weight pinning the coarsest detail level to a constant");
    bind.flag(exact_sum, "--exact-sum,!--no-exact-sum", "exact_sum",
              "Project the output so the log layers sum exactly to the log image");
    bind.flag(negate_prior, "--negate-prior,!--no-negate-prior", "negate_prior",
              "Flip the code-prior term's sign (subtract the weighted NLL instead of adding)");
    bind.opt(init, "--init", "init",
             "Initial split: smoothed (blur vs residual) or from-image (shading = image)");
    bind.opt(seed, "--seed", "seed", "Decomposition seed");
    bind.opt(out, "--out", "out", "Output directory");
    bind.flag(deterministic, "--deterministic,!--no-deterministic", "deterministic",
              "Single thread, ordered reductions");
    bind.opt(threads, "--threads", "threads", "Worker threads (0: LAYERFORGE_THREADS or 1)");
    cmd->callback([this] { run(); });
  }

  static void apply_preset(json& cfg, std::set<std::string>& pinned, const std::string& name) {
    if (name == "as") {
      set_if(cfg, pinned, "lambda_r", 100.0);
      set_if(cfg, pinned, "lambda_p", 1e-4);
      set_if(cfg, pinned, "lambda_c", 1e4);
      set_if(cfg, pinned, "init", "smoothed");
    } else if (name == "sd") {
      set_if(cfg, pinned, "lambda_r", 100.0);
      set_if(cfg, pinned, "lambda_p", 1e-4);
      set_if(cfg, pinned, "lambda_c", 1e4);
      set_if(cfg, pinned, "detail_dc", 100.0);
      set_if(cfg, pinned, "exact_sum", true);
      set_if(cfg, pinned, "init", "from-image");
    } else if (name == "asd") {
      set_if(cfg, pinned, "lambda_r", 1e4);
      set_if(cfg, pinned, "lambda_p", 1e-4);
      set_if(cfg, pinned, "lambda_c", 1e4);
      set_if(cfg, pinned, "init", "smoothed");
    } else {
      throw ConfigError("unknown decompose preset '" + name + "' (expected as, sd, or asd)");
    }
  }

  static const std::vector<std::string>& preset_layers(const std::string& name) {
    static const std::vector<std::string> as{"albedo", "shading"};
    static const std::vector<std::string> sd{"shading", "detail"};
    static const std::vector<std::string> asd{"albedo", "shading", "detail"};
    if (name == "as") return as;
    if (name == "sd") return sd;
    return asd;
  }

  void run() {
    json cfg = resolve(bind, "decompose", config_path, &DecomposeCmd::apply_preset);
    resolve_threads(cfg);
    if (image_path.empty()) throw ConfigError("decompose: --image is required");
    if (out.empty()) throw ConfigError("decompose: --out is required");
    if (models.empty()) throw ConfigError("decompose: at least one --model name=path is required");

    std::vector<std::pair<std::string, std::string>> slots;
    for (const std::string& m : models) {
      std::size_t eq = m.find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 == m.size()) {
        throw ConfigError("decompose: --model expects name=path, got '" + m + "'");
      }
      slots.emplace_back(m.substr(0, eq), m.substr(eq + 1));
    }
    std::string preset_name = cfg.value("preset", std::string());
    if (!preset_name.empty()) {
      const std::vector<std::string>& order = preset_layers(preset_name);
      std::set<std::string> given;
      for (auto& s : slots) given.insert(s.first);
      std::set<std::string> wanted(order.begin(), order.end());
      if (given != wanted) {
        std::string names;
        for (const std::string& n : order) names += (names.empty() ? "" : ", ") + n;
        throw ConfigError("decompose: preset '" + preset_name + "' needs models named: " + names);
      }
      std::vector<std::pair<std::string, std::string>> ordered;
      for (const std::string& n : order) {
        for (auto& s : slots) {
          if (s.first == n) ordered.push_back(s);
        }
      }
      slots = std::move(ordered);
    }

    decompose::DecompositionSpec spec;
    for (auto& [name, path] : slots) {
      spec.layers.push_back({name, checkpoint::load_model(path)});
    }
    spec.lambda_r = lambda_r < 0
                        ? decompose::default_lambda_r(static_cast<int>(spec.layers.size()))
                        : lambda_r;
    cfg["lambda_r"] = spec.lambda_r;
    spec.lambda_p = lambda_p;
    spec.lambda_c = lambda_c;
    spec.corr_patch = corr_patch;
    spec.steps = steps;
    spec.lr = lr;
    spec.detail_dc = detail_dc;
    spec.exact_sum = exact_sum;
    spec.negate_prior = negate_prior;
    spec.seed = seed;
    if (init == "smoothed") {
      spec.init = decompose::InitMode::smoothed_split;
    } else if (init == "from-image") {
      spec.init = decompose::InitMode::shading_from_image;
    } else {
      throw ConfigError("decompose: unknown init '" + init + "' (expected smoothed or from-image)");
    }

    Tensor image = load_image(image_path);
    decompose::DecompositionResult res = decompose::optimize(spec, image);

    fs::create_directories(out);
    Tensor recon;
    for (std::size_t i = 0; i < res.names.size(); ++i) {
      const std::string& name = res.names[i];
      io::write_rawf((fs::path(out) / ("layer_" + name + ".rawf")).string(),
                     res.linear_layers[i]);
      io::write_png16((fs::path(out) / ("layer_" + name + ".png")).string(),
                      res.linear_layers[i]);
      recon = i == 0 ? res.linear_layers[i] : mul(recon, res.linear_layers[i]);
    }
    io::write_rawf((fs::path(out) / "recon.rawf").string(), recon);
    io::write_png16((fs::path(out) / "recon.png").string(), recon);

    json rows = json::array();
    real best = std::numeric_limits<real>::infinity();
    for (std::size_t t = 0; t < res.trace.size(); ++t) {
      const decompose::TraceRow& r = res.trace[t];
      best = std::min(best, r.total);
      rows.push_back(json::array(
          {t, r.total, r.residual, r.code_nll, r.correlation, r.detail_dc, best}));
    }
    json trace{{"schema_version", 1},
               {"layers", res.names},
               {"converged", res.converged},
               {"best_step", res.best_step},
               {"columns", json::array({"step", "total", "residual", "code_nll", "correlation",
                                        "detail_dc", "best_total"})},
               {"rows", rows}};
    write_json_file((fs::path(out) / "trace.json").string(), trace);
    write_run_json(out, "decompose", cfg);
    std::cerr << "decompose: best total " << (res.trace.empty() ? real(0) : best) << " at step "
              << res.best_step << (res.converged ? "" : " (stopped early)") << ", "
              << res.seconds << " s\n";
  }
};

// ---------------------------------------------------------------------------
// bench-vae

struct BenchCmd {
  std::string config_path;
  std::string corpus_dir;
  std::string out;
  int epochs = 10;
  int heldout = 200;
  std::uint64_t seed = 0;
  bool deterministic = false;
  int threads = 0;
  Binder bind;

  void setup(CLI::App& app) {
    CLI::App* cmd = app.add_subcommand(
        "bench-vae", "Train the four desk architectures and compare held-out L2");
    bind.cmd = cmd;
    cmd->add_option("--config", config_path, "Load options from a config or run.json file");
    bind.opt(corpus_dir, "--corpus", "corpus", "Patch corpus directory");
    bind.opt(out, "--out", "out", "Output directory");
    bind.opt(epochs, "--epochs", "epochs", "Epoch passes per architecture");
    bind.opt(heldout, "--heldout", "heldout", "Images held out for evaluation");
    bind.opt(seed, "--seed", "seed", "Split and training seed");
    bind.flag(deterministic, "--deterministic,!--no-deterministic", "deterministic",
              "Single thread, ordered reductions");
    bind.opt(threads, "--threads", "threads", "Worker threads (0: LAYERFORGE_THREADS or 1)");
    cmd->callback([this] { run(); });
  }

  static std::int64_t total_code_dims(const vae::ArchSpec& arch) {
    if (arch.kind == vae::ArchKind::fc) return arch.code_dims;
    std::int64_t total = 0;
    for (const auto& level : vae::shape_table(arch, arch.patch)) {
      const std::array<int, 3>& code = level.back();
      total += std::int64_t(code[0]) * code[1] * code[2];
    }
    return total;
  }

  void run() {
    json cfg = resolve(bind, "bench-vae", config_path);
    resolve_threads(cfg);
    if (corpus_dir.empty()) throw ConfigError("bench-vae: --corpus is required");
    if (out.empty()) throw ConfigError("bench-vae: --out is required");
    authoring::Corpus corpus = authoring::read_corpus(corpus_dir);
    int n = static_cast<int>(corpus.images.size());
    if (heldout < 1) throw ConfigError("bench-vae: --heldout must be >= 1");
    if (heldout >= n) throw ConfigError("bench-vae: --heldout must leave training images");

    // Seeded split; held-out membership is independent of the architecture.
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed, RngStream::heldout, 0);
    for (int i = n - 1; i > 0; --i) {
      std::swap(order[i], order[rng.uniform_int(i + 1)]);
    }
    std::vector<char> held(n, 0);
    for (int i = 0; i < heldout; ++i) held[order[i]] = 1;
    std::vector<Tensor> train_images;
    std::vector<Tensor> train_masks;
    std::vector<int> held_idx;
    for (int i = 0; i < n; ++i) {
      if (held[i]) {
        held_idx.push_back(i);
      } else {
        train_images.push_back(corpus.images[i]);
        if (!corpus.masks.empty()) train_masks.push_back(corpus.masks[i]);
      }
    }
    std::string dataset_id = corpus.kind + ":" + std::to_string(train_images.size());

    fs::create_directories(out);
    const std::vector<std::string> archs{"desk-vae1", "desk-vae2", "desk-cvae", "desk-lcvae"};
    json model_rows = json::array();
    std::map<std::string, real> l2;
    std::map<std::string, std::size_t> params;
    std::map<std::string, std::int64_t> code_dims;
    for (const std::string& name : archs) {
      vae::ArchSpec arch = vae::preset(name);
      vae::TrainConfig tc;
      tc.seed = seed;
      tc.epochs = epochs;
      vae::TrainState st = vae::init_training(arch, tc);
      st.model.dataset_id = dataset_id;
      vae::train_epochs(st, train_images, train_masks, epochs);
      checkpoint::save_training(st, (fs::path(out) / (name + ".lfcp")).string());
      std::ofstream csv(fs::path(out) / ("loss_" + name + ".csv"), std::ios::binary);
      if (!csv) throw IoError("cannot open loss_" + name + ".csv");
      csv << "iteration,loss\n";
      for (std::size_t i = 0; i < st.loss_history.size(); ++i) {
        csv << i << "," << fmt_real(st.loss_history[i]) << "\n";
      }

      std::vector<Tensor> patches;
      for (std::size_t k = 0; k < held_idx.size(); ++k) {
        int i = held_idx[k];
        const Tensor& img = corpus.images[i];
        if (img.extent(0) == arch.patch && img.extent(1) == arch.patch) {
          patches.push_back(img);
        } else if (!corpus.masks.empty()) {
          patches.push_back(authoring::crop_augment(img, corpus.masks[i], arch.patch,
                                                    mix_seed(seed, RngStream::heldout,
                                                             1000 + std::uint64_t(i))));
        } else {
          patches.push_back(authoring::crop_augment(
              img, arch.patch, mix_seed(seed, RngStream::heldout, 1000 + std::uint64_t(i))));
        }
      }
      l2[name] = metrics::recon_l2(st.model, patches);
      params[name] = vae::param_count(arch);
      code_dims[name] = total_code_dims(arch);
      model_rows.push_back(json{{"name", name},
                                {"parameters", params[name]},
                                {"code_dims", code_dims[name]},
                                {"heldout_l2", l2[name]}});
      std::cerr << "bench-vae: " << name << " params=" << params[name]
                << " code_dims=" << code_dims[name] << " heldout_l2=" << l2[name] << "\n";
    }

    bool ordered = l2["desk-lcvae"] < l2["desk-cvae"] && l2["desk-cvae"] < l2["desk-vae2"] &&
                   l2["desk-vae2"] < l2["desk-vae1"];
    json rep{{"schema_version", 1},
             {"epochs", epochs},
             {"heldout_count", heldout},
             {"seed", seed},
             {"models", model_rows},
             {"ordering",
              {{"expected", json::array({"desk-lcvae", "desk-cvae", "desk-vae2", "desk-vae1"})},
               {"satisfied", ordered}}},
             {"parameter_notes",
              {{"vae1_vs_cvae_parameters",
                real(params["desk-vae1"]) / real(params["desk-cvae"])},
               {"vae2_vs_cvae_code_dims",
                real(code_dims["desk-vae2"]) / real(code_dims["desk-cvae"])}}}};
    write_json_file((fs::path(out) / "bench.json").string(), rep);
    write_run_json(out, "bench-vae", cfg);
    std::cerr << "bench-vae: ordering lcvae < cvae < vae2 < vae1 "
              << (ordered ? "holds" : "violated") << "\n";
  }
};

// ---------------------------------------------------------------------------
// eval

struct EvalCmd {
  std::string config_path;
  std::string pred_dir;
  std::string gt_dir;
  std::string metric_list = "smse,rmse,rsmse";
  std::string judgments;
  real delta = real(0.25);
  int window = 20;
  int stride = 10;
  int index = -1;
  std::string transfer = "linear";
  bool use_mask = false;
  bool baseline = true;
  std::string report = "report.json";
  bool deterministic = false;
  int threads = 0;
  Binder bind;

  void setup(CLI::App& app) {
    CLI::App* cmd = app.add_subcommand("eval", "Score decompositions against ground truth");
    bind.cmd = cmd;
    cmd->add_option("--config", config_path, "Load options from a config or run.json file");
    bind.opt(pred_dir, "--pred", "pred",
             "Decomposition output directory, or a directory of them named by corpus index");
    bind.opt(gt_dir, "--gt", "gt", "Ground-truth corpus directory (or a directory of .rawf layers)");
    bind.opt(metric_list, "--metrics", "metrics", "Comma list from smse,rmse,rsmse,whdr");
    bind.opt(judgments, "--judgments", "judgments",
             "Judgment file for whdr (directory of <index>.json when --pred holds many)");
    bind.opt(delta, "--delta", "delta", "WHDR equality threshold");
    bind.opt(window, "--window", "window", "Local metric window");
    bind.opt(stride, "--stride", "stride", "Local metric stride");
    bind.opt(index, "--index", "index", "Corpus index for a single prediction (-1: 0)");
    bind.opt(transfer, "--transfer", "transfer", "WHDR luminance transfer: linear or srgb");
    bind.flag(use_mask, "--use-mask,!--no-use-mask", "use_mask",
              "Restrict metrics to the ground-truth mask when one exists");
    bind.flag(baseline, "--baseline,!--no-baseline", "baseline",
              "Also score the naive constant-shading baseline");
    bind.opt(report, "--report", "report", "Report path");
    bind.flag(deterministic, "--deterministic,!--no-deterministic", "deterministic",
              "Single thread, ordered reductions");
    bind.opt(threads, "--threads", "threads", "Worker threads (0: LAYERFORGE_THREADS or 1)");
    cmd->callback([this] { run(); });
  }

  static std::optional<Tensor> try_layer(const fs::path& dir, const std::string& name) {
    for (const std::string& stem : {"layer_" + name, name}) {
      fs::path p = dir / (stem + ".rawf");
      if (fs::exists(p)) return io::read_rawf(p.string());
    }
    return std::nullopt;
  }

  static bool is_result_dir(const fs::path& dir) {
    for (const char* name : {"albedo", "shading", "detail"}) {
      if (fs::exists(dir / ("layer_" + std::string(name) + ".rawf"))) return true;
    }
    return false;
  }

  // The shading side of a decomposition is the product of every non-albedo
  // layer, so 2- and 3-layer runs score on the same quantity.
  static std::optional<Tensor> shading_total(const std::map<std::string, Tensor>& layers) {
    std::optional<Tensor> total;
    for (const char* name : {"shading", "detail"}) {
      auto it = layers.find(name);
      if (it == layers.end()) continue;
      total = total ? mul(*total, it->second) : it->second;
    }
    return total;
  }

  void run() {
    json cfg = resolve(bind, "eval", config_path);
    resolve_threads(cfg);
    if (pred_dir.empty()) throw ConfigError("eval: --pred is required");
    if (gt_dir.empty()) throw ConfigError("eval: --gt is required");
    std::vector<std::string> wanted = split_csv(metric_list);
    if (wanted.empty()) throw ConfigError("eval: --metrics must name at least one metric");
    for (const std::string& m : wanted) {
      if (m != "smse" && m != "rmse" && m != "rsmse" && m != "whdr") {
        throw ConfigError("eval: unknown metric '" + m + "'");
      }
    }
    auto requested = [&](const char* m) {
      return std::find(wanted.begin(), wanted.end(), m) != wanted.end();
    };
    metrics::Transfer tr;
    if (transfer == "linear") {
      tr = metrics::Transfer::linear;
    } else if (transfer == "srgb") {
      tr = metrics::Transfer::srgb;
    } else {
      throw ConfigError("eval: unknown transfer '" + transfer + "'");
    }

    struct Item {
      std::string name;
      fs::path dir;
      int gt_index = 0;
    };
    std::vector<Item> items;
    bool multi = false;
    if (is_result_dir(pred_dir)) {
      items.push_back({"image", pred_dir, index < 0 ? 0 : index});
    } else {
      multi = true;
      std::vector<std::string> subs;
      if (fs::is_directory(pred_dir)) {
        for (const auto& e : fs::directory_iterator(pred_dir)) {
          if (e.is_directory() && is_result_dir(e.path())) subs.push_back(e.path().filename());
        }
      }
      std::sort(subs.begin(), subs.end());
      if (subs.empty()) throw ConfigError("eval: no decomposition outputs under " + pred_dir);
      if (index >= 0) throw ConfigError("eval: --index only applies to a single prediction");
      for (const std::string& s : subs) {
        char* end = nullptr;
        long v = std::strtol(s.c_str(), &end, 10);
        if (end == s.c_str() || *end != '\0' || v < 0) {
          throw ConfigError("eval: prediction directory '" + s + "' is not a corpus index");
        }
        items.push_back({s, fs::path(pred_dir) / s, static_cast<int>(v)});
      }
    }

    bool corpus_gt = fs::exists(fs::path(gt_dir) / "corpus.json");
    authoring::Corpus corpus;
    if (corpus_gt) {
      corpus = authoring::read_corpus(gt_dir);
    } else if (multi) {
      throw ConfigError("eval: many predictions need a corpus ground truth");
    }

    json images = json::array();
    std::map<std::string, real> sums;
    std::map<std::string, real> base_sums;
    for (const Item& item : items) {
      std::map<std::string, Tensor> pred;
      for (const char* name : {"albedo", "shading", "detail"}) {
        if (auto t = try_layer(item.dir, name)) pred[name] = std::move(*t);
      }
      std::map<std::string, Tensor> gt;
      std::optional<Tensor> input;
      std::optional<Tensor> mask;
      if (corpus_gt) {
        if (item.gt_index >= static_cast<int>(corpus.images.size())) {
          throw ConfigError("eval: corpus index " + std::to_string(item.gt_index) +
                            " is out of range");
        }
        gt = corpus.layers[item.gt_index];
        input = corpus.images[item.gt_index];
        if (!corpus.masks.empty()) mask = corpus.masks[item.gt_index];
      } else {
        for (const char* name : {"albedo", "shading", "detail"}) {
          if (auto t = try_layer(gt_dir, name)) gt[name] = std::move(*t);
        }
        for (const char* stem : {"im", "image"}) {
          fs::path p = fs::path(gt_dir) / (std::string(stem) + ".rawf");
          if (fs::exists(p)) input = io::read_rawf(p.string());
        }
        fs::path mp = fs::path(gt_dir) / "mask.png";
        if (fs::exists(mp)) mask = io::read_png(mp.string());
      }
      const Tensor* mask_ptr = use_mask && mask ? &*mask : nullptr;

      std::optional<Tensor> pred_s = shading_total(pred);
      std::optional<Tensor> gt_s = shading_total(gt);
      bool composite = pred.count("detail") > 0 || gt.count("detail") > 0;

      json row{{"name", item.name}};
      if (composite) row["shading_composite"] = true;
      auto need = [&](bool ok, const char* what) {
        if (!ok) throw ConfigError("eval: " + item.name + ": missing " + what);
      };
      if (requested("smse")) {
        need(pred_s.has_value(), "predicted shading");
        need(gt_s.has_value(), "ground-truth shading");
        row["smse"] = metrics::scaled_mse(*pred_s, *gt_s, mask_ptr);
      }
      if (requested("rmse")) {
        need(pred.count("albedo") > 0, "predicted albedo");
        need(gt.count("albedo") > 0, "ground-truth albedo");
        row["rmse"] = metrics::scaled_mse(pred["albedo"], gt["albedo"], mask_ptr);
      }
      if (requested("rsmse")) {
        need(pred_s.has_value() && pred.count("albedo") > 0, "predicted layers");
        need(gt_s.has_value() && gt.count("albedo") > 0, "ground-truth layers");
        real ls = metrics::local_scaled_mse(*pred_s, *gt_s, window, stride, mask_ptr);
        real lr = metrics::local_scaled_mse(pred["albedo"], gt["albedo"], window, stride,
                                            mask_ptr);
        row["rsmse"] = (ls + lr) / real(2);
      }
      if (requested("whdr")) {
        need(pred.count("albedo") > 0, "predicted albedo");
        if (judgments.empty()) throw ConfigError("eval: whdr needs --judgments");
        std::string jpath =
            multi ? (fs::path(judgments) / (item.name + ".json")).string() : judgments;
        metrics::JudgmentFile jf = metrics::load_judgments(jpath);
        row["whdr"] = metrics::whdr(pred["albedo"], jf, delta, tr);
      }
      if (baseline && input) {
        auto [base_albedo, base_shading] = metrics::naive_baseline(*input);
        json brow;
        if (requested("smse") && gt_s) {
          brow["smse"] = metrics::scaled_mse(base_shading, *gt_s, mask_ptr);
        }
        if (requested("rmse") && gt.count("albedo")) {
          brow["rmse"] = metrics::scaled_mse(base_albedo, gt["albedo"], mask_ptr);
        }
        if (requested("rsmse") && gt_s && gt.count("albedo")) {
          real ls = metrics::local_scaled_mse(base_shading, *gt_s, window, stride, mask_ptr);
          real lr = metrics::local_scaled_mse(base_albedo, gt["albedo"], window, stride,
                                              mask_ptr);
          brow["rsmse"] = (ls + lr) / real(2);
        }
        if (!brow.empty()) {
          row["baseline"] = brow;
          for (auto it = brow.begin(); it != brow.end(); ++it) {
            base_sums[it.key()] += it.value().get<real>();
          }
        }
      }
      for (const std::string& m : wanted) {
        if (row.contains(m)) sums[m] += row[m].get<real>();
      }
      images.push_back(row);
    }

    json mean = json::object();
    for (auto& [k, v] : sums) mean[k] = v / real(items.size());
    json base_mean = json::object();
    for (auto& [k, v] : base_sums) base_mean[k] = v / real(items.size());
    json rep{{"schema_version", 1},
             {"metrics", wanted},
             {"delta", delta},
             {"window", window},
             {"stride", stride},
             {"transfer", transfer},
             {"use_mask", use_mask},
             {"naive_baseline",
              "constant shading at the mean luminance; albedo = image / shading"},
             {"images", images},
             {"mean", mean}};
    if (!base_mean.empty()) rep["baseline_mean"] = base_mean;
    fs::path report_path(report);
    if (!report_path.parent_path().empty()) fs::create_directories(report_path.parent_path());
    write_json_file(report_path.string(), rep);
    fs::path run_dir = report_path.parent_path();
    if (run_dir.empty()) run_dir = ".";
    write_run_json(run_dir, "eval", cfg);
    std::cerr << "eval: " << items.size() << " image(s), mean " << mean.dump();
    if (!base_mean.empty()) std::cerr << ", baseline " << base_mean.dump();
    std::cerr << "\n";
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"layerforge: train layer models and decompose images into layers"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  AuthorCmd author;
  TrainCmd train;
  FitPriorCmd fit_prior;
  DecomposeCmd decompose_cmd;
  BenchCmd bench;
  EvalCmd eval;
  author.setup(app);
  train.setup(app);
  fit_prior.setup(app);
  decompose_cmd.setup(app);
  bench.setup(app);
  eval.setup(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const layerforge::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
