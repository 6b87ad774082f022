#include "layerforge/vae.hpp"

#include <cmath>
#include <utility>

#include "layerforge/authoring.hpp"
#include "layerforge/error.hpp"
#include "layerforge/kernels.hpp"
#include "layerforge/ops.hpp"
#include "layerforge/prior.hpp"
#include "layerforge/pyramid.hpp"
#include "layerforge/rng.hpp"

namespace layerforge::vae {

namespace {

StageSpec conv_same(int k, int stride, int width) {
  return {StageSpec::Op::conv_same, k, stride, width};
}
StageSpec conv_valid(int k, int width) { return {StageSpec::Op::conv_valid, k, 1, width}; }
StageSpec fc(int width) { return {StageSpec::Op::fc, 0, 1, width}; }

}  // namespace

ArchSpec preset(const std::string& name) {
  ArchSpec a;
  a.name = name;
  if (name == "vae1") {
    a.kind = ArchKind::fc;
    a.patch = 64;
    a.code_dims = 32;
    a.stages = {conv_same(5, 2, 64), conv_same(5, 2, 128), conv_same(3, 1, 128), fc(128)};
  } else if (name == "vae2") {
    a.kind = ArchKind::fc;
    a.patch = 64;
    a.code_dims = 832;
    a.stages = {conv_same(5, 2, 64), conv_same(5, 2, 128), conv_same(3, 1, 128), fc(4096)};
  } else if (name == "cvae") {
    a.kind = ArchKind::conv;
    a.patch = 64;
    a.code_channels = 8;
    a.stages = {conv_same(5, 2, 64), conv_same(5, 2, 128), conv_same(3, 1, 128),
                conv_valid(4, 20)};
  } else if (name == "lcvae") {
    a.kind = ArchKind::laplacian_conv;
    a.patch = 64;
    a.levels = 3;
    a.code_channels = 4;
    a.stages = {conv_same(5, 2, 64), conv_same(5, 2, 64), conv_same(3, 1, 64), conv_valid(4, 16)};
  } else if (name == "authored" || name == "paper") {
    a.name = "authored";
    a.kind = ArchKind::laplacian_conv;
    a.patch = 128;
    a.levels = 4;
    a.code_channels = 4;
    a.stages = {conv_same(5, 2, 64), conv_same(5, 2, 64), conv_same(3, 1, 64), conv_valid(4, 64)};
  } else if (name == "desk-vae1") {
    a.kind = ArchKind::fc;
    a.patch = 32;
    a.code_dims = 16;
    a.stages = {conv_same(5, 2, 32), conv_same(3, 1, 32), fc(64)};
  } else if (name == "desk-vae2") {
    a.kind = ArchKind::fc;
    a.patch = 32;
    a.code_dims = 1352;  // matches the desk conv code dimensionality (13*13*8)
    a.stages = {conv_same(5, 2, 32), conv_same(3, 1, 32), fc(512)};
  } else if (name == "desk-cvae") {
    a.kind = ArchKind::conv;
    a.patch = 32;
    a.code_channels = 8;
    a.stages = {conv_same(5, 2, 32), conv_same(3, 1, 32), conv_valid(4, 16)};
  } else if (name == "desk-lcvae" || name == "desk") {
    a.name = "desk-lcvae";
    a.kind = ArchKind::laplacian_conv;
    a.patch = 32;
    a.levels = 3;
    a.code_channels = 4;
    a.stages = {conv_same(5, 2, 32), conv_same(3, 1, 32), conv_valid(4, 16)};
  } else {
    throw ConfigError("unknown architecture preset: " + name);
  }
  return a;
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {
      "vae1",      "vae2",      "cvae",      "lcvae",      "authored",
      "desk-vae1", "desk-vae2", "desk-cvae", "desk-lcvae",
  };
  return names;
}

namespace {

struct StageIo {
  int in_h = 0, in_w = 0, in_c = 0;
  int out_h = 0, out_w = 0, out_c = 0;
  bool is_fc = false;
};

Pad pad_of(const StageSpec& st) {
  return st.op == StageSpec::Op::conv_same ? Pad::same : Pad::valid;
}

std::vector<StageIo> encoder_chain(const ArchSpec& arch, int h, int w) {
  int c = 3;
  std::vector<StageIo> chain;
  for (const StageSpec& st : arch.stages) {
    StageIo io;
    if (st.op == StageSpec::Op::fc) {
      io.is_fc = true;
      io.in_h = 1;
      io.in_w = 1;
      io.in_c = h * w * c;
      io.out_h = 1;
      io.out_w = 1;
      io.out_c = st.width;
      h = 1;
      w = 1;
    } else {
      ConvGeom geom = conv_geometry({h, w, c}, {st.k, st.k, c, st.width}, st.stride, pad_of(st));
      io.in_h = h;
      io.in_w = w;
      io.in_c = c;
      io.out_h = geom.out_h;
      io.out_w = geom.out_w;
      io.out_c = st.width;
      h = geom.out_h;
      w = geom.out_w;
    }
    c = st.width;
    chain.push_back(io);
  }
  return chain;
}

int level_extent(int full, int level) { return full >> level; }

std::array<int, 3> code_shape(const ArchSpec& arch, const std::vector<StageIo>& chain) {
  if (arch.kind == ArchKind::fc) return {1, 1, arch.code_dims};
  return {chain.back().out_h, chain.back().out_w, arch.code_channels};
}

std::string enc_name(int level, const std::string& tail) {
  return "enc.l" + std::to_string(level) + "." + tail;
}
std::string dec_name(int level, const std::string& tail) {
  return "dec.l" + std::to_string(level) + "." + tail;
}

void validate_arch(const ArchSpec& arch) {
  if (arch.stages.empty()) throw ConfigError("arch has no stages");
  if (arch.levels < 1) throw ConfigError("arch levels must be >= 1");
  if (arch.kind != ArchKind::laplacian_conv && arch.levels != 1) {
    throw ConfigError("non-Laplacian arch must have a single level");
  }
  if (arch.kind == ArchKind::fc) {
    if (arch.code_dims < 1) throw ConfigError("fc arch needs code_dims");
  } else if (arch.code_channels < 1) {
    throw ConfigError("conv arch needs code_channels");
  }
  if (arch.stages.front().op == StageSpec::Op::fc) {
    throw ConfigError("first stage must be a convolution");
  }
  for (std::size_t i = 1; i < arch.stages.size(); ++i) {
    if (arch.stages[i - 1].op == StageSpec::Op::fc &&
        arch.stages[i].op != StageSpec::Op::fc) {
      throw ConfigError("convolutions cannot follow fc stages");
    }
  }
  if (arch.kind != ArchKind::fc) {
    for (const StageSpec& st : arch.stages) {
      if (st.op == StageSpec::Op::fc) throw ConfigError("conv arch cannot contain fc stages");
    }
  }
}

}  // namespace

std::vector<ParamDef> param_defs(const ArchSpec& arch) {
  validate_arch(arch);
  std::vector<ParamDef> defs;
  auto push = [&](std::string name, std::vector<int> shape, int fan_in) {
    defs.push_back({std::move(name), std::move(shape), fan_in});
  };
  for (int l = 0; l < arch.levels; ++l) {
    int size = level_extent(arch.patch, l);
    auto chain = encoder_chain(arch, size, size);
    int n = static_cast<int>(arch.stages.size());
    for (int i = 0; i < n; ++i) {
      const StageSpec& st = arch.stages[i];
      const StageIo& io = chain[static_cast<std::size_t>(i)];
      std::string base = enc_name(l, "s" + std::to_string(i));
      if (st.op == StageSpec::Op::fc) {
        push(base + ".w", {io.in_c, st.width}, io.in_c);
      } else {
        push(base + ".w", {st.k, st.k, io.in_c, st.width}, st.k * st.k * io.in_c);
      }
      push(base + ".b", {st.width}, 0);
    }
    const StageIo& last = chain.back();
    if (arch.kind == ArchKind::fc) {
      push(enc_name(l, "head.w"), {last.out_c, 2 * arch.code_dims}, last.out_c);
      push(enc_name(l, "head.b"), {2 * arch.code_dims}, 0);
      push(dec_name(l, "s0.w"), {arch.code_dims, last.out_c}, arch.code_dims);
      push(dec_name(l, "s0.b"), {last.out_c}, 0);
    } else {
      push(enc_name(l, "head.w"), {1, 1, last.out_c, 2 * arch.code_channels}, last.out_c);
      push(enc_name(l, "head.b"), {2 * arch.code_channels}, 0);
      push(dec_name(l, "s0.w"), {1, 1, arch.code_channels, last.out_c}, arch.code_channels);
      push(dec_name(l, "s0.b"), {last.out_c}, 0);
    }
    int j = 0;
    for (int i = n - 1; i >= 0; --i) {
      const StageSpec& st = arch.stages[static_cast<std::size_t>(i)];
      const StageIo& io = chain[static_cast<std::size_t>(i)];
      std::string base = dec_name(l, "s" + std::to_string(++j));
      if (st.op == StageSpec::Op::fc) {
        push(base + ".w", {io.out_c, io.in_c}, io.out_c);
      } else {
        // transposed convolution: maps out_c back to in_c with the forward
        // kernel layout, so the fan-in per output is k*k*out_c
        push(base + ".w", {st.k, st.k, io.in_c, io.out_c}, st.k * st.k * io.out_c);
      }
      push(base + ".b", {io.in_c}, 0);
    }
  }
  return defs;
}

std::size_t param_count(const ArchSpec& arch) {
  std::size_t total = 0;
  for (const ParamDef& def : param_defs(arch)) total += shape_size(def.shape);
  return total;
}

LayerModel init_model(const ArchSpec& arch, std::uint64_t seed) {
  LayerModel model;
  model.arch = arch;
  model.seed = seed;
  std::uint64_t index = 0;
  for (const ParamDef& def : param_defs(arch)) {
    Tensor t(def.shape);
    if (def.fan_in > 0) {
      real limit = static_cast<real>(std::sqrt(3.0 / def.fan_in));
      Rng rng(mix_seed(seed, RngStream::weight_init, index));
      rng.fill_uniform(t, -limit, limit);
    }
    model.params.emplace(def.name, std::move(t));
    ++index;
  }
  return model;
}

std::vector<std::vector<std::array<int, 3>>> shape_table(const ArchSpec& arch, int input) {
  validate_arch(arch);
  std::vector<std::vector<std::array<int, 3>>> table;
  for (int l = 0; l < arch.levels; ++l) {
    int size = level_extent(input, l);
    auto chain = encoder_chain(arch, size, size);
    std::vector<std::array<int, 3>> rows;
    rows.push_back({size, size, 3});
    for (const StageIo& io : chain) rows.push_back({io.out_h, io.out_w, io.out_c});
    rows.push_back(code_shape(arch, chain));
    table.push_back(std::move(rows));
  }
  return table;
}

real kl_weight(std::int64_t t, real kl_base) {
  double x = 0.02 * static_cast<double>(t) - 0.5;
  return static_cast<real>(kl_base / (1.0 + std::exp(-x)));
}

std::map<std::string, Var> param_vars(Graph& g, const LayerModel& model, bool trainable) {
  std::map<std::string, Var> pv;
  for (const ParamDef& def : param_defs(model.arch)) {
    auto it = model.params.find(def.name);
    if (it == model.params.end()) throw ConfigError("model is missing parameter " + def.name);
    require_shape(it->second, def.shape, "param_vars");
    pv.emplace(def.name, trainable ? g.param(it->second) : g.constant(it->second));
  }
  return pv;
}

std::pair<Var, Var> build_encoder(Graph& g, const ArchSpec& arch,
                                  const std::map<std::string, Var>& pv, int level, Var x) {
  const Tensor& xin = g.value(x);
  require_rank(xin, 3, "build_encoder");
  auto chain = encoder_chain(arch, xin.extent(0), xin.extent(1));
  Var h = x;
  for (std::size_t i = 0; i < arch.stages.size(); ++i) {
    const StageSpec& st = arch.stages[i];
    Var w = pv.at(enc_name(level, "s" + std::to_string(i) + ".w"));
    Var b = pv.at(enc_name(level, "s" + std::to_string(i) + ".b"));
    if (st.op == StageSpec::Op::fc) {
      h = dense(h, w, b);
    } else {
      h = add_bias(conv2d(h, w, st.stride, pad_of(st)), b);
    }
    h = leaky_relu(h, real(0.2));
  }
  Var hw = pv.at(enc_name(level, "head.w"));
  Var hb = pv.at(enc_name(level, "head.b"));
  if (arch.kind == ArchKind::fc) {
    Var code2 = reshape(dense(h, hw, hb), {1, 1, 2 * arch.code_dims});
    return {slice_ch(code2, 0, arch.code_dims), slice_ch(code2, arch.code_dims, 2 * arch.code_dims)};
  }
  Var code2 = add_bias(conv2d(h, hw, 1, Pad::same), hb);
  int cc = arch.code_channels;
  return {slice_ch(code2, 0, cc), slice_ch(code2, cc, 2 * cc)};
}

Var build_decoder(Graph& g, const ArchSpec& arch, const std::map<std::string, Var>& pv, int level,
                  Var z, int out_h, int out_w) {
  auto chain = encoder_chain(arch, out_h, out_w);
  std::array<int, 3> want = code_shape(arch, chain);
  const Tensor& zt = g.value(z);
  require_shape(zt, {want[0], want[1], want[2]}, "build_decoder");
  int n = static_cast<int>(arch.stages.size());
  Var h = z;
  {
    Var w = pv.at(dec_name(level, "s0.w"));
    Var b = pv.at(dec_name(level, "s0.b"));
    h = arch.kind == ArchKind::fc ? dense(h, w, b) : add_bias(conv2d(h, w, 1, Pad::same), b);
    h = leaky_relu(h, real(0.2));
  }
  int j = 0;
  for (int i = n - 1; i >= 0; --i) {
    const StageSpec& st = arch.stages[static_cast<std::size_t>(i)];
    const StageIo& io = chain[static_cast<std::size_t>(i)];
    Var w = pv.at(dec_name(level, "s" + std::to_string(++j) + ".w"));
    Var b = pv.at(dec_name(level, "s" + std::to_string(j) + ".b"));
    if (st.op == StageSpec::Op::fc) {
      h = dense(h, w, b);
      const StageIo& prev = chain[static_cast<std::size_t>(i - 1)];
      if (i > 0 && !prev.is_fc) h = reshape(h, {prev.out_h, prev.out_w, prev.out_c});
    } else {
      h = add_bias(conv2d_transpose(h, w, st.stride, pad_of(st), io.in_h, io.in_w), b);
    }
    if (i > 0) h = leaky_relu(h, real(0.2));
  }
  return h;
}

ElboTerms build_elbo(Graph& g, const ArchSpec& arch, const std::map<std::string, Var>& pv,
                     const Tensor& log_image, std::int64_t t, std::uint64_t eps_seed,
                     const TrainConfig& cfg) {
  require_rank(log_image, 3, "build_elbo");
  Var x = g.constant(log_image);
  std::vector<Var> levels;
  if (arch.kind == ArchKind::laplacian_conv) {
    levels = pyramid::build_pyramid(x, arch.levels);
  } else {
    levels = {x};
  }
  std::vector<Var> residuals, kl_sums, recons;
  std::size_t latent_count = 0;
  for (int l = 0; l < arch.levels; ++l) {
    Var lvl = levels[static_cast<std::size_t>(l)];
    auto [mu, logvar] = build_encoder(g, arch, pv, l, lvl);
    const Tensor& mu_t = g.value(mu);
    latent_count += mu_t.size();
    Tensor eps(mu_t.shape());
    Rng rng(mix_seed(eps_seed, RngStream::reparam, static_cast<std::uint64_t>(l)));
    rng.fill_normal(eps);
    Var zsample = add(mu, mul(exp_(affine(logvar, real(0.5), real(0))), g.constant(eps)));
    const Tensor& lt = g.value(lvl);
    Var recon = build_decoder(g, arch, pv, l, zsample, lt.extent(0), lt.extent(1));
    residuals.push_back(mean(square(sub(recon, lvl))));
    // -1/2 sum(1 + logvar - mu^2 - exp(logvar))
    Var inner = sub(sub(affine(logvar, real(1), real(1)), square(mu)), exp_(logvar));
    kl_sums.push_back(affine(sum(inner), real(-0.5), real(0)));
    recons.push_back(recon);
  }
  ElboTerms terms;
  terms.residual = residuals.size() == 1 ? residuals[0] : add_n(residuals);
  Var kl_total = kl_sums.size() == 1 ? kl_sums[0] : add_n(kl_sums);
  terms.kl = affine(kl_total, static_cast<real>(1.0 / static_cast<double>(latent_count)), real(0));
  Var recon_image =
      arch.kind == ArchKind::laplacian_conv ? pyramid::reconstruct(recons) : recons[0];
  terms.image_prior = prior::image_l1_gradient(recon_image);
  terms.total = add_n({affine(terms.residual, cfg.residual_weight, real(0)),
                       affine(terms.kl, kl_weight(t, cfg.kl_base), real(0)),
                       affine(terms.image_prior, cfg.image_prior_weight, real(0))});
  return terms;
}

std::vector<CodeField> encode(const LayerModel& model, const Tensor& log_image) {
  const ArchSpec& arch = model.arch;
  require_rank(log_image, 3, "encode");
  Graph g;
  auto pv = param_vars(g, model, false);
  Var x = g.constant(log_image);
  std::vector<Var> levels;
  if (arch.kind == ArchKind::laplacian_conv) {
    levels = pyramid::build_pyramid(x, arch.levels);
  } else {
    levels = {x};
  }
  std::vector<CodeField> fields;
  for (int l = 0; l < arch.levels; ++l) {
    auto [mu, logvar] = build_encoder(g, arch, pv, l, levels[static_cast<std::size_t>(l)]);
    CodeField f{g.value(mu), g.value(logvar)};
    require_finite(f.mean, "encode mean");
    require_finite(f.log_variance, "encode log_variance");
    fields.push_back(std::move(f));
  }
  return fields;
}

Tensor decode(const LayerModel& model, const std::vector<Tensor>& code_means, int out_h,
              int out_w) {
  const ArchSpec& arch = model.arch;
  if (static_cast<int>(code_means.size()) != arch.levels) {
    throw DimensionError("decode: expected one code field per level");
  }
  Graph g;
  auto pv = param_vars(g, model, false);
  if (arch.kind == ArchKind::laplacian_conv) {
    pyramid::check_divisible(out_h, out_w, arch.levels);
    std::vector<Var> recons;
    for (int l = 0; l < arch.levels; ++l) {
      recons.push_back(build_decoder(g, arch, pv, l,
                                     g.constant(code_means[static_cast<std::size_t>(l)]),
                                     level_extent(out_h, l), level_extent(out_w, l)));
    }
    return g.value(pyramid::reconstruct(recons));
  }
  return g.value(build_decoder(g, arch, pv, 0, g.constant(code_means[0]), out_h, out_w));
}

Tensor decode(const LayerModel& model, const std::vector<Tensor>& code_means) {
  const ArchSpec& arch = model.arch;
  if (code_means.empty()) throw DimensionError("decode: no code fields");
  if (arch.kind == ArchKind::fc) return decode(model, code_means, arch.patch, arch.patch);
  require_rank(code_means[0], 3, "decode");
  int h = code_means[0].extent(0), w = code_means[0].extent(1);
  for (auto it = arch.stages.rbegin(); it != arch.stages.rend(); ++it) {
    if (it->op == StageSpec::Op::conv_valid) {
      h += it->k - 1;
      w += it->k - 1;
    } else {
      h *= it->stride;
      w *= it->stride;
    }
  }
  return decode(model, code_means, h, w);
}

Tensor reconstruct_patch(const LayerModel& model, const Tensor& log_image, real* l2_error) {
  auto fields = encode(model, log_image);
  std::vector<Tensor> means;
  for (auto& f : fields) means.push_back(std::move(f.mean));
  Tensor recon = decode(model, means, log_image.extent(0), log_image.extent(1));
  if (l2_error != nullptr) {
    Tensor diff = sub(recon, log_image);
    *l2_error = static_cast<real>(dot(diff, diff) / static_cast<double>(diff.size()));
  }
  return recon;
}

TrainState init_training(const ArchSpec& arch, const TrainConfig& cfg) {
  TrainState st;
  st.model = init_model(arch, cfg.seed);
  st.config = cfg;
  return st;
}

void train_epochs(TrainState& st, const std::vector<Tensor>& images,
                  const std::vector<Tensor>& masks, int epochs) {
  const ArchSpec& arch = st.model.arch;
  const TrainConfig& cfg = st.config;
  if (images.empty()) throw ConfigError("train: empty dataset");
  if (!masks.empty() && masks.size() != images.size()) {
    throw ConfigError("train: mask count does not match image count");
  }
  int patch = cfg.patch > 0 ? cfg.patch : arch.patch;
  int n = static_cast<int>(images.size());
  int batch = std::max(1, cfg.batch);
  int steps_per_epoch = (n + batch - 1) / batch;
  auto defs = param_defs(arch);
  for (int e = 0; e < epochs; ++e) {
    for (int s = 0; s < steps_per_epoch; ++s) {
      std::int64_t t = st.model.iteration;
      Graph g;
      auto pv = param_vars(g, st.model, true);
      std::vector<Var> totals;
      for (int j = 0; j < batch; ++j) {
        std::uint64_t draw = static_cast<std::uint64_t>(t) * static_cast<std::uint64_t>(batch) +
                             static_cast<std::uint64_t>(j);
        int idx = Rng(mix_seed(cfg.seed, RngStream::data_order, draw)).uniform_int(n);
        const Tensor& image = images[static_cast<std::size_t>(idx)];
        std::uint64_t crop_seed = mix_seed(cfg.seed, RngStream::crop, draw);
        Tensor crop = masks.empty()
                          ? authoring::crop_augment(image, patch, crop_seed)
                          : authoring::crop_augment(image, masks[static_cast<std::size_t>(idx)],
                                                    patch, crop_seed);
        std::uint64_t eps_seed = mix_seed(cfg.seed, RngStream::reparam, draw);
        ElboTerms terms = build_elbo(g, arch, pv, to_log_domain(crop), t, eps_seed, cfg);
        totals.push_back(terms.total);
      }
      Var loss = affine(totals.size() == 1 ? totals[0] : add_n(totals),
                        static_cast<real>(1.0 / totals.size()), real(0));
      g.backward(loss);
      real loss_value = g.value(loss).data()[0];
      if (!std::isfinite(static_cast<double>(loss_value))) {
        throw NumericError("training diverged at iteration " + std::to_string(t) +
                           "; parameters hold the last finite state");
      }
      for (const ParamDef& def : defs) {
        if (!all_finite(g.grad(pv.at(def.name)))) {
          throw NumericError("non-finite gradient for " + def.name + " at iteration " +
                             std::to_string(t) + "; parameters hold the last finite state");
        }
      }
      double lr = lr_schedule(cfg.lr0, t, cfg.decay, cfg.decay_every);
      for (const ParamDef& def : defs) {
        adam_step(st.model.params.at(def.name), g.grad(pv.at(def.name)), st.adam[def.name], lr);
      }
      st.loss_history.push_back(loss_value);
      ++st.model.iteration;
    }
  }
}

}  // namespace layerforge::vae
