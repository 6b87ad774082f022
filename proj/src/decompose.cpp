#include "layerforge/decompose.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "layerforge/adam.hpp"
#include "layerforge/error.hpp"
#include "layerforge/ops.hpp"
#include "layerforge/prior.hpp"
#include "layerforge/pyramid.hpp"

namespace layerforge::decompose {

namespace {

int reflect_101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

Tensor crop_plain(const Tensor& t, int y0, int x0, int h, int w) {
  Tensor out({h, w, t.extent(2)});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < t.extent(2); ++c) out.at3(y, x, c) = t.at3(y0 + y, x0 + x, c);
  return out;
}

// Diagonal first, then symmetric pairs, so a transposed matrix sums in the
// same order and swapping correlation arguments stays bitwise neutral.
double frobenius_sym(const Tensor& m) {
  int c = m.extent(0);
  double acc = 0;
  for (int i = 0; i < c; ++i) acc += double(m.at2(i, i)) * m.at2(i, i);
  for (int i = 0; i < c; ++i)
    for (int j = i + 1; j < c; ++j) {
      acc += double(m.at2(i, j)) * m.at2(i, j) + double(m.at2(j, i)) * m.at2(j, i);
    }
  return std::sqrt(acc);
}

int max_levels(const DecompositionSpec& spec) {
  int levels = 1;
  for (const LayerSlot& slot : spec.layers) levels = std::max(levels, slot.model.arch.levels);
  return levels;
}

}  // namespace

real default_lambda_r(std::size_t layer_count) {
  return layer_count >= 3 ? real(1e4) : real(100);
}

void validate(const DecompositionSpec& spec, int image_h, int image_w) {
  if (spec.layers.size() < 2) throw ConfigError("decompose: need at least 2 layers");
  std::set<std::string> names;
  for (const LayerSlot& slot : spec.layers) {
    if (slot.name.empty()) throw ConfigError("decompose: layer names must be nonempty");
    if (!names.insert(slot.name).second) {
      throw ConfigError("decompose: duplicate layer name '" + slot.name + "'");
    }
  }
  if (spec.lambda_r < 0 || spec.lambda_p < 0 || spec.lambda_c < 0 || spec.detail_dc < 0) {
    throw ConfigError("decompose: weights must be nonnegative");
  }
  if (spec.steps < 0) throw ConfigError("decompose: steps must be nonnegative");
  if (!(spec.lr > 0)) throw ConfigError("decompose: lr must be positive");
  if (spec.corr_patch < 1) throw ConfigError("decompose: corr_patch must be positive");
  for (const LayerSlot& slot : spec.layers) {
    if (slot.model.arch.levels > 1) pyramid::check_divisible(image_h, image_w, slot.model.arch.levels);
    if (spec.lambda_p > 0 && slot.model.prior.d <= 0) {
      throw ConfigError("decompose: layer '" + slot.name + "' has no fitted code prior");
    }
  }
  if (spec.lambda_c > 0) pyramid::check_divisible(image_h, image_w, max_levels(spec));
  if (spec.detail_dc > 0) {
    bool found = false;
    for (const LayerSlot& slot : spec.layers) found = found || slot.name == "detail";
    if (!found) throw ConfigError("decompose: detail_dc set without a detail layer");
  }
}

Tensor gaussian_blur(const Tensor& image, double sigma) {
  require_rank(image, 3, "gaussian_blur");
  if (sigma <= 0) return image;
  int r = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double norm = 0;
  for (int i = -r; i <= r; ++i) {
    k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
    norm += k[static_cast<std::size_t>(i + r)];
  }
  for (double& v : k) v /= norm;
  int h = image.extent(0), w = image.extent(1), c = image.extent(2);
  Tensor tmp({h, w, c});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) {
          acc += k[static_cast<std::size_t>(i + r)] * image.at3(y, reflect_101(x + i, w), ch);
        }
        tmp.at3(y, x, ch) = static_cast<real>(acc);
      }
  Tensor out({h, w, c});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) {
          acc += k[static_cast<std::size_t>(i + r)] * tmp.at3(reflect_101(y + i, h), x, ch);
        }
        out.at3(y, x, ch) = static_cast<real>(acc);
      }
  return out;
}

Tensor patch_cov(const Tensor& a, const Tensor& b) {
  require_rank(a, 3, "patch_cov");
  require_shape(b, a.shape(), "patch_cov");
  int h = a.extent(0), w = a.extent(1), c = a.extent(2);
  double n = static_cast<double>(h) * w;
  std::vector<double> am(static_cast<std::size_t>(c)), bm(static_cast<std::size_t>(c));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        am[static_cast<std::size_t>(ch)] += a.at3(y, x, ch) / n;
        bm[static_cast<std::size_t>(ch)] += b.at3(y, x, ch) / n;
      }
  Tensor cov({c, c});
  for (int i = 0; i < c; ++i)
    for (int j = 0; j < c; ++j) {
      double acc = 0;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          acc += (a.at3(y, x, i) - am[static_cast<std::size_t>(i)]) *
                 (b.at3(y, x, j) - bm[static_cast<std::size_t>(j)]);
        }
      cov.at2(i, j) = static_cast<real>(acc / n);
    }
  return cov;
}

real correlation(const Tensor& a, const Tensor& b, int levels, int patch) {
  require_rank(a, 3, "correlation");
  require_shape(b, a.shape(), "correlation");
  if (levels < 1 || patch < 1) throw ConfigError("correlation: bad levels or patch");
  pyramid::LaplacianPyramid pa = pyramid::build_pyramid(a, levels);
  pyramid::LaplacianPyramid pb = pyramid::build_pyramid(b, levels);
  double acc = 0;
  long count = 0;
  for (int l = 0; l < levels; ++l) {
    const Tensor& la = pa.levels[static_cast<std::size_t>(l)];
    const Tensor& lb = pb.levels[static_cast<std::size_t>(l)];
    for (int y0 = 0; y0 + patch <= la.extent(0); y0 += patch)
      for (int x0 = 0; x0 + patch <= la.extent(1); x0 += patch) {
        acc += frobenius_sym(patch_cov(crop_plain(la, y0, x0, patch, patch),
                                       crop_plain(lb, y0, x0, patch, patch)));
        ++count;
      }
  }
  if (count == 0) throw ConfigError("correlation: no full patch at any level");
  return static_cast<real>(acc / static_cast<double>(count));
}

Var correlation(Graph& g, Var a, Var b, int levels, int patch) {
  if (levels < 1 || patch < 1) throw ConfigError("correlation: bad levels or patch");
  {
    int ah = g.value(a).extent(0), aw = g.value(a).extent(1), ac = g.value(a).extent(2);
    int bh = g.value(b).extent(0), bw = g.value(b).extent(1), bc = g.value(b).extent(2);
    if (ah != bh || aw != bw || ac != bc) throw DimensionError("correlation: layer shapes differ");
  }
  std::vector<Var> pa = pyramid::build_pyramid(a, levels);
  std::vector<Var> pb = pyramid::build_pyramid(b, levels);
  std::vector<Var> level_sums;
  long count = 0;
  for (int l = 0; l < levels; ++l) {
    int lh = g.value(pa[static_cast<std::size_t>(l)]).extent(0);
    int lw = g.value(pa[static_cast<std::size_t>(l)]).extent(1);
    int c = g.value(pa[static_cast<std::size_t>(l)]).extent(2);
    int hp = lh - lh % patch, wp = lw - lw % patch;
    if (hp < patch || wp < patch) continue;
    Var la = pa[static_cast<std::size_t>(l)];
    Var lb = pb[static_cast<std::size_t>(l)];
    if (hp != lh || wp != lw) {
      la = crop2d(la, 0, 0, hp, wp);
      lb = crop2d(lb, 0, 0, hp, wp);
    }
    std::vector<Var> as, bs, ea, eb;
    for (int i = 0; i < c; ++i) {
      as.push_back(slice_ch(la, i, i + 1));
      bs.push_back(slice_ch(lb, i, i + 1));
      ea.push_back(avg_pool(as.back(), patch));
      eb.push_back(avg_pool(bs.back(), patch));
    }
    // cov per patch via E[ab] - E[a]E[b]; Frobenius norm over channel pairs,
    // diagonal first then symmetric pairs so the sum survives transposition.
    auto cov = [&](int i, int j) {
      Var eab = avg_pool(mul(as[static_cast<std::size_t>(i)], bs[static_cast<std::size_t>(j)]),
                         patch);
      return sub(eab, mul(ea[static_cast<std::size_t>(i)], eb[static_cast<std::size_t>(j)]));
    };
    std::vector<Var> sq;
    for (int i = 0; i < c; ++i) sq.push_back(square(cov(i, i)));
    for (int i = 0; i < c; ++i)
      for (int j = i + 1; j < c; ++j) sq.push_back(add(square(cov(i, j)), square(cov(j, i))));
    level_sums.push_back(sum(sqrt_safe(add_n(sq))));
    count += static_cast<long>(hp / patch) * (wp / patch);
  }
  if (count == 0) throw ConfigError("correlation: no full patch at any level");
  return affine(add_n(level_sums), real(1) / static_cast<real>(count), 0);
}

ObjectiveTerms build_objective(Graph& g, const DecompositionSpec& spec,
                               const std::vector<std::vector<Var>>& codes,
                               const Tensor& log_image) {
  require_rank(log_image, 3, "objective image");
  if (codes.size() != spec.layers.size()) {
    throw DimensionError("objective: need one code list per layer");
  }
  int h = log_image.extent(0), w = log_image.extent(1);
  Var x = g.constant(log_image);

  std::vector<Var> decoded, coarsest;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const vae::LayerModel& model = spec.layers[i].model;
    std::map<std::string, Var> pv = vae::param_vars(g, model, false);
    int levels = model.arch.levels;
    if (static_cast<int>(codes[i].size()) != levels) {
      throw DimensionError("objective: layer '" + spec.layers[i].name + "' expects " +
                           std::to_string(levels) + " code fields");
    }
    if (levels > 1) {
      std::vector<Var> decs;
      for (int l = 0; l < levels; ++l) {
        decs.push_back(vae::build_decoder(g, model.arch, pv, l, codes[i][static_cast<std::size_t>(l)],
                                          h >> l, w >> l));
      }
      coarsest.push_back(decs.back());
      decoded.push_back(pyramid::reconstruct(decs));
    } else {
      Var d = vae::build_decoder(g, model.arch, pv, 0, codes[i][0], h, w);
      coarsest.push_back(d);
      decoded.push_back(d);
    }
  }

  Var zero = g.constant(Tensor({1}));
  Var residual = affine(mean(square(sub(add_n(decoded), x))), spec.lambda_r, 0);

  Var nll = zero;
  if (spec.lambda_p != 0) {
    std::vector<Var> per_layer;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
      per_layer.push_back(prior::code_nll(g, spec.layers[i].model.prior, codes[i]));
    }
    real weight = spec.negate_prior ? -spec.lambda_p : spec.lambda_p;
    nll = affine(add_n(per_layer), weight, 0);
  }

  Var corr = zero;
  if (spec.lambda_c != 0 && decoded.size() >= 2) {
    int corr_levels = max_levels(spec);
    std::vector<Var> pairs;
    for (std::size_t i = 0; i < decoded.size(); ++i)
      for (std::size_t j = i + 1; j < decoded.size(); ++j) {
        pairs.push_back(correlation(g, decoded[i], decoded[j], corr_levels, spec.corr_patch));
      }
    corr = affine(add_n(pairs), spec.lambda_c, 0);
  }

  Var dc = zero;
  if (spec.detail_dc != 0) {
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
      if (spec.layers[i].name != "detail") continue;
      // variance of the coarsest decoded level, via E[x^2] - E[x]^2
      Var v = sub(mean(square(coarsest[i])), square(mean(coarsest[i])));
      dc = affine(v, spec.detail_dc, 0);
      break;
    }
  }

  ObjectiveTerms terms;
  terms.total = add_n({residual, nll, corr, dc});
  terms.residual = residual;
  terms.code_nll = nll;
  terms.correlation = corr;
  terms.detail_dc = dc;
  terms.decoded = std::move(decoded);
  if (!std::isfinite(static_cast<double>(g.value(terms.total)[0]))) {
    throw NumericError("objective diverged: residual=" + std::to_string(g.value(terms.residual)[0]) +
                       " code_nll=" + std::to_string(g.value(terms.code_nll)[0]) +
                       " correlation=" + std::to_string(g.value(terms.correlation)[0]) +
                       " detail_dc=" + std::to_string(g.value(terms.detail_dc)[0]));
  }
  return terms;
}

std::vector<Tensor> initial_log_layers(const DecompositionSpec& spec, const Tensor& log_image) {
  require_rank(log_image, 3, "initialize");
  int h = log_image.extent(0), w = log_image.extent(1);
  // 8 px at a 128-wide image, scaled with size
  double sigma = 8.0 * std::min(h, w) / 128.0;
  Tensor blurred;
  bool have_blur = false;
  auto smoothed = [&]() -> const Tensor& {
    if (!have_blur) {
      blurred = gaussian_blur(log_image, sigma);
      have_blur = true;
    }
    return blurred;
  };
  std::vector<Tensor> inits;
  for (const LayerSlot& slot : spec.layers) {
    if (slot.name == "shading") {
      inits.push_back(spec.init == InitMode::smoothed_split ? smoothed() : log_image);
    } else if (slot.name == "albedo") {
      inits.push_back(spec.init == InitMode::smoothed_split ? sub(log_image, smoothed())
                                                            : Tensor(log_image.shape()));
    } else if (slot.name == "detail") {
      inits.push_back(Tensor(log_image.shape()));
    } else {
      throw ConfigError("initialize: no starting heuristic for layer '" + slot.name + "'");
    }
  }
  return inits;
}

std::vector<std::vector<Tensor>> initialize(const DecompositionSpec& spec,
                                            const Tensor& log_image) {
  std::vector<Tensor> inits = initial_log_layers(spec, log_image);
  std::vector<std::vector<Tensor>> codes(inits.size());
  for (std::size_t i = 0; i < inits.size(); ++i) {
    for (vae::CodeField& field : vae::encode(spec.layers[i].model, inits[i])) {
      codes[i].push_back(std::move(field.mean));
    }
  }
  return codes;
}

namespace {

DecompositionResult run(const DecompositionSpec& spec, const Tensor& log_image,
                        std::vector<std::vector<Tensor>> codes) {
  auto t0 = std::chrono::steady_clock::now();
  int h = log_image.extent(0), w = log_image.extent(1);
  validate(spec, h, w);

  std::vector<std::vector<AdamState>> adam(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) adam[i].resize(codes[i].size());

  DecompositionResult out;
  real best_total = std::numeric_limits<real>::infinity();
  std::vector<std::vector<Tensor>> best = codes;
  for (long t = 0;; ++t) {
    Graph g;
    std::vector<std::vector<Var>> vars(codes.size());
    for (std::size_t i = 0; i < codes.size(); ++i) {
      for (const Tensor& c : codes[i]) vars[i].push_back(g.param(c));
    }
    ObjectiveTerms terms;
    try {
      terms = build_objective(g, spec, vars, log_image);
    } catch (const NumericError&) {
      break;
    }
    TraceRow row;
    row.total = g.value(terms.total)[0];
    row.residual = g.value(terms.residual)[0];
    row.code_nll = g.value(terms.code_nll)[0];
    row.correlation = g.value(terms.correlation)[0];
    row.detail_dc = g.value(terms.detail_dc)[0];
    out.trace.push_back(row);
    if (row.total < best_total) {
      best_total = row.total;
      best = codes;
      out.best_step = t;
    }
    if (t == spec.steps) {
      out.converged = true;
      break;
    }
    g.backward(terms.total);
    bool finite = true;
    for (std::size_t i = 0; i < codes.size(); ++i) {
      for (const Var& v : vars[i]) finite = finite && all_finite(g.grad(v));
    }
    if (!finite) break;
    for (std::size_t i = 0; i < codes.size(); ++i) {
      for (std::size_t l = 0; l < codes[i].size(); ++l) {
        adam_step(codes[i][l], g.grad(vars[i][l]), adam[i][l], spec.lr);
      }
    }
  }

  out.codes = std::move(best);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    out.names.push_back(spec.layers[i].name);
    out.log_layers.push_back(vae::decode(spec.layers[i].model, out.codes[i], h, w));
  }
  if (spec.exact_sum) {
    // The smooth layer absorbs whatever the codes cannot express.
    std::size_t target = 0;
    for (std::size_t i = 0; i < out.names.size(); ++i) {
      if (out.names[i] == "shading") target = i;
    }
    Tensor delta = log_image;
    for (const Tensor& layer : out.log_layers) delta = sub(delta, layer);
    out.log_layers[target] = add(out.log_layers[target], delta);
  }
  for (const Tensor& layer : out.log_layers) out.linear_layers.push_back(to_linear_domain(layer));
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace

DecompositionResult optimize(const DecompositionSpec& spec, const Tensor& image) {
  Tensor log_image = to_log_domain(image);
  return run(spec, log_image, initialize(spec, log_image));
}

DecompositionResult optimize(const DecompositionSpec& spec, const Tensor& image,
                             const std::vector<std::vector<Tensor>>& init_codes) {
  return run(spec, to_log_domain(image), init_codes);
}

}  // namespace layerforge::decompose
