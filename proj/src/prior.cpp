#include "layerforge/prior.hpp"

#include <array>
#include <cmath>

#include "layerforge/error.hpp"
#include "layerforge/kernels.hpp"
#include "layerforge/ops.hpp"

namespace layerforge::prior {

namespace {

constexpr double kTwoPi = 6.28318530717958647692;

// (h0, w0) of the largest field; validates ranks.
std::pair<int, int> target_extent(const std::vector<const Tensor*>& fields) {
  if (fields.empty()) throw ConfigError("code concatenation: no levels");
  int h0 = 0, w0 = 0;
  for (const Tensor* f : fields) {
    require_rank(*f, 3, "code concatenation");
    h0 = std::max(h0, f->extent(0));
    w0 = std::max(w0, f->extent(1));
  }
  return {h0, w0};
}

Tensor concat_code_fields(const std::vector<Tensor>& fields) {
  std::vector<const Tensor*> ptrs;
  for (const Tensor& f : fields) ptrs.push_back(&f);
  auto [h0, w0] = target_extent(ptrs);
  int d = 0;
  std::vector<Tensor> up;
  for (const Tensor& f : fields) {
    up.push_back(f.extent(0) == h0 && f.extent(1) == w0 ? f
                                                        : kernels::upsample_nearest(f, h0, w0));
    d += f.extent(2);
  }
  Tensor out({h0, w0, d});
  for (int y = 0; y < h0; ++y)
    for (int x = 0; x < w0; ++x) {
      int c0 = 0;
      for (const Tensor& f : up) {
        for (int c = 0; c < f.extent(2); ++c) out.at3(y, x, c0 + c) = f.at3(y, x, c);
        c0 += f.extent(2);
      }
    }
  return out;
}

}  // namespace

Tensor collect_codes(const LayerModel& model, const std::vector<Tensor>& linear_images) {
  if (linear_images.empty()) throw ConfigError("collect_codes: empty corpus");
  std::vector<Tensor> rows;
  int d = -1;
  std::size_t total = 0;
  for (const Tensor& image : linear_images) {
    auto fields = vae::encode(model, to_log_domain(image));
    std::vector<Tensor> means;
    for (const auto& f : fields) means.push_back(f.mean);
    Tensor cat = concat_code_fields(means);
    if (d < 0) d = cat.extent(2);
    if (cat.extent(2) != d) throw DimensionError("collect_codes: code width changed mid-corpus");
    total += static_cast<std::size_t>(cat.extent(0)) * cat.extent(1);
    rows.push_back(std::move(cat));
  }
  Tensor samples({static_cast<int>(total), d});
  int r = 0;
  for (const Tensor& cat : rows)
    for (int y = 0; y < cat.extent(0); ++y)
      for (int x = 0; x < cat.extent(1); ++x) {
        for (int c = 0; c < d; ++c) samples.at2(r, c) = cat.at3(y, x, c);
        ++r;
      }
  return samples;
}

GaussianCodePrior fit_prior(const Tensor& samples) {
  require_rank(samples, 2, "fit_prior");
  int n = samples.extent(0), d = samples.extent(1);
  if (n < 2) throw ConfigError("fit_prior: needs at least 2 samples");
  GaussianCodePrior prior;
  prior.d = d;
  prior.sample_count = n;
  prior.mean.assign(static_cast<std::size_t>(d), real(0));
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < d; ++c) prior.mean[static_cast<std::size_t>(c)] += samples.at2(i, c);
  for (int c = 0; c < d; ++c) prior.mean[static_cast<std::size_t>(c)] /= real(n);
  double pooled = 0;
  for (int c = 0; c < d; ++c) {
    double ss = 0;
    for (int i = 0; i < n; ++i) {
      double dv = samples.at2(i, c) - prior.mean[static_cast<std::size_t>(c)];
      ss += dv * dv;
    }
    pooled += ss / (n - 1);
  }
  prior.variance = std::max(static_cast<real>(pooled / d), variance_floor);
  return prior;
}

namespace {

void check_prior(const GaussianCodePrior& prior, int d) {
  if (prior.d <= 0) throw ConfigError("code_nll: prior not fitted");
  if (prior.d != d) throw DimensionError("code_nll: code width does not match prior");
}

Tensor mean_field(const GaussianCodePrior& prior, int h, int w) {
  Tensor mu({h, w, prior.d});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < prior.d; ++c)
        mu.at3(y, x, c) = prior.mean[static_cast<std::size_t>(c)];
  return mu;
}

}  // namespace

real code_nll(const GaussianCodePrior& prior, const std::vector<Tensor>& code_means) {
  Tensor z = concat_code_fields(code_means);
  check_prior(prior, z.extent(2));
  Tensor diff = sub(z, mean_field(prior, z.extent(0), z.extent(1)));
  double n = static_cast<double>(z.extent(0)) * z.extent(1);
  return static_cast<real>(0.5 * prior.d * std::log(kTwoPi * prior.variance) +
                           dot(diff, diff) / (2.0 * prior.variance * n));
}

Var code_nll(Graph& g, const GaussianCodePrior& prior, const std::vector<Var>& code_means) {
  if (code_means.empty()) throw ConfigError("code_nll: no levels");
  // extents copied up front: emitting nodes may invalidate g.value references
  std::vector<std::array<int, 3>> ext;
  int h0 = 0, w0 = 0, d = 0;
  for (Var v : code_means) {
    const Tensor& t = g.value(v);
    require_rank(t, 3, "code concatenation");
    ext.push_back({t.extent(0), t.extent(1), t.extent(2)});
    h0 = std::max(h0, t.extent(0));
    w0 = std::max(w0, t.extent(1));
    d += t.extent(2);
  }
  std::vector<Var> up;
  for (std::size_t i = 0; i < code_means.size(); ++i) {
    up.push_back(ext[i][0] == h0 && ext[i][1] == w0 ? code_means[i]
                                                    : upsample_nearest(code_means[i], h0, w0));
  }
  check_prior(prior, d);
  Var z = up.size() == 1 ? up[0] : concat_ch(up);
  Var diff = sub(z, g.constant(mean_field(prior, h0, w0)));
  double n = static_cast<double>(h0) * w0;
  return affine(sum(square(diff)), static_cast<real>(1.0 / (2.0 * prior.variance * n)),
                static_cast<real>(0.5 * prior.d * std::log(kTwoPi * prior.variance)));
}

real image_l1_gradient(const Tensor& image) {
  require_rank(image, 3, "image_l1_gradient");
  int h = image.extent(0), w = image.extent(1), c = image.extent(2);
  double acc = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x + 1 < w; ++x)
      for (int ch = 0; ch < c; ++ch)
        acc += std::abs(double(image.at3(y, x + 1, ch)) - image.at3(y, x, ch));
  for (int y = 0; y + 1 < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch)
        acc += std::abs(double(image.at3(y + 1, x, ch)) - image.at3(y, x, ch));
  return static_cast<real>(acc / (static_cast<double>(h) * w * c));
}

Var image_l1_gradient(Var image) {
  Graph& g = *image.graph;
  const Tensor& t = g.value(image);
  require_rank(t, 3, "image_l1_gradient");
  int h = t.extent(0), w = t.extent(1), c = t.extent(2);
  std::vector<Var> terms;
  if (w > 1) {
    Var dx = sub(crop2d(image, 0, 1, h, w - 1), crop2d(image, 0, 0, h, w - 1));
    terms.push_back(sum(abs_(dx)));
  }
  if (h > 1) {
    Var dy = sub(crop2d(image, 1, 0, h - 1, w), crop2d(image, 0, 0, h - 1, w));
    terms.push_back(sum(abs_(dy)));
  }
  if (terms.empty()) return g.constant(Tensor({1}));
  Var total = terms.size() == 1 ? terms[0] : add(terms[0], terms[1]);
  return affine(total, static_cast<real>(1.0 / (static_cast<double>(h) * w * c)), real(0));
}

}  // namespace layerforge::prior
