#include "layerforge/metrics.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include <json.hpp>

#include "layerforge/error.hpp"
#include "layerforge/ops.hpp"
#include "layerforge/rng.hpp"

namespace layerforge::metrics {

using nlohmann::json;

namespace {

void check_pair(const Tensor& pred, const Tensor& gt, const Tensor* mask) {
  require_rank(pred, 3, "scaled_mse pred");
  require_shape(gt, pred.shape(), "scaled_mse gt");
  if (mask != nullptr) {
    require_shape(*mask, {pred.extent(0), pred.extent(1), 1}, "scaled_mse mask");
  }
}

bool masked_in(const Tensor* mask, int y, int x) {
  return mask == nullptr || mask->at3(y, x, 0) > real(0.5);
}

// Windowed core shared by the global metric (one full-image window).
real scaled_mse_region(const Tensor& pred, const Tensor& gt, const Tensor* mask, int y0, int x0,
                       int h, int w) {
  int c = pred.extent(2);
  double pg = 0, pp = 0, gg = 0;
  std::size_t count = 0;
  for (int y = y0; y < y0 + h; ++y)
    for (int x = x0; x < x0 + w; ++x) {
      if (!masked_in(mask, y, x)) continue;
      for (int ch = 0; ch < c; ++ch) {
        double p = pred.at3(y, x, ch), g = gt.at3(y, x, ch);
        pg += p * g;
        pp += p * p;
        gg += g * g;
      }
      count += static_cast<std::size_t>(c);
    }
  if (count == 0) throw ConfigError("scaled_mse: empty mask");
  if (pp == 0) return static_cast<real>(gg / static_cast<double>(count));
  double alpha = pg / pp;
  double acc = 0;
  for (int y = y0; y < y0 + h; ++y)
    for (int x = x0; x < x0 + w; ++x) {
      if (!masked_in(mask, y, x)) continue;
      for (int ch = 0; ch < c; ++ch) {
        double e = alpha * pred.at3(y, x, ch) - gt.at3(y, x, ch);
        acc += e * e;
      }
    }
  return static_cast<real>(acc / static_cast<double>(count));
}

double region_coverage(const Tensor* mask, int y0, int x0, int window) {
  if (mask == nullptr) return 1.0;
  int hit = 0;
  for (int y = y0; y < y0 + window; ++y)
    for (int x = x0; x < x0 + window; ++x) hit += mask->at3(y, x, 0) > real(0.5) ? 1 : 0;
  return static_cast<double>(hit) / (static_cast<double>(window) * window);
}

constexpr double kSrgbKnee = 0.0031308;

double srgb_transfer(double v) {
  if (v <= kSrgbKnee) return 12.92 * v;
  return 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

double luminance_at(const Tensor& albedo, int x, int y, Transfer transfer) {
  int c = albedo.extent(2);
  double acc = 0;
  for (int ch = 0; ch < c; ++ch) {
    double v = albedo.at3(y, x, ch);
    acc += transfer == Transfer::srgb ? srgb_transfer(std::max(0.0, v)) : v;
  }
  return acc / c;
}

char predict(double l1, double l2, double delta) {
  if (l1 <= 0 && l2 <= 0) return 'E';
  if (l1 <= 0) return '1';
  if (l2 <= 0) return '2';
  if (l2 / l1 > 1.0 + delta) return '1';
  if (l1 / l2 > 1.0 + delta) return '2';
  return 'E';
}

void validate_judgments(const JudgmentFile& file) {
  if (file.width < 1 || file.height < 1) throw ConfigError("judgments: bad image extent");
  if (file.judgments.empty()) throw ConfigError("judgments: empty list");
  for (const Judgment& j : file.judgments) {
    if (j.darker != '1' && j.darker != '2' && j.darker != 'E') {
      throw ConfigError("judgments: darker must be 1, 2, or E");
    }
    if (!(j.weight > 0)) throw ConfigError("judgments: weights must be positive");
    for (auto [x, y] : {std::pair{j.x1, j.y1}, std::pair{j.x2, j.y2}}) {
      if (x < 0 || x >= file.width || y < 0 || y >= file.height) {
        throw ConfigError("judgments: point outside image");
      }
    }
  }
}

}  // namespace

real scaled_mse(const Tensor& pred, const Tensor& gt, const Tensor* mask) {
  check_pair(pred, gt, mask);
  return scaled_mse_region(pred, gt, mask, 0, 0, pred.extent(0), pred.extent(1));
}

real local_scaled_mse(const Tensor& pred, const Tensor& gt, int window, int stride,
                      const Tensor* mask) {
  check_pair(pred, gt, mask);
  if (window < 1 || stride < 1) throw ConfigError("local_scaled_mse: bad window or stride");
  int h = pred.extent(0), w = pred.extent(1);
  if (h < window || w < window) {
    throw ConfigError("local_scaled_mse: image smaller than one window");
  }
  double acc = 0;
  int n = 0;
  for (int y0 = 0; y0 + window <= h; y0 += stride)
    for (int x0 = 0; x0 + window <= w; x0 += stride) {
      if (region_coverage(mask, y0, x0, window) < 0.5) continue;
      acc += scaled_mse_region(pred, gt, mask, y0, x0, window, window);
      ++n;
    }
  if (n == 0) throw ConfigError("local_scaled_mse: every window fell below mask coverage");
  return static_cast<real>(acc / n);
}

MseTriple smse_rmse_rsmse(const Tensor& pred_albedo, const Tensor& pred_shading,
                          const Tensor& gt_albedo, const Tensor& gt_shading, const Tensor* mask,
                          int window, int stride) {
  MseTriple t;
  t.s_mse = scaled_mse(pred_shading, gt_shading, mask);
  t.r_mse = scaled_mse(pred_albedo, gt_albedo, mask);
  real local_s = local_scaled_mse(pred_shading, gt_shading, window, stride, mask);
  real local_r = local_scaled_mse(pred_albedo, gt_albedo, window, stride, mask);
  t.rs_mse = (local_s + local_r) / real(2);
  return t;
}

std::pair<Tensor, Tensor> naive_baseline(const Tensor& image) {
  require_rank(image, 3, "naive_baseline");
  int h = image.extent(0), w = image.extent(1), c = image.extent(2);
  double lum = 0;
  for (std::size_t i = 0; i < image.size(); ++i) lum += image[i];
  lum /= static_cast<double>(image.size());
  if (!(lum > 0)) throw ConfigError("naive_baseline: image must have positive mean luminance");
  Tensor shading({h, w, c});
  Tensor albedo({h, w, c});
  for (std::size_t i = 0; i < image.size(); ++i) {
    shading[i] = static_cast<real>(lum);
    albedo[i] = static_cast<real>(image[i] / lum);
  }
  return {std::move(albedo), std::move(shading)};
}

real whdr(const Tensor& albedo, const JudgmentFile& judgments, real delta, Transfer transfer) {
  require_rank(albedo, 3, "whdr");
  validate_judgments(judgments);
  if (albedo.extent(0) != judgments.height || albedo.extent(1) != judgments.width) {
    throw DimensionError("whdr: albedo extent does not match the judgment file");
  }
  double wrong = 0, total = 0;
  for (const Judgment& j : judgments.judgments) {
    double l1 = luminance_at(albedo, j.x1, j.y1, transfer);
    double l2 = luminance_at(albedo, j.x2, j.y2, transfer);
    char p = predict(l1, l2, static_cast<double>(delta));
    if (p != j.darker) wrong += j.weight;
    total += j.weight;
  }
  return static_cast<real>(wrong / total);
}

real recon_l2(const vae::LayerModel& model, const std::vector<Tensor>& linear_patches) {
  if (linear_patches.empty()) throw ConfigError("recon_l2: empty corpus");
  double acc = 0;
  for (const Tensor& patch : linear_patches) {
    real l2 = 0;
    vae::reconstruct_patch(model, to_log_domain(patch), &l2);
    acc += l2;
  }
  return static_cast<real>(acc / static_cast<double>(linear_patches.size()));
}

JudgmentFile load_judgments(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("judgments: cannot open " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw IoError("judgments: bad JSON in " + path + ": " + e.what());
  }
  JudgmentFile file;
  try {
    file.width = j.at("width").get<int>();
    file.height = j.at("height").get<int>();
    for (const json& e : j.at("judgments")) {
      Judgment jd;
      jd.x1 = e.at("point1").at(0).get<int>();
      jd.y1 = e.at("point1").at(1).get<int>();
      jd.x2 = e.at("point2").at(0).get<int>();
      jd.y2 = e.at("point2").at(1).get<int>();
      std::string darker = e.at("darker").get<std::string>();
      if (darker.size() != 1) throw ConfigError("judgments: darker must be 1, 2, or E");
      jd.darker = darker[0];
      jd.weight = e.contains("weight") ? e.at("weight").get<real>() : real(1);
      file.judgments.push_back(jd);
    }
  } catch (const json::exception& e) {
    throw IoError("judgments: bad fields in " + path + ": " + e.what());
  }
  validate_judgments(file);
  return file;
}

void save_judgments(const JudgmentFile& file, const std::string& path) {
  validate_judgments(file);
  json out;
  out["width"] = file.width;
  out["height"] = file.height;
  json list = json::array();
  for (const Judgment& j : file.judgments) {
    list.push_back({{"point1", {j.x1, j.y1}},
                    {"point2", {j.x2, j.y2}},
                    {"darker", std::string(1, j.darker)},
                    {"weight", j.weight}});
  }
  out["judgments"] = std::move(list);
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("judgments: cannot open " + path + " for writing");
  f << out.dump(2) << '\n';
  if (!f) throw IoError("judgments: short write to " + path);
}

JudgmentFile synth_judgments(const Tensor& albedo, int count, real delta, std::uint64_t seed,
                             Transfer transfer) {
  require_rank(albedo, 3, "synth_judgments");
  if (count < 1) throw ConfigError("synth_judgments: count must be positive");
  int h = albedo.extent(0), w = albedo.extent(1);
  JudgmentFile file;
  file.width = w;
  file.height = h;
  Rng rng(mix_seed(seed, RngStream::sampling, 0));
  for (int i = 0; i < count; ++i) {
    Judgment j;
    j.x1 = rng.uniform_int(w);
    j.y1 = rng.uniform_int(h);
    j.x2 = rng.uniform_int(w);
    j.y2 = rng.uniform_int(h);
    double l1 = luminance_at(albedo, j.x1, j.y1, transfer);
    double l2 = luminance_at(albedo, j.x2, j.y2, transfer);
    j.darker = predict(l1, l2, static_cast<double>(delta));
    j.weight = static_cast<real>(rng.uniform(0.5, 1.5));
    file.judgments.push_back(j);
  }
  return file;
}

}  // namespace layerforge::metrics
