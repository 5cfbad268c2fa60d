#include "cdi/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <utility>

#include "cdi/component_io.hpp"
#include "cdi/errors.hpp"
#include "cdi/formation.hpp"
#include "cdi/losses.hpp"
#include "cdi/synthgen.hpp"

namespace cdi {
namespace {

void check_pair(const LinearImage& pred, const LinearImage& gt,
                const char* what) {
  if (pred.empty() || gt.empty())
    throw DataError(std::string(what) + ": empty input");
  if (pred.width() != gt.width() || pred.height() != gt.height() ||
      pred.channels() != gt.channels())
    throw DataError(std::string(what) + ": pred and gt shapes differ");
}

// Window start offsets: every `stride` steps, plus a final window pinned
// flush to the far edge so the whole extent is covered.
std::vector<int> window_starts(int extent, int window, int stride) {
  std::vector<int> starts;
  for (int s = 0; s + window <= extent; s += stride) starts.push_back(s);
  if (starts.empty() || starts.back() != extent - window)
    starts.push_back(extent - window);
  return starts;
}

double window_energy_floor() { return static_cast<double>(kEpsilon); }

}  // namespace

double rmse(const LinearImage& pred, const LinearImage& gt) {
  check_pair(pred, gt, "rmse");
  const auto p = pred.data();
  const auto g = gt.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = double{p[i]} - double{g[i]};
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(p.size()));
}

double si_rmse(const LinearImage& pred, const LinearImage& gt) {
  check_pair(pred, gt, "si_rmse");
  const double alpha = ls_scale_align(pred.data(), gt.data());
  const auto p = pred.data();
  const auto g = gt.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = alpha * double{p[i]} - double{g[i]};
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(p.size()));
}

double lmse(const LinearImage& pred, const LinearImage& gt) {
  check_pair(pred, gt, "lmse");
  const int side = std::max(2, std::min(pred.height(), pred.width()) / 8);
  return lmse(pred, gt, side, std::max(1, side / 2));
}

double lmse(const LinearImage& pred, const LinearImage& gt, int window,
            int stride) {
  check_pair(pred, gt, "lmse");
  if (window < 2) throw DataError("lmse: window must be >= 2");
  if (window > std::min(pred.height(), pred.width()))
    throw DataError("lmse: window exceeds the image");
  if (stride < 1 || stride > window)
    throw DataError("lmse: stride must be in [1, window]");

  const std::vector<int> xs = window_starts(pred.width(), window, stride);
  const std::vector<int> ys = window_starts(pred.height(), window, stride);
  double total = 0.0;
  for (int y0 : ys) {
    for (int x0 : xs) {
      double spp = 0.0, spg = 0.0, sgg = 0.0;
      for (int c = 0; c < pred.channels(); ++c) {
        for (int y = y0; y < y0 + window; ++y) {
          for (int x = x0; x < x0 + window; ++x) {
            const double pv = pred.at(c, y, x);
            const double gv = gt.at(c, y, x);
            spp += pv * pv;
            spg += pv * gv;
            sgg += gv * gv;
          }
        }
      }
      const double alpha = spp > 0.0 ? spg / spp : 0.0;
      double err = 0.0;
      for (int c = 0; c < pred.channels(); ++c) {
        for (int y = y0; y < y0 + window; ++y) {
          for (int x = x0; x < x0 + window; ++x) {
            const double d = alpha * pred.at(c, y, x) - gt.at(c, y, x);
            err += d * d;
          }
        }
      }
      total += err / std::max(sgg, window_energy_floor());
    }
  }
  return total / (static_cast<double>(xs.size()) * ys.size());
}

double ssim(const LinearImage& pred, const LinearImage& gt) {
  check_pair(pred, gt, "ssim");
  constexpr int kWindow = 11;
  constexpr int kHalf = kWindow / 2;
  constexpr double kSigma = 1.5;
  constexpr double kK1 = 0.01;
  constexpr double kK2 = 0.03;
  if (pred.height() < kWindow || pred.width() < kWindow)
    throw DataError("ssim: image must be at least 11x11");

  // Normalized Gaussian weights.
  std::array<double, kWindow * kWindow> weight{};
  double wsum = 0.0;
  for (int dy = -kHalf; dy <= kHalf; ++dy) {
    for (int dx = -kHalf; dx <= kHalf; ++dx) {
      const double w =
          std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
      weight[static_cast<std::size_t>(dy + kHalf) * kWindow + (dx + kHalf)] = w;
      wsum += w;
    }
  }
  for (double& w : weight) w /= wsum;

  const double range = std::max(double{max_value(gt)} - double{min_value(gt)},
                                double{kEpsilon});
  const double c1 = (kK1 * range) * (kK1 * range);
  const double c2 = (kK2 * range) * (kK2 * range);

  double total = 0.0;
  std::size_t count = 0;
  for (int c = 0; c < pred.channels(); ++c) {
    for (int y0 = 0; y0 + kWindow <= pred.height(); ++y0) {
      for (int x0 = 0; x0 + kWindow <= pred.width(); ++x0) {
        double mp = 0.0, mg = 0.0, mpp = 0.0, mgg = 0.0, mpg = 0.0;
        for (int dy = 0; dy < kWindow; ++dy) {
          for (int dx = 0; dx < kWindow; ++dx) {
            const double w = weight[static_cast<std::size_t>(dy) * kWindow + dx];
            const double pv = pred.at(c, y0 + dy, x0 + dx);
            const double gv = gt.at(c, y0 + dy, x0 + dx);
            mp += w * pv;
            mg += w * gv;
            mpp += w * pv * pv;
            mgg += w * gv * gv;
            mpg += w * pv * gv;
          }
        }
        const double vp = mpp - mp * mp;
        const double vg = mgg - mg * mg;
        const double cov = mpg - mp * mg;
        const double num = (2.0 * mp * mg + c1) * (2.0 * cov + c2);
        const double den = (mp * mp + mg * mg + c1) * (vp + vg + c2);
        total += num / den;
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

AlbedoAccuracy intensity_chroma_error(const LinearImage& pred_albedo,
                                      const LinearImage& gt_albedo,
                                      const std::vector<LinearImage>& masks) {
  check_pair(pred_albedo, gt_albedo, "intensity_chroma_error");
  if (pred_albedo.channels() != 3)
    throw DataError("intensity_chroma_error: albedo must have 3 channels");
  if (masks.empty())
    throw DataError("intensity_chroma_error: at least one mask required");
  const std::size_t plane = pred_albedo.pixel_count();
  for (const LinearImage& m : masks) {
    if (m.channels() != 1 || m.width() != pred_albedo.width() ||
        m.height() != pred_albedo.height())
      throw DataError("intensity_chroma_error: mask shape mismatch");
  }

  // One global alignment scale over the union of masked pixels.
  std::vector<bool> selected(plane, false);
  for (const LinearImage& m : masks) {
    const auto mv = m.channel(0);
    for (std::size_t i = 0; i < plane; ++i)
      if (mv[i] > 0.5f) selected[i] = true;
  }
  std::vector<float> pvec, gvec;
  for (std::size_t i = 0; i < plane; ++i) {
    if (!selected[i]) continue;
    for (int c = 0; c < 3; ++c) {
      pvec.push_back(pred_albedo.channel(c)[i]);
      gvec.push_back(gt_albedo.channel(c)[i]);
    }
  }
  if (pvec.empty())
    throw DataError("intensity_chroma_error: masks select no pixels");
  const double alpha = ls_scale_align(pvec, gvec);

  double intensity_sum = 0.0;
  double chroma_sum = 0.0;
  for (const LinearImage& m : masks) {
    const auto mv = m.channel(0);
    std::array<double, 3> mean_p{};
    std::array<double, 3> mean_g{};
    std::size_t n = 0;
    for (std::size_t i = 0; i < plane; ++i) {
      if (mv[i] <= 0.5f) continue;
      ++n;
      for (int c = 0; c < 3; ++c) {
        mean_p[static_cast<std::size_t>(c)] +=
            alpha * double{pred_albedo.channel(c)[i]};
        mean_g[static_cast<std::size_t>(c)] += double{gt_albedo.channel(c)[i]};
      }
    }
    if (n == 0)
      throw DataError("intensity_chroma_error: a mask selects no pixels");
    for (int c = 0; c < 3; ++c) {
      mean_p[static_cast<std::size_t>(c)] /= static_cast<double>(n);
      mean_g[static_cast<std::size_t>(c)] /= static_cast<double>(n);
    }

    const double lum_gap = luminance709(mean_p[0], mean_p[1], mean_p[2]) -
                           luminance709(mean_g[0], mean_g[1], mean_g[2]);
    intensity_sum += lum_gap * lum_gap;

    const double np = std::sqrt(mean_p[0] * mean_p[0] + mean_p[1] * mean_p[1] +
                                mean_p[2] * mean_p[2]);
    const double ng = std::sqrt(mean_g[0] * mean_g[0] + mean_g[1] * mean_g[1] +
                                mean_g[2] * mean_g[2]);
    if (np <= 0.0 || ng <= 0.0)
      throw DataError("intensity_chroma_error: zero mean albedo in a mask");
    // atan2 of the cross/dot pair is exact at zero angle (parallel vectors
    // cancel the cross product bitwise) and well-conditioned everywhere.
    const std::array<double, 3> cross{
        mean_p[1] * mean_g[2] - mean_p[2] * mean_g[1],
        mean_p[2] * mean_g[0] - mean_p[0] * mean_g[2],
        mean_p[0] * mean_g[1] - mean_p[1] * mean_g[0]};
    const double cross_norm = std::sqrt(
        cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]);
    const double dot = mean_p[0] * mean_g[0] + mean_p[1] * mean_g[1] +
                       mean_p[2] * mean_g[2];
    chroma_sum += std::atan2(cross_norm, dot) * 180.0 / M_PI;
  }

  AlbedoAccuracy out;
  const double m = static_cast<double>(masks.size());
  out.intensity = 100.0 * intensity_sum / m;
  out.chromaticity = chroma_sum / m;
  return out;
}

std::vector<LinearImage> albedo_region_masks(const LinearImage& albedo,
                                             int min_pixels) {
  if (albedo.empty() || albedo.channels() != 3)
    throw DataError("albedo_region_masks: 3-channel albedo required");
  if (min_pixels < 1)
    throw DataError("albedo_region_masks: min_pixels must be >= 1");

  std::map<std::array<float, 3>, std::size_t> index;
  std::vector<LinearImage> masks;
  std::vector<int> counts;
  const std::size_t plane = albedo.pixel_count();
  const auto r = albedo.channel(0);
  const auto g = albedo.channel(1);
  const auto b = albedo.channel(2);
  for (std::size_t i = 0; i < plane; ++i) {
    const std::array<float, 3> key{r[i], g[i], b[i]};
    auto [it, inserted] = index.try_emplace(key, masks.size());
    if (inserted) {
      masks.emplace_back(albedo.width(), albedo.height(), 1,
                         ColorSpace::kData);
      counts.push_back(0);
    }
    masks[it->second].channel(0)[i] = 1.0f;
    ++counts[it->second];
  }

  std::vector<LinearImage> kept;
  for (std::size_t k = 0; k < masks.size(); ++k) {
    if (counts[k] >= min_pixels) kept.push_back(std::move(masks[k]));
  }
  return kept;
}

std::string metric_target_name(MetricTarget target) {
  return target == MetricTarget::kAlbedo ? "albedo" : "shading";
}

std::string MetricReport::to_csv() const {
  std::string out = "scene_id,lmse,rmse,si_rmse,ssim,intensity,chromaticity\n";
  auto append = [&out](const MetricRow& row) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                  row.scene_id.c_str(), row.lmse, row.rmse, row.si_rmse,
                  row.ssim, row.intensity, row.chromaticity);
    out += buf;
  };
  for (const MetricRow& row : rows) append(row);
  append(mean);
  return out;
}

std::string MetricReport::summary() const {
  std::ostringstream out;
  out << "Decomposition metric report (" << metric_target_name(target)
      << " component, " << rows.size() << " scenes)\n";
  out << "Metric definitions are pinned local variants; values compare across "
         "runs of this tool,\nnot against externally published tables.\n";
  out << "Config: lmse window " << lmse_window << " stride " << lmse_stride
      << "; ssim window " << ssim_window << " sigma " << ssim_sigma << " K1 "
      << ssim_k1 << " K2 " << ssim_k2 << ".\n";
  out << "rmse is not scale-invariant; si_rmse, lmse, intensity, and "
         "chromaticity are.\n";
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "Means: lmse %.6f  rmse %.6f  si_rmse %.6f  ssim %.6f  "
                "intensity %.6f  chromaticity %.6f\n",
                mean.lmse, mean.rmse, mean.si_rmse, mean.ssim, mean.intensity,
                mean.chromaticity);
  out << buf;
  return out.str();
}

void MetricReport::validate() const {
  if (rows.empty()) throw DataError("metric report: no rows");
  MetricRow expect;
  for (const MetricRow& row : rows) {
    if (row.ssim < -1.0 - 1e-9 || row.ssim > 1.0 + 1e-9)
      throw DataError("metric report: ssim outside [-1, 1]");
    if (row.lmse < 0.0 || row.rmse < 0.0 || row.si_rmse < 0.0 ||
        row.intensity < 0.0 || row.chromaticity < 0.0)
      throw DataError("metric report: negative error metric");
    expect.lmse += row.lmse;
    expect.rmse += row.rmse;
    expect.si_rmse += row.si_rmse;
    expect.ssim += row.ssim;
    expect.intensity += row.intensity;
    expect.chromaticity += row.chromaticity;
  }
  const double n = static_cast<double>(rows.size());
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-9; };
  if (!close(mean.lmse, expect.lmse / n) || !close(mean.rmse, expect.rmse / n) ||
      !close(mean.si_rmse, expect.si_rmse / n) ||
      !close(mean.ssim, expect.ssim / n) ||
      !close(mean.intensity, expect.intensity / n) ||
      !close(mean.chromaticity, expect.chromaticity / n))
    throw DataError("metric report: aggregate differs from the row means");
  if (!std::is_sorted(rows.begin(), rows.end(),
                      [](const MetricRow& a, const MetricRow& b) {
                        return a.scene_id < b.scene_id;
                      }))
    throw DataError("metric report: rows not sorted by scene_id");
}

MetricReport evaluate_dataset(const std::filesystem::path& dataset_root,
                              const std::filesystem::path& components_dir,
                              MetricTarget target, const std::string& split) {
  const DatasetManifest manifest = load_dataset_manifest(dataset_root);
  std::vector<DatasetEntry> entries;
  for (const DatasetEntry& e : manifest.entries) {
    if (split.empty() || e.split == split) entries.push_back(e);
  }
  if (entries.empty())
    throw DataError("evaluate_dataset: no scenes selected" +
                    (split.empty() ? std::string() : " for split '" + split + "'"));
  std::sort(entries.begin(), entries.end(),
            [](const DatasetEntry& a, const DatasetEntry& b) {
              return a.id < b.id;
            });

  MetricReport report;
  report.target = target;
  report.lmse_window = std::max(2, manifest.resolution / 8);
  report.lmse_stride = std::max(1, report.lmse_window / 2);

  for (const DatasetEntry& e : entries) {
    const SceneGT scene = load_scene(dataset_root / e.id);
    const ComponentDir comps = load_component_dir(components_dir / e.id);
    const LinearImage& pred_albedo = comps.get("albedo");
    const LinearImage& pred =
        target == MetricTarget::kAlbedo ? pred_albedo : comps.get("shading");
    const LinearImage& gt = target == MetricTarget::kAlbedo
                                ? scene.components.albedo
                                : scene.components.shading;

    MetricRow row;
    row.scene_id = e.id;
    row.lmse = lmse(pred, gt);
    row.rmse = rmse(pred, gt);
    row.si_rmse = si_rmse(pred, gt);
    row.ssim = ssim(pred, gt);
    const AlbedoAccuracy acc = intensity_chroma_error(
        pred_albedo, scene.components.albedo,
        albedo_region_masks(scene.components.albedo));
    row.intensity = acc.intensity;
    row.chromaticity = acc.chromaticity;
    report.rows.push_back(std::move(row));

    report.mean.lmse += report.rows.back().lmse;
    report.mean.rmse += report.rows.back().rmse;
    report.mean.si_rmse += report.rows.back().si_rmse;
    report.mean.ssim += report.rows.back().ssim;
    report.mean.intensity += report.rows.back().intensity;
    report.mean.chromaticity += report.rows.back().chromaticity;
  }
  const double n = static_cast<double>(report.rows.size());
  report.mean.scene_id = "mean";
  report.mean.lmse /= n;
  report.mean.rmse /= n;
  report.mean.si_rmse /= n;
  report.mean.ssim /= n;
  report.mean.intensity /= n;
  report.mean.chromaticity /= n;
  report.validate();
  return report;
}

}  // namespace cdi
