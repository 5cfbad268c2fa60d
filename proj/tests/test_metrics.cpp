#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "cdi/component_io.hpp"
#include "cdi/errors.hpp"
#include "cdi/formation.hpp"
#include "cdi/image.hpp"
#include "cdi/metrics.hpp"
#include "cdi/synthgen.hpp"
#include "doctest.h"
#include "test_util.hpp"

namespace fs = std::filesystem;
using cdi::test::random_image;
using cdi::test::temp_dir;

namespace {

// ---- brute-force oracles, written from the definitions with arithmetic
// paths independent of the library (grid searches, algebraic identities,
// unnormalized weights, cross-product angles).

double oracle_objective(const cdi::LinearImage& p, const cdi::LinearImage& g,
                        double alpha) {
  double sum = 0.0;
  auto pv = p.data();
  auto gv = g.data();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double d = alpha * pv[i] - gv[i];
    sum += d * d;
  }
  return sum;
}

double grid_search_alpha(const cdi::LinearImage& p, const cdi::LinearImage& g,
                         double lo = 0.0, double hi = 8.0) {
  double best = lo;
  for (int round = 0; round < 5; ++round) {
    double best_obj = std::numeric_limits<double>::infinity();
    const double step = (hi - lo) / 500.0;
    for (int i = 0; i <= 500; ++i) {
      const double a = lo + i * step;
      const double obj = oracle_objective(p, g, a);
      if (obj < best_obj) {
        best_obj = obj;
        best = a;
      }
    }
    lo = best - step;
    hi = best + step;
  }
  return best;
}

double oracle_si_rmse(const cdi::LinearImage& p, const cdi::LinearImage& g) {
  const double alpha = grid_search_alpha(p, g);
  return std::sqrt(oracle_objective(p, g, alpha) /
                   static_cast<double>(p.data().size()));
}

// Same window enumeration contract; per-window scale and error via the
// algebraic expansion instead of a second pass.
double oracle_lmse(const cdi::LinearImage& p, const cdi::LinearImage& g,
                   int window, int stride) {
  auto starts = [&](int extent) {
    std::vector<int> s;
    for (int v = 0; v + window <= extent; v += stride) s.push_back(v);
    if (s.empty() || s.back() != extent - window) s.push_back(extent - window);
    return s;
  };
  const std::vector<int> xs = starts(p.width());
  const std::vector<int> ys = starts(p.height());
  double total = 0.0;
  for (int y0 : ys) {
    for (int x0 : xs) {
      double spp = 0.0, spg = 0.0, sgg = 0.0;
      for (int c = 0; c < p.channels(); ++c) {
        for (int y = y0; y < y0 + window; ++y) {
          for (int x = x0; x < x0 + window; ++x) {
            const double pv = p.at(c, y, x);
            const double gv = g.at(c, y, x);
            spp += pv * pv;
            spg += pv * gv;
            sgg += gv * gv;
          }
        }
      }
      const double alpha = spp > 0.0 ? spg / spp : 0.0;
      const double err = alpha * alpha * spp - 2.0 * alpha * spg + sgg;
      total += err / std::max(sgg, static_cast<double>(cdi::kEpsilon));
    }
  }
  return total / (static_cast<double>(xs.size()) * ys.size());
}

// Unnormalized Gaussian weights, normalized by the accumulated weight sum
// inside every window.
double oracle_ssim(const cdi::LinearImage& p, const cdi::LinearImage& g) {
  const double range =
      std::max(static_cast<double>(cdi::max_value(g)) - cdi::min_value(g),
               static_cast<double>(cdi::kEpsilon));
  const double c1 = 0.01 * range * 0.01 * range;
  const double c2 = 0.03 * range * 0.03 * range;
  double total = 0.0;
  std::size_t count = 0;
  for (int c = 0; c < p.channels(); ++c) {
    for (int y0 = 0; y0 + 11 <= p.height(); ++y0) {
      for (int x0 = 0; x0 + 11 <= p.width(); ++x0) {
        double sw = 0.0, swp = 0.0, swg = 0.0, swpp = 0.0, swgg = 0.0,
               swpg = 0.0;
        for (int dy = 0; dy < 11; ++dy) {
          for (int dx = 0; dx < 11; ++dx) {
            const double rx = dx - 5.0;
            const double ry = dy - 5.0;
            const double w = std::exp(-(rx * rx + ry * ry) / 4.5);
            const double pv = p.at(c, y0 + dy, x0 + dx);
            const double gv = g.at(c, y0 + dy, x0 + dx);
            sw += w;
            swp += w * pv;
            swg += w * gv;
            swpp += w * pv * pv;
            swgg += w * gv * gv;
            swpg += w * pv * gv;
          }
        }
        const double mp = swp / sw;
        const double mg = swg / sw;
        const double vp = swpp / sw - mp * mp;
        const double vg = swgg / sw - mg * mg;
        const double cov = swpg / sw - mp * mg;
        total += ((2.0 * mp * mg + c1) * (2.0 * cov + c2)) /
                 ((mp * mp + mg * mg + c1) * (vp + vg + c2));
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

// Per-pixel luminance accumulation and a cross-product angle.
cdi::AlbedoAccuracy oracle_intensity_chroma(
    const cdi::LinearImage& p, const cdi::LinearImage& g,
    const std::vector<cdi::LinearImage>& masks) {
  const std::size_t plane = p.pixel_count();
  std::vector<bool> selected(plane, false);
  for (const cdi::LinearImage& m : masks) {
    auto mv = m.channel(0);
    for (std::size_t i = 0; i < plane; ++i)
      if (mv[i] > 0.5f) selected[i] = true;
  }
  std::vector<float> pm, gm;
  for (std::size_t i = 0; i < plane; ++i) {
    if (!selected[i]) continue;
    for (int c = 0; c < 3; ++c) {
      pm.push_back(p.channel(c)[i]);
      gm.push_back(g.channel(c)[i]);
    }
  }
  const int pn = static_cast<int>(pm.size());
  const int gn = static_cast<int>(gm.size());
  const cdi::LinearImage pimg = cdi::LinearImage::from_data(
      pn, 1, 1, cdi::ColorSpace::kData, std::move(pm));
  const cdi::LinearImage gimg = cdi::LinearImage::from_data(
      gn, 1, 1, cdi::ColorSpace::kData, std::move(gm));
  const double alpha = grid_search_alpha(pimg, gimg);

  double isum = 0.0, csum = 0.0;
  for (const cdi::LinearImage& m : masks) {
    auto mv = m.channel(0);
    double lum_p = 0.0, lum_g = 0.0;
    std::array<double, 3> ap{}, ag{};
    std::size_t n = 0;
    for (std::size_t i = 0; i < plane; ++i) {
      if (mv[i] <= 0.5f) continue;
      ++n;
      lum_p += cdi::luminance709(alpha * p.channel(0)[i],
                                 alpha * p.channel(1)[i],
                                 alpha * p.channel(2)[i]);
      lum_g +=
          cdi::luminance709(g.channel(0)[i], g.channel(1)[i], g.channel(2)[i]);
      for (int c = 0; c < 3; ++c) {
        ap[static_cast<std::size_t>(c)] += p.channel(c)[i];
        ag[static_cast<std::size_t>(c)] += g.channel(c)[i];
      }
    }
    const double dn = static_cast<double>(n);
    const double gap = lum_p / dn - lum_g / dn;
    isum += gap * gap;
    // angle via acos of the normalized dot product
    const double na =
        std::sqrt(ap[0] * ap[0] + ap[1] * ap[1] + ap[2] * ap[2]);
    const double nb =
        std::sqrt(ag[0] * ag[0] + ag[1] * ag[1] + ag[2] * ag[2]);
    const double dot = ap[0] * ag[0] + ap[1] * ag[1] + ap[2] * ag[2];
    csum += std::acos(std::clamp(dot / (na * nb), -1.0, 1.0)) * 180.0 / M_PI;
  }
  cdi::AlbedoAccuracy out;
  out.intensity = 100.0 * isum / static_cast<double>(masks.size());
  out.chromaticity = csum / static_cast<double>(masks.size());
  return out;
}

std::vector<cdi::LinearImage> quadrant_masks(int width, int height) {
  std::vector<cdi::LinearImage> masks;
  const int hw = width / 2;
  const int hh = height / 2;
  for (int q = 0; q < 4; ++q) {
    cdi::LinearImage m(width, height, 1, cdi::ColorSpace::kData);
    const int x0 = (q % 2) * hw;
    const int y0 = (q / 2) * hh;
    for (int y = y0; y < y0 + hh; ++y)
      for (int x = x0; x < x0 + hw; ++x) m.at(0, y, x) = 1.0f;
    masks.push_back(std::move(m));
  }
  return masks;
}

}  // namespace

TEST_CASE("error metrics vanish on perfect and globally rescaled estimates") {
  const cdi::LinearImage g =
      random_image(16, 16, 3, cdi::ColorSpace::kLinear, 501, 0.05f, 1.0f);
  const cdi::LinearImage doubled = cdi::scale(g, 2.0f);

  CHECK(cdi::rmse(g, g) == 0.0);
  CHECK(cdi::si_rmse(g, g) == 0.0);
  CHECK(cdi::lmse(g, g) == 0.0);

  // Doubling is exact in floats, so the alignments cancel it exactly.
  CHECK(cdi::si_rmse(doubled, g) == 0.0);
  CHECK(cdi::lmse(doubled, g) == 0.0);
  // Plain RMSE is not scale-invariant (and says so in reports).
  CHECK(cdi::rmse(doubled, g) > 0.1);

  // A non-dyadic scale still aligns to numerical noise.
  CHECK(cdi::si_rmse(cdi::scale(g, 1.7f), g) < 1e-7);
}

TEST_CASE("structural similarity brackets identity, inversion, and bias") {
  const cdi::SceneGT scene = [] {
    cdi::SceneParams p;
    p.resolution = 32;
    p.seed = 41;
    return cdi::gen_scene(p, 360);
  }();
  const cdi::LinearImage& albedo = scene.components.albedo;

  CHECK(cdi::ssim(albedo, albedo) == 1.0);

  // Inverting a textured image destroys structure.
  std::vector<float> inverted(albedo.data().begin(), albedo.data().end());
  for (float& v : inverted) v = 1.0f - v;
  const cdi::LinearImage flipped = cdi::LinearImage::from_data(
      albedo.width(), albedo.height(), 3, cdi::ColorSpace::kLinear,
      std::move(inverted));
  CHECK(cdi::ssim(flipped, albedo) < 0.5);

  // Constant images with different means: structure matches, luminance
  // term stays below one.
  const cdi::LinearImage a(16, 16, 1, cdi::ColorSpace::kLinear, 0.3f);
  const cdi::LinearImage b(16, 16, 1, cdi::ColorSpace::kLinear, 0.7f);
  const double s = cdi::ssim(a, b);
  CHECK(s < 1.0);
  CHECK(s > 0.0);

  CHECK_THROWS_AS(
      cdi::ssim(cdi::LinearImage(8, 8, 1, cdi::ColorSpace::kLinear, 0.5f),
                cdi::LinearImage(8, 8, 1, cdi::ColorSpace::kLinear, 0.5f)),
      cdi::DataError);
}

TEST_CASE("window geometry and input validation are enforced") {
  const cdi::LinearImage g =
      random_image(16, 16, 3, cdi::ColorSpace::kLinear, 502, 0.05f, 1.0f);
  const cdi::LinearImage small =
      random_image(8, 8, 3, cdi::ColorSpace::kLinear, 503, 0.05f, 1.0f);
  CHECK_THROWS_AS(cdi::rmse(g, small), cdi::DataError);
  CHECK_THROWS_AS(cdi::si_rmse(g, small), cdi::DataError);
  CHECK_THROWS_AS(cdi::lmse(g, g, 1, 1), cdi::DataError);
  CHECK_THROWS_AS(cdi::lmse(g, g, 32, 16), cdi::DataError);
  CHECK_THROWS_AS(cdi::lmse(g, g, 4, 5), cdi::DataError);
  CHECK_THROWS_AS(cdi::lmse(g, g, 4, 0), cdi::DataError);
  CHECK_THROWS_AS(
      cdi::intensity_chroma_error(g, g, std::vector<cdi::LinearImage>{}),
      cdi::DataError);
  const cdi::LinearImage empty_mask(16, 16, 1, cdi::ColorSpace::kData, 0.0f);
  CHECK_THROWS_AS(cdi::intensity_chroma_error(g, g, {empty_mask}),
                  cdi::DataError);
}

TEST_CASE("masked albedo accuracy is exact on scaled copies") {
  const cdi::LinearImage g =
      random_image(16, 16, 3, cdi::ColorSpace::kLinear, 504, 0.05f, 1.0f);
  const auto masks = quadrant_masks(16, 16);

  const cdi::AlbedoAccuracy same = cdi::intensity_chroma_error(g, g, masks);
  CHECK(same.intensity == 0.0);
  CHECK(same.chromaticity == 0.0);

  // One global doubling is removed exactly by the alignment, and angles
  // ignore scale altogether.
  const cdi::AlbedoAccuracy scaled =
      cdi::intensity_chroma_error(cdi::scale(g, 2.0f), g, masks);
  CHECK(scaled.intensity == 0.0);
  CHECK(scaled.chromaticity == 0.0);

  // A red shift shows up in chromaticity; pin it against a direct angle.
  cdi::LinearImage shifted = g;
  {
    auto r = shifted.channel(0);
    for (float& v : r) v *= 1.2f;
  }
  const cdi::AlbedoAccuracy red = cdi::intensity_chroma_error(shifted, g, masks);
  CHECK(red.chromaticity > 0.5);
  const cdi::AlbedoAccuracy red_oracle = oracle_intensity_chroma(shifted, g, masks);
  CHECK(std::abs(red.chromaticity - red_oracle.chromaticity) < 1e-4);

  // Rescaling the prediction changes nothing.
  const cdi::AlbedoAccuracy red2 =
      cdi::intensity_chroma_error(cdi::scale(shifted, 2.0f), g, masks);
  CHECK(red2.intensity == doctest::Approx(red.intensity).epsilon(1e-9));
  CHECK(red2.chromaticity == doctest::Approx(red.chromaticity).epsilon(1e-9));
}

TEST_CASE("metrics match independent brute-force oracles on random pairs") {
  double worst_si = 0.0, worst_lmse = 0.0, worst_ssim = 0.0, worst_int = 0.0,
         worst_chroma = 0.0;
  for (int k = 0; k < 100; ++k) {
    const cdi::LinearImage p = random_image(
        16, 16, 3, cdi::ColorSpace::kLinear, 1000 + k, 0.05f, 1.0f);
    const cdi::LinearImage g = random_image(
        16, 16, 3, cdi::ColorSpace::kLinear, 2000 + k, 0.05f, 1.0f);

    worst_si = std::max(worst_si,
                        std::abs(cdi::si_rmse(p, g) - oracle_si_rmse(p, g)));
    worst_lmse = std::max(
        worst_lmse, std::abs(cdi::lmse(p, g) - oracle_lmse(p, g, 2, 1)));
    worst_ssim =
        std::max(worst_ssim, std::abs(cdi::ssim(p, g) - oracle_ssim(p, g)));

    const auto masks = quadrant_masks(16, 16);
    const cdi::AlbedoAccuracy lib = cdi::intensity_chroma_error(p, g, masks);
    const cdi::AlbedoAccuracy ref = oracle_intensity_chroma(p, g, masks);
    worst_int = std::max(worst_int, std::abs(lib.intensity - ref.intensity));
    worst_chroma =
        std::max(worst_chroma, std::abs(lib.chromaticity - ref.chromaticity));
  }
  CHECK(worst_si < 1e-5);
  CHECK(worst_lmse < 1e-5);
  CHECK(worst_ssim < 1e-5);
  CHECK(worst_int < 1e-5);
  CHECK(worst_chroma < 1e-5);
  MESSAGE("oracle gaps: si_rmse " << worst_si << " lmse " << worst_lmse
                                  << " ssim " << worst_ssim << " intensity "
                                  << worst_int << " chroma " << worst_chroma);
}

TEST_CASE("flat albedo cells are recovered as region masks") {
  cdi::LinearImage img(4, 2, 3, cdi::ColorSpace::kLinear);
  auto paint = [&img](int x, int y, float r, float g, float b) {
    img.at(0, y, x) = r;
    img.at(1, y, x) = g;
    img.at(2, y, x) = b;
  };
  // Row 0: A A B B / row 1: A C B B  (C is a singleton)
  paint(0, 0, 0.2f, 0.4f, 0.6f);
  paint(1, 0, 0.2f, 0.4f, 0.6f);
  paint(2, 0, 0.9f, 0.1f, 0.1f);
  paint(3, 0, 0.9f, 0.1f, 0.1f);
  paint(0, 1, 0.2f, 0.4f, 0.6f);
  paint(1, 1, 0.5f, 0.5f, 0.5f);
  paint(2, 1, 0.9f, 0.1f, 0.1f);
  paint(3, 1, 0.9f, 0.1f, 0.1f);

  const auto masks = cdi::albedo_region_masks(img);
  REQUIRE(masks.size() == 3);
  // First-appearance order: A, then B, then C.
  CHECK(masks[0].at(0, 0, 0) == 1.0f);
  CHECK(masks[0].at(0, 1, 0) == 1.0f);
  CHECK(masks[0].at(0, 0, 2) == 0.0f);
  CHECK(masks[1].at(0, 0, 2) == 1.0f);
  CHECK(masks[2].at(0, 1, 1) == 1.0f);

  // The masks partition the image.
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 4; ++x) {
      float sum = 0.0f;
      for (const auto& m : masks) sum += m.at(0, y, x);
      CHECK(sum == 1.0f);
    }
  }

  CHECK(cdi::albedo_region_masks(img, 2).size() == 2);

  // A generated scene's albedo resolves into its procedural cell count.
  cdi::SceneParams params;
  params.resolution = 32;
  params.seed = 42;
  const cdi::SceneGT scene = cdi::gen_scene(params, 7);
  const auto cells = cdi::albedo_region_masks(scene.components.albedo);
  CHECK(cells.size() >= 4);
  CHECK(cells.size() <= 12);
}

TEST_CASE("dataset evaluation writes deterministic well-formed reports") {
  const fs::path base = temp_dir("tmp_test_metrics");
  const fs::path root = base / "ds";
  fs::remove_all(root);
  cdi::SceneParams params;
  params.resolution = 32;
  params.seed = 91;
  const cdi::DatasetManifest manifest = cdi::gen_dataset(params, 12, root);

  // Perfect predictions: copy the ground-truth components.
  const fs::path perfect = base / "pred_perfect";
  // Rescaled predictions: albedo x2, shading /2 keeps the identity intact.
  const fs::path rescaled = base / "pred_rescaled";
  fs::remove_all(perfect);
  fs::remove_all(rescaled);
  for (const cdi::DatasetEntry& e : manifest.entries) {
    const cdi::SceneGT scene = cdi::load_scene(root / e.id);
    cdi::ComponentDir dir = cdi::to_component_dir(scene.components);
    cdi::save_component_dir(perfect / e.id, dir);

    cdi::IntrinsicComponents mod = scene.components;
    mod.albedo = cdi::scale(mod.albedo, 2.0f);
    mod.shading = cdi::scale(mod.shading, 0.5f);
    cdi::save_component_dir(rescaled / e.id, cdi::to_component_dir(mod));
  }

  const cdi::MetricReport report =
      cdi::evaluate_dataset(root, perfect, cdi::MetricTarget::kAlbedo);
  report.validate();
  REQUIRE(report.rows.size() == 12);
  CHECK(std::is_sorted(report.rows.begin(), report.rows.end(),
                       [](const cdi::MetricRow& a, const cdi::MetricRow& b) {
                         return a.scene_id < b.scene_id;
                       }));
  for (const cdi::MetricRow& row : report.rows) {
    CHECK(row.lmse == 0.0);
    CHECK(row.rmse == 0.0);
    CHECK(row.si_rmse == 0.0);
    CHECK(row.ssim == 1.0);
    CHECK(row.intensity == 0.0);
    CHECK(row.chromaticity == 0.0);
  }
  CHECK(report.mean.ssim == 1.0);
  CHECK(report.lmse_window == 4);
  CHECK(report.lmse_stride == 2);

  // Byte-identical CSV across repeated evaluation.
  const std::string csv = report.to_csv();
  const cdi::MetricReport again =
      cdi::evaluate_dataset(root, perfect, cdi::MetricTarget::kAlbedo);
  CHECK(csv == again.to_csv());
  CHECK(csv.starts_with(
      "scene_id,lmse,rmse,si_rmse,ssim,intensity,chromaticity\n"));
  CHECK(csv.find("\nmean,") != std::string::npos);
  CHECK(csv.find("scene_00000,0.000000,0.000000,0.000000,1.000000,0.000000,"
                 "0.000000\n") != std::string::npos);
  CHECK_FALSE(report.summary().empty());

  // Scale-invariant columns forgive the rescale; plain RMSE does not.
  const cdi::MetricReport scaled =
      cdi::evaluate_dataset(root, rescaled, cdi::MetricTarget::kAlbedo);
  CHECK(scaled.mean.si_rmse == 0.0);
  CHECK(scaled.mean.lmse == 0.0);
  CHECK(scaled.mean.intensity == 0.0);
  CHECK(scaled.mean.chromaticity == 0.0);
  CHECK(scaled.mean.rmse > 0.1);
  CHECK(scaled.mean.ssim < 1.0);

  // The shading target reads the other component pair.
  const cdi::MetricReport shading_report =
      cdi::evaluate_dataset(root, rescaled, cdi::MetricTarget::kShading);
  CHECK(shading_report.target == cdi::MetricTarget::kShading);
  CHECK(shading_report.mean.si_rmse == 0.0);
  CHECK(shading_report.mean.rmse > 0.0);

  // Split filtering keeps only matching scenes; unknown splits are errors.
  const auto train_entries = manifest.split_entries("train");
  if (!train_entries.empty()) {
    const cdi::MetricReport train = cdi::evaluate_dataset(
        root, perfect, cdi::MetricTarget::kAlbedo, "train");
    CHECK(train.rows.size() == train_entries.size());
  }
  CHECK_THROWS_AS(cdi::evaluate_dataset(root, perfect,
                                        cdi::MetricTarget::kAlbedo, "nope"),
                  cdi::DataError);
}
