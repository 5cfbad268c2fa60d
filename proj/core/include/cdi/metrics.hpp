#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cdi/image.hpp"

namespace cdi {

// Quantitative evaluation of estimated decompositions. Each metric is pinned
// to one fully documented variant so numbers are comparable across runs of
// this codebase; they are stand-ins for the various published protocols, not
// reproductions of them, and reports say so in their headers.
//
// All accumulation is double precision. Inputs must be non-empty, share one
// shape, and carry 1 or 3 channels.

// Plain root-mean-square error. NOT scale-invariant; reports label it.
double rmse(const LinearImage& pred, const LinearImage& gt);

// RMSE after least-squares alignment of pred onto gt: the single scale
// minimizing ||a*pred - gt||^2 over all channels jointly. Zero whenever pred
// matches gt up to one global positive scale.
double si_rmse(const LinearImage& pred, const LinearImage& gt);

// Local scale-invariant MSE over half-overlapping square windows. Each
// window fits its own alignment scale (all channels jointly); its squared
// error is normalized by the window's gt energy (zero-energy windows
// contribute zero); windows average uniformly. Window positions step by
// `stride` from each image edge, with a final window pinned flush to the
// far edge. The two-argument form uses side = min(H, W) / 8 (floor 2) and
// stride = side / 2 (floor 1). Zero when pred matches gt per-window up to
// per-window scales.
double lmse(const LinearImage& pred, const LinearImage& gt);
double lmse(const LinearImage& pred, const LinearImage& gt, int window,
            int stride);

// Mean structural similarity: 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
// K2 = 0.03, dynamic range L = max(gt) - min(gt) floored by kEpsilon;
// averaged over window positions fully inside the image and over channels.
// Requires height and width >= 11. Result in [-1, 1]; 1 iff pred == gt.
double ssim(const LinearImage& pred, const LinearImage& gt);

struct AlbedoAccuracy {
  double intensity = 0.0;     // mean squared luminance gap across masks, x100
  double chromaticity = 0.0;  // mean angle between mean RGB vectors, degrees
};

// Masked albedo accuracy over homogeneous-albedo regions. One global scale
// aligns pred to gt over the union of masked pixels; then per mask the
// intensity term is the squared difference between the mean luminances of
// the aligned prediction and of gt, and the chroma term is the angle between
// the two masks' mean RGB vectors. Both average uniformly over masks;
// intensity is scaled x100. Masks are 1-channel {0,1} images (a pixel counts
// when > 0.5); each mask must select at least one pixel. Both measures are
// invariant under a global positive rescale of pred.
AlbedoAccuracy intensity_chroma_error(const LinearImage& pred_albedo,
                                      const LinearImage& gt_albedo,
                                      const std::vector<LinearImage>& masks);

// Groups pixels whose RGB triples are exactly equal into {0,1} masks,
// ordered by first appearance in row-major scan; regions smaller than
// min_pixels are dropped. Recovers the generator's flat-albedo cells from a
// ground-truth albedo.
std::vector<LinearImage> albedo_region_masks(const LinearImage& albedo,
                                             int min_pixels = 1);

// Which component the windowed/global error family (lmse, rmse, si_rmse,
// ssim) evaluates; the intensity/chromaticity pair always measures albedo.
enum class MetricTarget { kAlbedo, kShading };

std::string metric_target_name(MetricTarget target);

struct MetricRow {
  std::string scene_id;
  double lmse = 0.0;
  double rmse = 0.0;
  double si_rmse = 0.0;
  double ssim = 0.0;
  double intensity = 0.0;
  double chromaticity = 0.0;
};

struct MetricReport {
  std::vector<MetricRow> rows;  // sorted by scene_id
  MetricRow mean;               // arithmetic means, scene_id "mean"

  // Config echo.
  MetricTarget target = MetricTarget::kAlbedo;
  int lmse_window = 0;
  int lmse_stride = 0;
  int ssim_window = 11;
  double ssim_sigma = 1.5;
  double ssim_k1 = 0.01;
  double ssim_k2 = 0.03;

  // Header row, one 6-decimal row per scene, then the mean row.
  std::string to_csv() const;
  // Human-readable digest, including the not-comparable-to-published-numbers
  // caveat and the config echo.
  std::string summary() const;
  // Aggregates equal arithmetic means of rows; ssim in [-1,1]; others >= 0.
  void validate() const;
};

// Evaluates the decompositions saved under components_dir/<scene_id>/
// against the dataset's ground truth, one row per manifest entry (filtered
// to `split` when non-empty), in scene_id order. Pure: same inputs yield a
// byte-identical CSV.
MetricReport evaluate_dataset(const std::filesystem::path& dataset_root,
                              const std::filesystem::path& components_dir,
                              MetricTarget target = MetricTarget::kAlbedo,
                              const std::string& split = "");

}  // namespace cdi
