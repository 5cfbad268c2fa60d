#pragma once

#include <optional>
#include <utility>

#include "cdi/image.hpp"

namespace cdi {

// Single guard constant for every epsilon-protected division in the
// decomposition model.
inline constexpr float kEpsilon = 1e-4f;

// Chroma values are kept strictly inside (0,1) so the inverse mapping is
// always defined; these are the f32 clamp rails (kChromaMax is two ulps
// below 1).
inline constexpr float kChromaMin = 1e-7f;
inline constexpr float kChromaMax = 0.99999988f;

// 2-channel map of bounded shading chroma: each channel is 1/(ratio+1) for
// the red/green and blue/green shading ratios, so 0.5 marks neutral light.
// Values are strictly in (0,1).
class ChromaMap {
 public:
  explicit ChromaMap(LinearImage map);

  const LinearImage& image() const { return map_; }
  int width() const { return map_.width(); }
  int height() const { return map_.height(); }

 private:
  LinearImage map_;
};

// One scene's decomposition: image = albedo * shading + residual, with the
// optional intermediate layers produced along the pipeline. Optional members
// are empty() when absent.
struct IntrinsicComponents {
  LinearImage image;     // observed RGB, non-negative
  LinearImage albedo;    // diffuse albedo, 3ch
  LinearImage shading;   // diffuse RGB shading, 3ch
  LinearImage residual;  // signed non-diffuse remainder, 3ch

  LinearImage gray_shading;    // 1ch shading under the grayscale model
  LinearImage gray_albedo;     // 3ch albedo under the grayscale model
  LinearImage chroma_albedo;   // albedo estimate via low-res chroma
  LinearImage chroma_shading;  // shading estimate via low-res chroma
  LinearImage rgb_shading;     // implied RGB shading image/albedo
  LinearImage inverse;         // 1/(shading+1), 3ch in (0,1]
  std::optional<ChromaMap> chroma;

  // Enforces shapes, tags, and the formation identities (elementwise within
  // 1e-6; the grayscale/chroma reconstructions are checked only where their
  // divisor clears kEpsilon). Throws DataError on violation.
  void validate() const;
};

// ---- scalar double-precision kernels

// Shading value <-> bounded inverse 1/(s+1); bijection between [0,inf) and
// (0,1].
double inverse_shading_value(double s);
double shading_from_inverse_value(double d);
// (r,g,b) shading -> bounded chroma pair via the channel ratios against
// green; eps guards a vanishing green channel.
std::pair<double, double> chroma_forward_value(double r, double g, double b,
                                               double eps);

// ---- image transforms

// RGB shading -> (luminance, bounded chroma). Requires non-negative 3ch.
std::pair<LinearImage, ChromaMap> shading_to_chroma(const LinearImage& shading,
                                                    float eps = kEpsilon);

// (luminance, chroma) -> RGB shading whose luminance equals `lum` exactly;
// the chroma map is bilinearly upsampled first when its resolution differs.
LinearImage chroma_to_shading(const LinearImage& lum, const ChromaMap& chroma);

// Elementwise bijection between shading and its bounded inverse.
LinearImage inverse_shading(const LinearImage& shading);
LinearImage shading_from_inverse(const LinearImage& inverse);

// residual = image - albedo*shading, tagged signed.
LinearImage compute_residual(const LinearImage& image, const LinearImage& albedo,
                             const LinearImage& shading);

// Grayscale-model reference decomposition from the ground-truth diffuse
// layers: rgb shading := image/albedo, gray shading := its luminance,
// gray albedo := image/gray shading. Returns (gray_albedo, gray_shading).
std::pair<LinearImage, LinearImage> grayscale_oracle(const LinearImage& image,
                                                     const LinearImage& albedo,
                                                     const LinearImage& shading,
                                                     float eps = kEpsilon);

// Albedo implied by a low-resolution chroma estimate: upsample chroma, build
// the RGB shading from (gray shading, chroma), divide it out of the image.
// Returns (albedo_estimate, shading_estimate).
std::pair<LinearImage, LinearImage> albedo_from_chroma(
    const LinearImage& image, const LinearImage& gray_shading,
    const ChromaMap& chroma_low, float eps = kEpsilon);

}  // namespace cdi
