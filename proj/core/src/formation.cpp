#include "cdi/formation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cdi/errors.hpp"

namespace cdi {
namespace {

constexpr double kIdentityTol = 1e-6;

void require_channels(const LinearImage& img, int channels, const char* what) {
  if (img.channels() != channels)
    throw DataError(std::string(what) + ": expected " +
                    std::to_string(channels) + " channels, got " +
                    std::to_string(img.channels()));
}

void require_non_negative(const LinearImage& img, const char* what) {
  if (min_value(img) < 0.0f)
    throw DataError(std::string(what) + ": negative values");
}

}  // namespace

ChromaMap::ChromaMap(LinearImage map) : map_(std::move(map)) {
  map_.validate();
  require_channels(map_, 2, "chroma map");
  for (float v : map_.data()) {
    if (!(v > 0.0f && v < 1.0f))
      throw DataError("chroma map: values must lie strictly in (0,1)");
  }
  map_ = map_.retagged(ColorSpace::kData);
}

double inverse_shading_value(double s) { return 1.0 / (s + 1.0); }

double shading_from_inverse_value(double d) { return 1.0 / d - 1.0; }

std::pair<double, double> chroma_forward_value(double r, double g, double b,
                                               double eps) {
  const double u = r / std::max(g, eps);
  const double v = b / std::max(g, eps);
  return {1.0 / (u + 1.0), 1.0 / (v + 1.0)};
}

std::pair<LinearImage, ChromaMap> shading_to_chroma(const LinearImage& shading,
                                                    float eps) {
  require_channels(shading, 3, "shading_to_chroma");
  require_non_negative(shading, "shading_to_chroma");
  if (eps <= 0.0f) throw DataError("shading_to_chroma: eps must be positive");

  LinearImage lum = luminance(shading);

  LinearImage map(shading.width(), shading.height(), 2, ColorSpace::kData);
  auto r = shading.channel(0);
  auto g = shading.channel(1);
  auto b = shading.channel(2);
  auto cu = map.channel(0);
  auto cv = map.channel(1);
  const double e = eps;
  for (std::size_t i = 0; i < shading.pixel_count(); ++i) {
    const auto [pu, pv] = chroma_forward_value(r[i], g[i], b[i], e);
    cu[i] = static_cast<float>(
        std::clamp(pu, double{kChromaMin}, double{kChromaMax}));
    cv[i] = static_cast<float>(
        std::clamp(pv, double{kChromaMin}, double{kChromaMax}));
  }
  return {std::move(lum), ChromaMap(std::move(map))};
}

LinearImage chroma_to_shading(const LinearImage& lum, const ChromaMap& chroma) {
  require_channels(lum, 1, "chroma_to_shading");
  require_non_negative(lum, "chroma_to_shading");

  const LinearImage* map = &chroma.image();
  LinearImage upsampled;
  if (map->width() != lum.width() || map->height() != lum.height()) {
    upsampled = resize_bilinear(*map, lum.width(), lum.height());
    map = &upsampled;
  }

  LinearImage out(lum.width(), lum.height(), 3, ColorSpace::kLinear);
  auto cu = map->channel(0);
  auto cv = map->channel(1);
  auto l = lum.channel(0);
  auto r = out.channel(0);
  auto g = out.channel(1);
  auto b = out.channel(2);
  for (std::size_t i = 0; i < lum.pixel_count(); ++i) {
    const double u = 1.0 / cu[i] - 1.0;
    const double v = 1.0 / cv[i] - 1.0;
    // Scale the direction (u, 1, v) so the output luminance equals l exactly.
    const double s = l[i] / luminance709(u, 1.0, v);
    r[i] = static_cast<float>(s * u);
    g[i] = static_cast<float>(s);
    b[i] = static_cast<float>(s * v);
  }
  return out;
}

LinearImage inverse_shading(const LinearImage& shading) {
  require_non_negative(shading, "inverse_shading");
  LinearImage out(shading.width(), shading.height(), shading.channels(),
                  ColorSpace::kLinear);
  auto src = shading.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i)
    dst[i] = static_cast<float>(inverse_shading_value(src[i]));
  return out;
}

LinearImage shading_from_inverse(const LinearImage& inverse) {
  for (float v : inverse.data()) {
    if (!(v > 0.0f && v <= 1.0f))
      throw DataError("shading_from_inverse: values must lie in (0,1]");
  }
  LinearImage out(inverse.width(), inverse.height(), inverse.channels(),
                  ColorSpace::kLinear);
  auto src = inverse.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i)
    dst[i] = static_cast<float>(shading_from_inverse_value(src[i]));
  return out;
}

LinearImage compute_residual(const LinearImage& image, const LinearImage& albedo,
                             const LinearImage& shading) {
  require_channels(image, 3, "compute_residual");
  return sub(image, mul(albedo, shading));
}

std::pair<LinearImage, LinearImage> grayscale_oracle(const LinearImage& image,
                                                     const LinearImage& albedo,
                                                     const LinearImage& shading,
                                                     float eps) {
  require_channels(image, 3, "grayscale_oracle");
  require_channels(albedo, 3, "grayscale_oracle");
  (void)shading;  // the construction only divides the image by the albedo
  const LinearImage rgb_shading = safe_div(image, albedo, eps);
  LinearImage gray_shading = luminance(rgb_shading);
  LinearImage gray_albedo = safe_div(image, gray_shading, eps);
  return {std::move(gray_albedo), std::move(gray_shading)};
}

std::pair<LinearImage, LinearImage> albedo_from_chroma(
    const LinearImage& image, const LinearImage& gray_shading,
    const ChromaMap& chroma_low, float eps) {
  require_channels(image, 3, "albedo_from_chroma");
  LinearImage shading_estimate = chroma_to_shading(gray_shading, chroma_low);
  LinearImage albedo_estimate = safe_div(image, shading_estimate, eps);
  return {std::move(albedo_estimate), std::move(shading_estimate)};
}

void IntrinsicComponents::validate() const {
  image.validate();
  albedo.validate();
  shading.validate();
  residual.validate();
  require_channels(image, 3, "components.image");
  require_channels(albedo, 3, "components.albedo");
  require_channels(shading, 3, "components.shading");
  require_channels(residual, 3, "components.residual");
  if (!image.same_shape(albedo) || !image.same_shape(shading) ||
      !image.same_shape(residual))
    throw DataError("components: diffuse layers must share the image shape");
  if (residual.color_space() != ColorSpace::kData)
    throw DataError("components.residual: must carry the signed data tag");

  if (max_abs_diff(image, add(mul(albedo, shading), residual)) > kIdentityTol)
    throw DataError("components: image != albedo*shading + residual");

  if (!gray_albedo.empty() || !gray_shading.empty()) {
    require_channels(gray_shading, 1, "components.gray_shading");
    require_channels(gray_albedo, 3, "components.gray_albedo");
    const LinearImage recon = mul(gray_albedo, broadcast(gray_shading, 3));
    auto s = gray_shading.channel(0);
    for (int c = 0; c < 3; ++c) {
      auto a = image.channel(c);
      auto b = recon.channel(c);
      for (std::size_t i = 0; i < image.pixel_count(); ++i) {
        if (s[i] >= kEpsilon &&
            std::abs(double{a[i]} - double{b[i]}) > kIdentityTol)
          throw DataError("components: image != gray_albedo*gray_shading");
      }
    }
  }

  if (!chroma_albedo.empty() || !chroma_shading.empty()) {
    require_channels(chroma_albedo, 3, "components.chroma_albedo");
    require_channels(chroma_shading, 3, "components.chroma_shading");
    const LinearImage recon = mul(chroma_albedo, chroma_shading);
    for (int c = 0; c < 3; ++c) {
      auto a = image.channel(c);
      auto b = recon.channel(c);
      auto s = chroma_shading.channel(c);
      for (std::size_t i = 0; i < image.pixel_count(); ++i) {
        if (s[i] >= kEpsilon &&
            std::abs(double{a[i]} - double{b[i]}) > kIdentityTol)
          throw DataError("components: image != chroma_albedo*chroma_shading");
      }
    }
  }

  if (!inverse.empty()) {
    if (!inverse.same_shape(shading))
      throw DataError("components.inverse: shape mismatch");
    auto d = inverse.data();
    auto s = shading.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (!(d[i] > 0.0f && d[i] <= 1.0f))
        throw DataError("components.inverse: values must lie in (0,1]");
      if (std::abs(double{d[i]} - inverse_shading_value(s[i])) > kIdentityTol)
        throw DataError("components.inverse: inconsistent with shading");
    }
  }
}

}  // namespace cdi
