#include "cdi/edits.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cdi/errors.hpp"

namespace cdi {
namespace {

void require_diffuse_pair(const IntrinsicComponents& comps, const char* op) {
  if (comps.albedo.empty() || comps.shading.empty())
    throw DataError(std::string(op) + ": albedo and shading required");
  if (comps.albedo.channels() != 3 || comps.shading.channels() != 3)
    throw DataError(std::string(op) + ": albedo and shading must be 3-channel");
  if (!comps.albedo.same_shape(comps.shading))
    throw DataError(std::string(op) + ": albedo and shading shapes differ");
}

void require_residual(const IntrinsicComponents& comps, const char* op) {
  if (comps.residual.empty())
    throw DataError(std::string(op) + ": residual required");
  if (!comps.residual.same_shape(comps.albedo))
    throw DataError(std::string(op) + ": residual shape differs");
}

}  // namespace

LinearImage despecularize(const IntrinsicComponents& comps) {
  require_diffuse_pair(comps, "despecularize");
  return clip(mul(comps.albedo, comps.shading), 0.0f, 1.0f);
}

LinearImage whitebalance(const IntrinsicComponents& comps, bool keep_residual) {
  require_diffuse_pair(comps, "whitebalance");
  const LinearImage neutral = broadcast(luminance(comps.shading), 3);
  LinearImage out = mul(comps.albedo, neutral);
  if (keep_residual) {
    require_residual(comps, "whitebalance");
    out = add(out, clip(comps.residual, 0.0f,
                        std::numeric_limits<float>::infinity()));
  }
  return clip(out, 0.0f, 1.0f);
}

HighlightRecovery recover_highlights(const IntrinsicComponents& comps,
                                     float exposure, float tau) {
  require_diffuse_pair(comps, "recover_highlights");
  require_residual(comps, "recover_highlights");
  if (!(exposure > 0.0f) || !std::isfinite(exposure))
    throw DataError("recover_highlights: exposure must be positive");
  if (!(tau >= 0.0f) || !std::isfinite(tau))
    throw DataError("recover_highlights: tau must be non-negative");

  HighlightRecovery out;
  out.clipped_mask = LinearImage(comps.residual.width(),
                                 comps.residual.height(), 1, ColorSpace::kData);
  const std::size_t plane = comps.residual.pixel_count();
  auto mask = out.clipped_mask.channel(0);
  for (std::size_t i = 0; i < plane; ++i) {
    float lowest = comps.residual.channel(0)[i];
    for (int c = 1; c < comps.residual.channels(); ++c)
      lowest = std::min(lowest, comps.residual.channel(c)[i]);
    mask[i] = lowest < -tau ? 1.0f : 0.0f;
  }
  out.image =
      clip(scale(mul(comps.albedo, comps.shading), exposure), 0.0f, 1.0f);
  return out;
}

}  // namespace cdi
