#pragma once

#include "cdi/formation.hpp"
#include "cdi/image.hpp"

namespace cdi {

// Illumination-aware edits on a decomposition. Each edit is a pure function
// of the component images: it works the same whether the components came
// from ground truth, a trained pipeline, or a mix of both. Results are
// linear-light images clipped to [0,1]; callers encode for display
// (write_png via linear_to_srgb).

// Diffuse-only reconstruction albedo * shading: dropping the residual
// removes specular highlights (and re-introduces clipped detail, see
// recover_highlights for re-exposure). Requires 3-channel albedo and
// shading of one shape.
LinearImage despecularize(const IntrinsicComponents& comps);

// Replaces the shading's color with its luminance, neutralizing per-pixel
// illumination chroma while preserving intensity; keep_residual adds back
// the positive (specular) part of the residual on top. The output's implied
// shading (output / albedo) has exactly neutral chroma wherever the albedo
// is above the division guard.
LinearImage whitebalance(const IntrinsicComponents& comps, bool keep_residual);

struct HighlightRecovery {
  LinearImage image;         // re-exposed diffuse reconstruction
  LinearImage clipped_mask;  // 1ch {0,1}: pixels detected as over-exposed
};

// Rebuilds detail inside over-exposed regions: the diffuse product
// albedo * shading is unbounded where the observation saturated (the
// residual turns negative there), so scaling it down by `exposure` < 1
// reveals structure the camera clipped. A pixel is flagged clipped when
// any channel's residual lies below -tau. exposure must be positive and
// tau non-negative.
HighlightRecovery recover_highlights(const IntrinsicComponents& comps,
                                     float exposure, float tau = 0.02f);

}  // namespace cdi
