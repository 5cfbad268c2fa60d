#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cdi/formation.hpp"
#include "cdi/image.hpp"

namespace cdi {

// Inclusive integer range.
struct CountRange {
  int lo = 0;
  int hi = 0;
};

// Knobs for one procedural scene. `seed` is the dataset base seed; each
// scene derives its own stream from it.
struct SceneParams {
  int resolution = 64;                  // power of two, >= 32
  CountRange albedo_regions{4, 12};     // flat-color cells per scene
  CountRange lights{1, 3};
  float light_chroma_strength = 0.6f;   // 0 = neutral white lights
  float specular_strength = 0.4f;       // 0 = Lambertian world
  float shininess = 24.0f;              // highlight exponent
  float clip_probability = 0.25f;       // chance a scene is over-exposed
  float ambient = 0.1f;                 // positive floor keeps shading > 0
  std::uint64_t seed = 0;

  void validate() const;  // throws DataError
};

struct Light {
  std::array<float, 3> direction;  // unit vector, z > 0
  std::array<float, 3> color;      // per-channel intensity, post scaling
};

// Ground truth for one scene. The observed image is the clipped sum of the
// diffuse product and a specular term: image = clip(albedo*shading + spec).
// The specular term is capped to the head-room 1 - albedo*shading wherever
// the diffuse product is below 1, so sensor clipping is caused by diffuse
// over-exposure alone; that makes clipped_mask recoverable exactly from the
// sign of the residual.
struct SceneGT {
  IntrinsicComponents components;
  LinearImage specular_mask;  // 1ch {0,1}: shiny-region pixels (superset of spec > 0)
  LinearImage clipped_mask;   // 1ch {0,1}: pixels whose pre-clip value exceeded 1
  std::vector<Light> lights;
};

// Training targets derived from ground truth.
struct SceneTargets {
  ChromaMap chroma;            // of image/albedo, full resolution
  LinearImage inverse;         // 1/(shading+1), 3ch
  LinearImage gray_shading;    // 1ch
  LinearImage gray_albedo;     // 3ch
  LinearImage rgb_shading;     // image / albedo
};

// Deterministic: the same (params, seed) yields a bit-identical scene.
SceneGT gen_scene(const SceneParams& params, std::uint64_t seed);

SceneTargets make_targets(const SceneGT& scene);

// Per-scene seed stream and the deterministic train/val/test assignment
// (80/10/10 by hash of the scene seed).
std::uint64_t scene_seed(std::uint64_t base_seed, int index);
std::string split_for_seed(std::uint64_t seed);

// masks.iidf packs [specular, clipped] as two channels.
void save_scene(const std::filesystem::path& dir, const SceneGT& scene,
                std::uint64_t seed, const std::string& split);
SceneGT load_scene(const std::filesystem::path& dir);

struct DatasetEntry {
  std::string id;      // directory name under the dataset root
  std::uint64_t seed;
  std::string split;   // train | val | test
};

struct DatasetManifest {
  int count = 0;
  int resolution = 0;
  std::uint64_t base_seed = 0;
  std::vector<DatasetEntry> entries;

  std::vector<DatasetEntry> split_entries(const std::string& split) const;
};

// Writes n scenes under root/scene_#####/ plus root/manifest.txt.
DatasetManifest gen_dataset(const SceneParams& params, int n,
                            const std::filesystem::path& root);
DatasetManifest load_dataset_manifest(const std::filesystem::path& root);

}  // namespace cdi
