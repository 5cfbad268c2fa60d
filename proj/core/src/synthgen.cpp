#include "cdi/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "cdi/component_io.hpp"
#include "cdi/errors.hpp"
#include "cdi/rng.hpp"

namespace cdi {
namespace {

constexpr double kSpecHeadroomSlack = 1e-6;  // keeps capped pixels below 1 in f32
constexpr std::uint64_t kSeedStride = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kSplitSalt = 0xc2b2ae3d27d4eb4fULL;

bool is_pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

Vec3 normalized(const Vec3& v) {
  const double n = std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z);
  return {v.x / n, v.y / n, v.z / n};
}

double dot(const Vec3& a, const Vec3& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

std::string format_triple(const std::array<float, 3>& v) {
  std::ostringstream out;
  out.precision(9);
  out << v[0] << " " << v[1] << " " << v[2];
  return out.str();
}

std::array<float, 3> parse_triple(const std::string& text) {
  std::istringstream in(text);
  std::array<float, 3> v{};
  if (!(in >> v[0] >> v[1] >> v[2]))
    throw DataError("scene metadata: cannot parse triple '" + text + "'");
  return v;
}

}  // namespace

void SceneParams::validate() const {
  if (!is_pow2(resolution) || resolution < 32)
    throw DataError("scene params: resolution must be a power of two >= 32");
  if (albedo_regions.lo < 1 || albedo_regions.lo > albedo_regions.hi)
    throw DataError("scene params: empty albedo region range");
  if (lights.lo < 1 || lights.lo > lights.hi || lights.hi > 3)
    throw DataError("scene params: light count range must sit inside [1,3]");
  if (!(light_chroma_strength >= 0.0f && light_chroma_strength <= 1.0f))
    throw DataError("scene params: light_chroma_strength outside [0,1]");
  if (!(specular_strength >= 0.0f && specular_strength <= 1.0f))
    throw DataError("scene params: specular_strength outside [0,1]");
  if (!(clip_probability >= 0.0f && clip_probability <= 1.0f))
    throw DataError("scene params: clip_probability outside [0,1]");
  if (!(shininess > 0.0f))
    throw DataError("scene params: shininess must be positive");
  if (!(ambient > 0.0f))
    throw DataError("scene params: ambient must be positive (keeps shading bounded away from zero)");
}

SceneGT gen_scene(const SceneParams& params, std::uint64_t seed) {
  params.validate();
  Rng rng(seed);
  const int res = params.resolution;
  const std::size_t n_px = static_cast<std::size_t>(res) * res;

  // Flat-color albedo cells: nearest-site partition of the unit square.
  const int n_regions =
      rng.uniform_int(params.albedo_regions.lo, params.albedo_regions.hi);
  std::vector<double> site_x(n_regions), site_y(n_regions);
  std::vector<std::array<float, 3>> region_color(n_regions);
  std::vector<char> region_shiny(n_regions);
  for (int j = 0; j < n_regions; ++j) {
    site_x[j] = rng.uniform();
    site_y[j] = rng.uniform();
  }
  for (int j = 0; j < n_regions; ++j) {
    for (int c = 0; c < 3; ++c)
      region_color[j][c] = static_cast<float>(rng.uniform(0.1, 0.9));
  }
  for (int j = 0; j < n_regions; ++j) region_shiny[j] = rng.bernoulli(0.5);

  // Smooth height field from signed Gaussian bumps; the surface normal
  // comes from its analytic gradient.
  const int n_bumps = rng.uniform_int(3, 8);
  std::vector<double> bump_cx(n_bumps), bump_cy(n_bumps), bump_sigma(n_bumps),
      bump_amp(n_bumps);
  for (int b = 0; b < n_bumps; ++b) {
    bump_cx[b] = rng.uniform();
    bump_cy[b] = rng.uniform();
    bump_sigma[b] = rng.uniform(0.08, 0.25);
    const double a = rng.uniform(0.1, 0.35);
    bump_amp[b] = rng.bernoulli(0.5) ? a : -a;
  }

  // Directional lights on the upper hemisphere. A zero chroma strength makes
  // every channel identical bit for bit.
  const int n_lights = rng.uniform_int(params.lights.lo, params.lights.hi);
  std::vector<Vec3> light_dir(n_lights);
  std::vector<std::array<double, 3>> light_color(n_lights);
  for (int k = 0; k < n_lights; ++k) {
    const double z = rng.uniform(0.25, 1.0);
    const double phi = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    const double rxy = std::sqrt(std::max(0.0, 1.0 - z * z));
    light_dir[k] = {rxy * std::cos(phi), rxy * std::sin(phi), z};
    const double base = rng.uniform(0.3, 1.0);
    for (int c = 0; c < 3; ++c) {
      const double tint = rng.uniform(-0.95, 0.95);
      light_color[k][c] = base * (1.0 + double{params.light_chroma_strength} * tint);
    }
  }

  // Per-pixel region id, normal, and raw (pre-exposure) shading.
  std::vector<int> region_of(n_px);
  std::vector<Vec3> normal(n_px);
  std::vector<std::array<double, 3>> shading_raw(n_px);
  LinearImage albedo(res, res, 3, ColorSpace::kLinear);
  for (int y = 0; y < res; ++y) {
    const double py = (y + 0.5) / res;
    for (int x = 0; x < res; ++x) {
      const double px = (x + 0.5) / res;
      const std::size_t i = static_cast<std::size_t>(y) * res + x;

      int best = 0;
      double best_d = 1e30;
      for (int j = 0; j < n_regions; ++j) {
        const double dx = px - site_x[j];
        const double dy = py - site_y[j];
        const double d = dx * dx + dy * dy;
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      region_of[i] = best;
      for (int c = 0; c < 3; ++c) albedo.at(c, y, x) = region_color[best][c];

      double gx = 0.0, gy = 0.0;
      for (int b = 0; b < n_bumps; ++b) {
        const double dx = px - bump_cx[b];
        const double dy = py - bump_cy[b];
        const double s2 = bump_sigma[b] * bump_sigma[b];
        const double g = bump_amp[b] * std::exp(-(dx * dx + dy * dy) / (2.0 * s2));
        gx += g * (-dx / s2);
        gy += g * (-dy / s2);
      }
      const Vec3 n = normalized({-gx, -gy, 1.0});
      normal[i] = n;

      for (int c = 0; c < 3; ++c) shading_raw[i][c] = params.ambient;
      for (int k = 0; k < n_lights; ++k) {
        const double ndotl = std::max(0.0, dot(n, light_dir[k]));
        if (ndotl <= 0.0) continue;
        for (int c = 0; c < 3; ++c)
          shading_raw[i][c] += light_color[k][c] * ndotl;
      }
    }
  }

  // Exposure: rescale all light energy so the diffuse product peaks at 0.9
  // (safe) or overshoots 1 (deliberately clipped scene).
  double raw_max = 0.0;
  for (std::size_t i = 0; i < n_px; ++i) {
    const int y = static_cast<int>(i) / res;
    const int x = static_cast<int>(i) % res;
    for (int c = 0; c < 3; ++c)
      raw_max = std::max(raw_max, double{albedo.at(c, y, x)} * shading_raw[i][c]);
  }
  const bool clip_scene = rng.bernoulli(params.clip_probability);
  const double overshoot = rng.uniform(1.2, 1.8);
  const double target = clip_scene ? overshoot : 0.9;
  const double exposure = raw_max > 0.0 ? target / raw_max : 1.0;

  LinearImage shading(res, res, 3, ColorSpace::kLinear);
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x)
      for (int c = 0; c < 3; ++c)
        shading.at(c, y, x) = static_cast<float>(
            exposure * shading_raw[static_cast<std::size_t>(y) * res + x][c]);

  std::vector<Light> lights(n_lights);
  for (int k = 0; k < n_lights; ++k) {
    lights[k].direction = {static_cast<float>(light_dir[k].x),
                           static_cast<float>(light_dir[k].y),
                           static_cast<float>(light_dir[k].z)};
    lights[k].color = {static_cast<float>(exposure * light_color[k][0]),
                       static_cast<float>(exposure * light_color[k][1]),
                       static_cast<float>(exposure * light_color[k][2])};
  }

  // Diffuse product through the same f32 op users of the scene will apply,
  // so downstream recomputation is bitwise identical.
  const LinearImage diffuse = mul(albedo, shading);

  // Phong highlight on shiny cells, capped to the head-room below 1 so only
  // diffuse over-exposure can clip.
  const bool with_spec = params.specular_strength > 0.0f;
  const Vec3 view{0.0, 0.0, 1.0};
  LinearImage image(res, res, 3, ColorSpace::kLinear);
  LinearImage specular_mask(res, res, 1, ColorSpace::kData);
  LinearImage clipped_mask(res, res, 1, ColorSpace::kData);
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * res + x;
      const bool shiny = with_spec && region_shiny[region_of[i]];
      specular_mask.at(0, y, x) = shiny ? 1.0f : 0.0f;

      double spec = 0.0;
      if (shiny) {
        const Vec3& n = normal[i];
        for (int k = 0; k < n_lights; ++k) {
          const double ndotl = dot(n, light_dir[k]);
          if (ndotl <= 0.0) continue;
          const Vec3 refl{2.0 * ndotl * n.x - light_dir[k].x,
                          2.0 * ndotl * n.y - light_dir[k].y,
                          2.0 * ndotl * n.z - light_dir[k].z};
          const double rv = std::max(0.0, dot(refl, view));
          if (rv > 0.0)
            spec += std::pow(rv, double{params.shininess}) *
                    (exposure * (light_color[k][0] + light_color[k][1] +
                                 light_color[k][2]) /
                     3.0);
        }
        spec *= double{params.specular_strength};
      }

      bool clipped = false;
      for (int c = 0; c < 3; ++c) {
        const double p = diffuse.at(c, y, x);
        const double headroom = std::max(0.0, (1.0 - p) * (1.0 - kSpecHeadroomSlack));
        const double pre_clip = p + std::min(spec, headroom);
        if (pre_clip > 1.0) clipped = true;
        image.at(c, y, x) = static_cast<float>(std::min(pre_clip, 1.0));
      }
      clipped_mask.at(0, y, x) = clipped ? 1.0f : 0.0f;
    }
  }

  SceneGT scene;
  scene.components.image = std::move(image);
  scene.components.albedo = std::move(albedo);
  scene.components.shading = std::move(shading);
  scene.components.residual = compute_residual(
      scene.components.image, scene.components.albedo, scene.components.shading);
  scene.specular_mask = std::move(specular_mask);
  scene.clipped_mask = std::move(clipped_mask);
  scene.lights = std::move(lights);
  return scene;
}

SceneTargets make_targets(const SceneGT& scene) {
  const IntrinsicComponents& comps = scene.components;
  LinearImage rgb_shading = safe_div(comps.image, comps.albedo, kEpsilon);
  auto [lum, chroma] = shading_to_chroma(rgb_shading);
  auto [gray_albedo, gray_shading] =
      grayscale_oracle(comps.image, comps.albedo, comps.shading);
  return SceneTargets{std::move(chroma), inverse_shading(comps.shading),
                      std::move(gray_shading), std::move(gray_albedo),
                      std::move(rgb_shading)};
}

std::uint64_t scene_seed(std::uint64_t base_seed, int index) {
  return splitmix64(base_seed + kSeedStride * static_cast<std::uint64_t>(index + 1));
}

std::string split_for_seed(std::uint64_t seed) {
  const std::uint64_t h = splitmix64(seed ^ kSplitSalt);
  const double r = static_cast<double>(h >> 11) * 0x1.0p-53;
  if (r < 0.8) return "train";
  if (r < 0.9) return "val";
  return "test";
}

void save_scene(const std::filesystem::path& dir, const SceneGT& scene,
                std::uint64_t seed, const std::string& split) {
  ComponentDir cd = to_component_dir(scene.components);

  LinearImage masks(scene.specular_mask.width(), scene.specular_mask.height(),
                    2, ColorSpace::kData);
  std::copy(scene.specular_mask.channel(0).begin(),
            scene.specular_mask.channel(0).end(), masks.channel(0).begin());
  std::copy(scene.clipped_mask.channel(0).begin(),
            scene.clipped_mask.channel(0).end(), masks.channel(1).begin());
  cd.add("masks", masks);

  cd.metadata.set_u64("seed", seed);
  cd.metadata.set("split", split);
  cd.metadata.set_int("light_count", static_cast<int>(scene.lights.size()));
  for (std::size_t k = 0; k < scene.lights.size(); ++k) {
    const std::string prefix = "light" + std::to_string(k);
    cd.metadata.set(prefix + "_direction", format_triple(scene.lights[k].direction));
    cd.metadata.set(prefix + "_color", format_triple(scene.lights[k].color));
  }
  save_component_dir(dir, cd);
}

SceneGT load_scene(const std::filesystem::path& dir) {
  const ComponentDir cd = load_component_dir(dir);
  SceneGT scene;
  scene.components = components_from_dir(cd);

  const LinearImage& masks = cd.get("masks");
  if (masks.channels() != 2)
    throw DataError("scene: masks must have 2 channels at " + dir.string());
  scene.specular_mask =
      LinearImage(masks.width(), masks.height(), 1, ColorSpace::kData);
  scene.clipped_mask =
      LinearImage(masks.width(), masks.height(), 1, ColorSpace::kData);
  std::copy(masks.channel(0).begin(), masks.channel(0).end(),
            scene.specular_mask.channel(0).begin());
  std::copy(masks.channel(1).begin(), masks.channel(1).end(),
            scene.clipped_mask.channel(0).begin());

  const int n_lights = cd.metadata.get_int_or("light_count", 0);
  for (int k = 0; k < n_lights; ++k) {
    const std::string prefix = "light" + std::to_string(k);
    Light light;
    light.direction = parse_triple(cd.metadata.get(prefix + "_direction"));
    light.color = parse_triple(cd.metadata.get(prefix + "_color"));
    scene.lights.push_back(light);
  }
  return scene;
}

std::vector<DatasetEntry> DatasetManifest::split_entries(
    const std::string& split) const {
  std::vector<DatasetEntry> out;
  for (const DatasetEntry& e : entries)
    if (e.split == split) out.push_back(e);
  return out;
}

DatasetManifest gen_dataset(const SceneParams& params, int n,
                            const std::filesystem::path& root) {
  params.validate();
  if (n < 1) throw DataError("gen_dataset: scene count must be positive");

  DatasetManifest manifest;
  manifest.count = n;
  manifest.resolution = params.resolution;
  manifest.base_seed = params.seed;

  KvFile kv;
  kv.set("format", "cdi-dataset-v1");
  kv.set_int("count", n);
  kv.set_int("resolution", params.resolution);
  kv.set_u64("seed", params.seed);

  for (int i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "scene_%05d", i);
    const std::uint64_t s = scene_seed(params.seed, i);
    const std::string split = split_for_seed(s);
    const SceneGT scene = gen_scene(params, s);
    save_scene(root / id, scene, s, split);
    manifest.entries.push_back({id, s, split});
    kv.set(id, std::to_string(s) + " " + split);
  }
  kv.save(root / "manifest.txt");
  return manifest;
}

DatasetManifest load_dataset_manifest(const std::filesystem::path& root) {
  const KvFile kv = KvFile::load(root / "manifest.txt");
  if (kv.get_or("format", "") != "cdi-dataset-v1")
    throw DataError("dataset: unsupported manifest format at " + root.string());

  DatasetManifest manifest;
  manifest.count = kv.get_int("count");
  manifest.resolution = kv.get_int("resolution");
  manifest.base_seed = kv.get_u64("seed");
  for (const auto& [k, v] : kv.entries()) {
    if (k.rfind("scene_", 0) != 0) continue;
    std::istringstream in(v);
    DatasetEntry e;
    e.id = k;
    std::string seed_text;
    if (!(in >> seed_text >> e.split))
      throw DataError("dataset: bad manifest entry '" + k + "'");
    e.seed = std::stoull(seed_text);
    manifest.entries.push_back(e);
  }
  if (static_cast<int>(manifest.entries.size()) != manifest.count)
    throw DataError("dataset: manifest count mismatch at " + root.string());
  return manifest;
}

}  // namespace cdi
