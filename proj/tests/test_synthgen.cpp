#include <cmath>
#include <cstring>
#include <filesystem>
#include <set>

#include "cdi/component_io.hpp"
#include "cdi/errors.hpp"
#include "cdi/formation.hpp"
#include "cdi/synthgen.hpp"
#include "doctest.h"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace cdi;
using cdi::test::temp_dir;

namespace {

bool bitwise_equal(const LinearImage& a, const LinearImage& b) {
  return a.same_shape(b) && a.color_space() == b.color_space() &&
         std::memcmp(a.data().data(), b.data().data(),
                     a.size() * sizeof(float)) == 0;
}

SceneParams base_params() {
  SceneParams p;
  p.resolution = 32;
  return p;
}

}  // namespace

TEST_CASE("scene params are validated") {
  CHECK_NOTHROW(base_params().validate());
  SceneParams p = base_params();
  p.resolution = 48;
  CHECK_THROWS_AS(p.validate(), DataError);
  p = base_params();
  p.resolution = 16;
  CHECK_THROWS_AS(p.validate(), DataError);
  p = base_params();
  p.lights = {0, 2};
  CHECK_THROWS_AS(p.validate(), DataError);
  p = base_params();
  p.lights = {2, 4};
  CHECK_THROWS_AS(p.validate(), DataError);
  p = base_params();
  p.albedo_regions = {5, 3};
  CHECK_THROWS_AS(p.validate(), DataError);
  p = base_params();
  p.ambient = 0.0f;
  CHECK_THROWS_AS(p.validate(), DataError);
  p = base_params();
  p.clip_probability = 1.5f;
  CHECK_THROWS_AS(p.validate(), DataError);
}

TEST_CASE("gen_scene is deterministic bit for bit") {
  const SceneParams p = base_params();
  const SceneGT a = gen_scene(p, 123);
  const SceneGT b = gen_scene(p, 123);
  CHECK(bitwise_equal(a.components.image, b.components.image));
  CHECK(bitwise_equal(a.components.albedo, b.components.albedo));
  CHECK(bitwise_equal(a.components.shading, b.components.shading));
  CHECK(bitwise_equal(a.components.residual, b.components.residual));
  CHECK(bitwise_equal(a.specular_mask, b.specular_mask));
  CHECK(bitwise_equal(a.clipped_mask, b.clipped_mask));
  REQUIRE(a.lights.size() == b.lights.size());
  for (size_t k = 0; k < a.lights.size(); ++k) {
    CHECK(a.lights[k].color == b.lights[k].color);
    CHECK(a.lights[k].direction == b.lights[k].direction);
  }

  const SceneGT c = gen_scene(p, 124);
  CHECK_FALSE(bitwise_equal(a.components.image, c.components.image));
}

TEST_CASE("lambertian world: zero residual, empty masks, valid components") {
  SceneParams p = base_params();
  p.specular_strength = 0.0f;
  p.clip_probability = 0.0f;
  for (uint64_t seed : {1u, 7u, 99u}) {
    const SceneGT scene = gen_scene(p, seed);
    CHECK(max_value(scene.specular_mask) == 0.0f);
    CHECK(max_value(scene.clipped_mask) == 0.0f);
    CHECK(min_value(scene.components.residual) == 0.0f);
    CHECK(max_value(scene.components.residual) == 0.0f);
    CHECK(max_value(scene.components.image) <= 0.9f + 1e-6f);
    CHECK_NOTHROW(scene.components.validate());
  }
}

TEST_CASE("neutral lights give an exactly neutral shading chroma") {
  SceneParams p = base_params();
  p.light_chroma_strength = 0.0f;
  const SceneGT scene = gen_scene(p, 5);
  const auto [lum, chroma] = shading_to_chroma(scene.components.shading);
  for (float v : chroma.image().data()) CHECK(v == 0.5f);
}

TEST_CASE("forced clipping: masks, residual signs, and saturation") {
  SceneParams p = base_params();
  p.clip_probability = 1.0f;
  int scenes_with_clips = 0;
  for (uint64_t seed : {11u, 12u, 13u}) {
    const SceneGT scene = gen_scene(p, seed);
    CHECK(max_value(scene.components.image) <= 1.0f);
    CHECK_NOTHROW(scene.components.validate());

    const LinearImage& r = scene.components.residual;
    const LinearImage& img = scene.components.image;
    const int res = p.resolution;
    bool any_clip = false;
    for (int y = 0; y < res; ++y) {
      for (int x = 0; x < res; ++x) {
        float rmin = 1e9f, rmax = -1e9f, imax = -1e9f;
        for (int c = 0; c < 3; ++c) {
          rmin = std::min(rmin, r.at(c, y, x));
          rmax = std::max(rmax, r.at(c, y, x));
          imax = std::max(imax, img.at(c, y, x));
        }
        // Negative residual only where the generator recorded clipping;
        // positive residual only inside the shiny regions.
        if (rmin < 0.0f) {
          CHECK(scene.clipped_mask.at(0, y, x) == 1.0f);
          CHECK(imax == 1.0f);
        }
        if (rmax > 0.0f) CHECK(scene.specular_mask.at(0, y, x) == 1.0f);
        if (scene.clipped_mask.at(0, y, x) == 1.0f) any_clip = true;
      }
    }
    if (any_clip) ++scenes_with_clips;
  }
  CHECK(scenes_with_clips == 3);
}

TEST_CASE("clipped mask matches the sign of the residual exactly") {
  SceneParams p = base_params();
  p.clip_probability = 1.0f;
  p.specular_strength = 0.8f;
  for (uint64_t seed : {21u, 22u}) {
    const SceneGT scene = gen_scene(p, seed);
    const LinearImage& r = scene.components.residual;
    const int res = p.resolution;
    for (int y = 0; y < res; ++y) {
      for (int x = 0; x < res; ++x) {
        float rmin = 1e9f;
        for (int c = 0; c < 3; ++c) rmin = std::min(rmin, r.at(c, y, x));
        const bool negative = rmin < 0.0f;
        const bool clipped = scene.clipped_mask.at(0, y, x) == 1.0f;
        CHECK(negative == clipped);
      }
    }
  }
}

TEST_CASE("albedo sparsity: distinct colors bounded by the region count") {
  SceneParams p = base_params();
  p.albedo_regions = {4, 9};
  const SceneGT scene = gen_scene(p, 31);
  std::set<std::array<float, 3>> colors;
  const LinearImage& a = scene.components.albedo;
  for (int y = 0; y < p.resolution; ++y)
    for (int x = 0; x < p.resolution; ++x)
      colors.insert({a.at(0, y, x), a.at(1, y, x), a.at(2, y, x)});
  CHECK(colors.size() <= 9);
  CHECK(colors.size() >= 2);
  CHECK(min_value(a) >= 0.1f);
  CHECK(max_value(a) <= 0.9f);
}

TEST_CASE("make_targets: ranges, identities, and chroma round trip") {
  SceneParams p = base_params();
  p.clip_probability = 0.5f;
  for (uint64_t seed : {41u, 42u, 43u}) {
    const SceneGT scene = gen_scene(p, seed);
    const SceneTargets t = make_targets(scene);

    CHECK(min_value(t.inverse) > 0.0f);
    CHECK(max_value(t.inverse) <= 1.0f);
    CHECK(max_abs_diff(t.inverse, inverse_shading(scene.components.shading)) == 0.0);

    // Grayscale reconstruction wherever the gray shading clears the guard.
    const LinearImage recon =
        mul(t.gray_albedo, broadcast(t.gray_shading, 3));
    auto im = scene.components.image.data();
    auto re = recon.data();
    for (int c = 0; c < 3; ++c) {
      auto s = t.gray_shading.channel(0);
      for (size_t i = 0; i < s.size(); ++i) {
        if (s[i] >= kEpsilon) {
          const size_t j = c * s.size() + i;
          CHECK(std::abs(double{im[j]} - double{re[j]}) < 1e-5);
        }
      }
    }

    // The chroma target reconstructs the implied RGB shading everywhere.
    const LinearImage back =
        chroma_to_shading(luminance(t.rgb_shading), t.chroma);
    CHECK(max_abs_diff(back, t.rgb_shading) < 1e-4);
  }

  // A neutral-lit Lambertian scene has a neutral chroma target.
  SceneParams neutral = base_params();
  neutral.light_chroma_strength = 0.0f;
  neutral.specular_strength = 0.0f;
  neutral.clip_probability = 0.0f;
  const SceneTargets t = make_targets(gen_scene(neutral, 44));
  for (float v : t.chroma.image().data())
    CHECK(v == doctest::Approx(0.5f).epsilon(1e-6));
}

TEST_CASE("scene save/load round trip") {
  const fs::path dir = temp_dir("tmp_test_synthgen") / "scene_rt";
  SceneParams p = base_params();
  p.clip_probability = 1.0f;
  const SceneGT scene = gen_scene(p, 51);
  save_scene(dir, scene, 51, "val");

  const SceneGT back = load_scene(dir);
  CHECK(bitwise_equal(back.components.image, scene.components.image));
  CHECK(bitwise_equal(back.components.albedo, scene.components.albedo));
  CHECK(bitwise_equal(back.components.shading, scene.components.shading));
  CHECK(bitwise_equal(back.components.residual, scene.components.residual));
  CHECK(bitwise_equal(back.specular_mask, scene.specular_mask));
  CHECK(bitwise_equal(back.clipped_mask, scene.clipped_mask));
  REQUIRE(back.lights.size() == scene.lights.size());
  for (size_t k = 0; k < back.lights.size(); ++k) {
    CHECK(back.lights[k].color == scene.lights[k].color);
    CHECK(back.lights[k].direction == scene.lights[k].direction);
  }
  const ComponentDir cd = load_component_dir(dir);
  CHECK(cd.metadata.get("split") == "val");
  CHECK(cd.metadata.get_u64("seed") == 51);
}

TEST_CASE("seed stream and split hashing are deterministic and balanced") {
  std::set<uint64_t> seeds;
  for (int i = 0; i < 1000; ++i) seeds.insert(scene_seed(7, i));
  CHECK(seeds.size() == 1000);
  CHECK(scene_seed(7, 3) == scene_seed(7, 3));
  CHECK(scene_seed(7, 3) != scene_seed(8, 3));

  int train = 0, val = 0, test = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::string s = split_for_seed(scene_seed(99, i));
    if (s == "train") ++train;
    else if (s == "val") ++val;
    else ++test;
  }
  CHECK(train > 7700);
  CHECK(train < 8300);
  CHECK(val > 800);
  CHECK(val < 1200);
  CHECK(test > 800);
  CHECK(test < 1200);
}

TEST_CASE("gen_dataset writes scenes and a reloadable manifest") {
  const fs::path root = temp_dir("tmp_test_synthgen") / "ds";
  fs::remove_all(root);
  SceneParams p = base_params();
  p.seed = 17;
  const DatasetManifest m = gen_dataset(p, 6, root);
  CHECK(m.entries.size() == 6);
  CHECK(m.entries[0].id == "scene_00000");
  CHECK(m.entries[5].id == "scene_00005");

  const DatasetManifest loaded = load_dataset_manifest(root);
  CHECK(loaded.count == 6);
  CHECK(loaded.resolution == p.resolution);
  CHECK(loaded.base_seed == 17);
  REQUIRE(loaded.entries.size() == 6);
  for (int i = 0; i < 6; ++i) {
    CHECK(loaded.entries[i].id == m.entries[i].id);
    CHECK(loaded.entries[i].seed == m.entries[i].seed);
    CHECK(loaded.entries[i].split == m.entries[i].split);
    const SceneGT scene = load_scene(root / m.entries[i].id);
    CHECK_NOTHROW(scene.components.validate());
    // Scene content is reproducible from its recorded seed.
    const SceneGT regen = gen_scene(p, m.entries[i].seed);
    CHECK(bitwise_equal(scene.components.image, regen.components.image));
  }
  CHECK_THROWS_AS(load_dataset_manifest(root / "missing"), DataError);
}
