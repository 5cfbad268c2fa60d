#include "cdi/experiments.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <utility>

#include "cdi/errors.hpp"
#include "cdi/formation.hpp"
#include "cdi/metrics.hpp"
#include "cdi/synthgen.hpp"

namespace cdi {
namespace {

// Runs the stage network on a scene with ground-truth upstream planes, the
// same conditioning the arms were trained under, so the comparison isolates
// the wiring choice itself.
LinearImage predict_stage(const EncoderDecoder& net, const SceneGT& scene,
                          const StageSpec& spec, ColorSpace cs) {
  const StageSample sample = prepare_stage_sample(scene, spec);
  return tensor_to_image(net.forward(sample.input), 0, cs);
}

LinearImage quarter(const LinearImage& img) {
  return downsample2(downsample2(img));
}

double score_chroma_arm(const EncoderDecoder& net, const SceneGT& scene) {
  const LinearImage raw =
      predict_stage(net, scene, stage_spec(StageId::kChroma), ColorSpace::kData);
  const auto [albedo_estimate, shading_estimate] = albedo_from_chroma(
      scene.components.image, scene.components.gray_shading, ChromaMap(raw));
  return si_rmse(quarter(albedo_estimate), quarter(scene.components.albedo));
}

double score_direct_albedo_arm(const EncoderDecoder& net, const SceneGT& scene) {
  const LinearImage pred = predict_stage(
      net, scene, stage_spec("chroma_direct_albedo"), ColorSpace::kLinear);
  return si_rmse(pred, quarter(scene.components.albedo));
}

double score_albedo_arm(const EncoderDecoder& net, const SceneGT& scene,
                        const std::string& stage) {
  const LinearImage pred =
      predict_stage(net, scene, stage_spec(stage), ColorSpace::kLinear);
  return si_rmse(pred, scene.components.albedo);
}

double score_inverse_shading_arm(const EncoderDecoder& net, const SceneGT& scene,
                                 const std::string& stage) {
  const LinearImage pred =
      predict_stage(net, scene, stage_spec(stage), ColorSpace::kData);
  return si_rmse(pred, inverse_shading(scene.components.shading));
}

struct TrendDef {
  std::string name;
  std::string metric;
  std::string full_stage;
  std::string ablated_stage;
  double (*score)(const EncoderDecoder&, const SceneGT&, const std::string&);
};

double dispatch_chroma(const EncoderDecoder& net, const SceneGT& scene,
                       const std::string& stage) {
  return stage == "chroma" ? score_chroma_arm(net, scene)
                           : score_direct_albedo_arm(net, scene);
}

double dispatch_albedo(const EncoderDecoder& net, const SceneGT& scene,
                       const std::string& stage) {
  return score_albedo_arm(net, scene, stage);
}

double dispatch_diffuse(const EncoderDecoder& net, const SceneGT& scene,
                        const std::string& stage) {
  return score_inverse_shading_arm(net, scene, stage);
}

const std::vector<TrendDef>& trend_defs() {
  static const std::vector<TrendDef> defs{
      {"chroma_vs_direct_albedo", "quarter-res albedo si-RMSE", "chroma",
       "chroma_direct_albedo", dispatch_chroma},
      {"albedo_input_ablation", "albedo si-RMSE", "albedo", "albedo_image_only",
       dispatch_albedo},
      {"diffuse_input_ablation", "inverse diffuse shading si-RMSE", "diffuse",
       "diffuse_image_only", dispatch_diffuse},
  };
  return defs;
}

TrendArm run_arm(const TrendDef& def, const std::string& stage,
                 const TrendConfig& config,
                 const std::vector<DatasetEntry>& test_entries) {
  TrendArm arm;
  arm.stage = stage;
  for (const std::uint64_t seed : config.seeds) {
    TrainConfig train = config.base;
    train.dataset_root = config.dataset_root;
    train.seed = seed;
    const std::filesystem::path run_dir =
        config.work_dir / def.name / (stage + "_seed" + std::to_string(seed));
    std::filesystem::remove_all(run_dir);
    const TrainResult result = train_stage(stage_spec(stage), train, run_dir);
    const EncoderDecoder net = load_network(result.checkpoint_path);

    double total = 0.0;
    for (const DatasetEntry& entry : test_entries) {
      const SceneGT scene = load_scene(config.dataset_root / entry.id);
      total += def.score(net, scene, stage);
    }
    arm.scores.push_back(total / static_cast<double>(test_entries.size()));
  }
  arm.mean = std::accumulate(arm.scores.begin(), arm.scores.end(), 0.0) /
             static_cast<double>(arm.scores.size());
  return arm;
}

}  // namespace

std::vector<std::string> trend_names() {
  std::vector<std::string> names;
  for (const TrendDef& def : trend_defs()) names.push_back(def.name);
  return names;
}

TrendResult run_trend(const std::string& name, const TrendConfig& config) {
  if (config.seeds.empty()) throw DataError("trend: at least one seed required");
  const TrendDef* def = nullptr;
  for (const TrendDef& candidate : trend_defs())
    if (candidate.name == name) def = &candidate;
  if (def == nullptr) throw DataError("trend: unknown comparison '" + name + "'");

  const DatasetManifest manifest = load_dataset_manifest(config.dataset_root);
  const std::vector<DatasetEntry> test_entries = manifest.split_entries("test");
  if (test_entries.empty())
    throw DataError("trend: dataset has no test-split scenes");

  TrendResult result;
  result.name = def->name;
  result.metric = def->metric;
  result.full = run_arm(*def, def->full_stage, config, test_entries);
  result.ablated = run_arm(*def, def->ablated_stage, config, test_entries);
  return result;
}

std::vector<TrendResult> run_trend_suite(const TrendConfig& config) {
  std::vector<TrendResult> results;
  for (const std::string& name : trend_names())
    results.push_back(run_trend(name, config));
  return results;
}

std::string trend_table(const std::vector<TrendResult>& results) {
  std::string out;
  char line[256];
  for (const TrendResult& r : results) {
    std::snprintf(line, sizeof(line), "== %s (%s) ==\n", r.name.c_str(),
                  r.metric.c_str());
    out += line;
    for (const TrendArm* arm : {&r.full, &r.ablated}) {
      std::snprintf(line, sizeof(line), "  %-26s seeds:", arm->stage.c_str());
      out += line;
      for (const double score : arm->scores) {
        std::snprintf(line, sizeof(line), " %.6f", score);
        out += line;
      }
      std::snprintf(line, sizeof(line), "  mean %.6f\n", arm->mean);
      out += line;
    }
    std::snprintf(line, sizeof(line), "  ordering (full < ablated): %s\n",
                  r.ordering_holds() ? "HOLDS" : "VIOLATED");
    out += line;
  }
  return out;
}

}  // namespace cdi
