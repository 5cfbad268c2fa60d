#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cdi/pipeline.hpp"

namespace cdi {

// One side of a staged-input comparison: a stage (or ablation variant)
// trained once per seed, scored on the dataset's test split.
struct TrendArm {
  std::string stage;
  std::vector<double> scores;  // per-seed mean test-split si-RMSE
  double mean = 0.0;
};

// A two-arm comparison; the hypothesis is that the full pipeline wiring
// scores strictly better (lower) than its ablated counterpart.
struct TrendResult {
  std::string name;
  std::string metric;  // what the scores measure
  TrendArm full;
  TrendArm ablated;

  bool ordering_holds() const { return full.mean < ablated.mean; }
};

struct TrendConfig {
  std::filesystem::path dataset_root;
  // Training run artifacts land under work_dir/<trend>/<stage>_seed<k>/.
  std::filesystem::path work_dir;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  // Shared training budget; dataset_root and seed are overwritten per run.
  TrainConfig base;
};

// The three wiring comparisons the pipeline's design rests on:
//   chroma_vs_direct_albedo   estimating low-res chroma then dividing it out
//                             of the image vs estimating low-res albedo
//                             directly (scored on quarter-res albedo)
//   albedo_input_ablation     albedo net fed the chroma-implied decomposition
//                             vs fed the image alone (full-res albedo)
//   diffuse_input_ablation    diffuse net fed albedo + rgb shading vs fed the
//                             image alone (inverse diffuse shading)
std::vector<std::string> trend_names();

// Trains both arms for each configured seed and scores them. Throws
// DataError for unknown names, an empty test split, or an invalid config.
TrendResult run_trend(const std::string& name, const TrendConfig& config);

std::vector<TrendResult> run_trend_suite(const TrendConfig& config);

// Fixed-width text table of per-seed scores, means, and the ordering verdict.
std::string trend_table(const std::vector<TrendResult>& results);

}  // namespace cdi
