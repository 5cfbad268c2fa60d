#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cdi/config.hpp"
#include "cdi/formation.hpp"
#include "cdi/image.hpp"
#include "cdi/nn.hpp"
#include "cdi/synthgen.hpp"
#include "cdi/tensor.hpp"

namespace cdi {

// ---- image <-> tensor bridge

// (1, channels, height, width) tensor holding the image's planar data.
Tensor image_to_tensor(const LinearImage& img, bool requires_grad = false);
// One batch entry back into an image; `cs` sets the tag (caller knows the
// semantics of the planes).
LinearImage tensor_to_image(const Tensor& t, int batch_index, ColorSpace cs);

// ---- stage descriptions

enum class StageId { kGray0, kChroma, kAlbedo, kDiffuse, kBaseline };

// Ingredients a stage may stack (channel-concatenated) as network input.
enum class InputPlane {
  kImage,          // observed RGB, 3ch
  kGrayShading,    // grayscale-model shading, 1ch
  kGrayAlbedo,     // grayscale-model albedo, 3ch
  kChromaAlbedo,   // albedo implied by low-res chroma, 3ch
  kChromaShading,  // shading implied by low-res chroma, 3ch
  kDiffuseAlbedo,  // diffuse albedo, 3ch
  kRgbShading,     // image / albedo, 3ch
};

// What the stage's network is trained to output.
enum class TargetKind {
  kInverseGrayShading,     // 1/(S_g+1), 1ch, full res
  kChromaLow,              // bounded shading chroma, 2ch, quarter res
  kAlbedo,                 // diffuse albedo, 3ch, full res
  kAlbedoLow,              // diffuse albedo, 3ch, quarter res
  kInverseDiffuseShading,  // 1/(S_d+1), 3ch, full res
  kInverseRgbShading,      // 1/(S_c+1), 3ch, full res
};

struct StageSpec {
  std::string name;  // canonical stage name or ablation variant name
  StageId id = StageId::kChroma;
  std::vector<InputPlane> inputs;
  TargetKind target = TargetKind::kChromaLow;
  float w_mse = 1.0f;
  float w_msg = 1.0f;

  int in_channels() const;
  int out_channels() const;
  // 0 for full-resolution output, 2 for quarter-resolution (chroma-scale).
  int downscale_log2() const;
  bool low_res_head() const { return downscale_log2() != 0; }
  // Shading-space targets carry an arbitrary global scale; their ground
  // truth is least-squares aligned to the stage's input decomposition
  // (luminance) before the loss sees it.
  bool scale_aligned() const;
  // Enforces the per-stage input/output channel contracts. Throws DataError.
  void validate() const;
};

// Canonical wiring for the five stages: gray0 (image -> inverse grayscale
// shading), chroma (image + grayscale decomposition -> low-res chroma),
// albedo (image + chroma-implied decomposition -> diffuse albedo), diffuse
// (image + albedo + rgb shading -> inverse diffuse shading), baseline
// (image -> albedo directly).
StageSpec stage_spec(StageId id);

// Accepts canonical stage names plus the input/output ablation variants:
//   chroma_direct_albedo     quarter-res albedo instead of chroma
//   albedo_shading_estimation  estimate shading instead of albedo
//   albedo_gray_input        albedo from the grayscale decomposition only
//   albedo_image_only        albedo from the image alone
//   diffuse_gray_input       diffuse shading from the grayscale decomposition
//   diffuse_image_only       diffuse shading from the image alone
StageSpec stage_spec(const std::string& name);
std::vector<std::string> ablation_variant_names();

// ---- training configuration

struct TrainConfig {
  std::filesystem::path dataset_root;
  int iterations = 500;
  int batch_size = 8;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  float w_mse = 1.0f;
  float w_msg = 1.0f;
  int eval_interval = 50;
  std::array<int, 3> widths{16, 32, 64};
  int msg_scales = 4;

  void validate() const;  // positive counts; throws DataError

  // Key-value schema: dataset, iterations, batch_size, lr, seed, w_mse,
  // w_msg, eval_interval, widths (comma list), msg_scales. `dataset` and
  // `seed` are required; the rest fall back to the defaults above.
  static TrainConfig from_kv(const KvFile& kv);
  KvFile to_kv(const std::string& stage_name) const;
};

// Frozen upstream networks for chained-input training or inference. Null
// members mean the corresponding plane comes from ground truth (oracle).
struct UpstreamNets {
  const EncoderDecoder* gray0 = nullptr;
  const EncoderDecoder* chroma = nullptr;
  const EncoderDecoder* albedo = nullptr;
};

// One scene turned into a training example for a stage: the stacked input
// planes and the (scale-aligned, resolution-matched) target.
struct StageSample {
  Tensor input;   // (1, C, H, W)
  Tensor target;  // (1, C', H', W')
};

StageSample prepare_stage_sample(const SceneGT& scene, const StageSpec& spec,
                                 const UpstreamNets& upstream = {});

// ---- training

struct CurveRow {
  int iteration = 0;
  double train_loss = 0.0;  // mean total loss since the previous row
  double val_mse = 0.0;
  double val_msg = 0.0;
};

struct TrainResult {
  std::filesystem::path checkpoint_path;
  std::vector<CurveRow> curve;
  double initial_val_mse = 0.0;
  double final_val_mse = 0.0;
};

// Trains one stage on the dataset's train split, evaluating on the val
// split every eval_interval iterations (plus iteration 0 and the final
// iteration). Writes into run_dir:
//   config            resolved key-value configuration
//   curves.csv        iteration,train_loss,val_mse,val_msg
//   checkpoints/final.ckpt   parameters + optimizer state
//   samples/          a few val predictions and targets (IIDF)
// Deterministic for fixed (spec, cfg, dataset): two runs produce identical
// checkpoint bytes. A non-finite training loss aborts with NumericError
// naming the iteration and the scene ids/seeds in the offending batch.
TrainResult train_stage(const StageSpec& spec, const TrainConfig& cfg,
                        const std::filesystem::path& run_dir,
                        const UpstreamNets& upstream = {});

// Closed-form parameter count of the four-stage pipeline (gray0, chroma,
// albedo, diffuse) at the given encoder widths.
std::size_t pipeline_parameter_total(const std::array<int, 3>& widths);
// Smallest uniformly scaled-up widths whose single baseline network
// (image -> albedo) has at least pipeline_parameter_total(widths) params,
// so the baseline comparison is parameter-fair.
std::array<int, 3> baseline_widths(const std::array<int, 3>& widths);

// ---- inference

// Reads a checkpoint file and reconstructs its network.
EncoderDecoder load_network(const std::filesystem::path& checkpoint_path);

struct GrayDecomposition {
  LinearImage shading;  // 1ch
  LinearImage albedo;   // 3ch
};

// gray0 net: image -> inverse grayscale shading; albedo = image / shading.
GrayDecomposition infer_gray(const EncoderDecoder& net, const LinearImage& image);

// chroma net: (image, S_g, A_g) -> bounded chroma at quarter resolution.
ChromaMap infer_chroma(const EncoderDecoder& net, const LinearImage& image,
                       const LinearImage& gray_shading,
                       const LinearImage& gray_albedo);

// albedo net: (image, chroma albedo, chroma shading) -> diffuse albedo.
LinearImage infer_albedo(const EncoderDecoder& net, const LinearImage& image,
                         const LinearImage& chroma_albedo,
                         const LinearImage& chroma_shading);

struct DiffuseDecomposition {
  LinearImage shading;   // S_d, 3ch, >= 0
  LinearImage residual;  // image - albedo * S_d, signed
  LinearImage inverse;   // 1/(S_d+1), 3ch in (0,1]
};

// diffuse net: (image, albedo, rgb shading) -> inverse diffuse shading;
// shading and residual follow from the bijection and the remainder rule,
// so image == albedo * shading + residual holds by construction.
DiffuseDecomposition infer_diffuse(const EncoderDecoder& net,
                                   const LinearImage& image,
                                   const LinearImage& albedo,
                                   const LinearImage& rgb_shading);

// baseline net: image -> albedo directly.
LinearImage infer_baseline(const EncoderDecoder& net, const LinearImage& image);

// Where the grayscale decomposition at the head of the chain comes from.
enum class GrayMode { kOracle, kNet };

struct PipelineNets {
  std::optional<EncoderDecoder> gray0;  // required for GrayMode::kNet
  std::optional<EncoderDecoder> chroma;
  std::optional<EncoderDecoder> albedo;
  std::optional<EncoderDecoder> diffuse;
};

// Full chained decomposition: grayscale decomposition -> chroma -> implied
// albedo/shading -> albedo net -> rgb shading -> diffuse net -> residual.
// All intermediates are recorded and the result passes
// IntrinsicComponents::validate() regardless of network quality. With
// GrayMode::kOracle the caller supplies the grayscale decomposition (for
// example from grayscale_oracle on ground truth); with kNet it is inferred
// with nets.gray0.
IntrinsicComponents decompose(const LinearImage& image, GrayMode mode,
                              const PipelineNets& nets,
                              const GrayDecomposition* oracle_gray = nullptr);

}  // namespace cdi
