#include "cdi/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "cdi/checkpoint.hpp"
#include "cdi/errors.hpp"
#include "cdi/image_io.hpp"
#include "cdi/losses.hpp"
#include "cdi/optim.hpp"
#include "cdi/tensor_ops.hpp"

namespace cdi {

namespace {

// Salts for the independent random streams a training run draws from.
constexpr std::uint64_t kInitSalt = 0x706172616d730000ULL;
constexpr std::uint64_t kBatchSalt = 0x6261746368657300ULL;

int plane_channels(InputPlane p) {
  return p == InputPlane::kGrayShading ? 1 : 3;
}

int target_channels(TargetKind t) {
  switch (t) {
    case TargetKind::kInverseGrayShading:
      return 1;
    case TargetKind::kChromaLow:
      return 2;
    default:
      return 3;
  }
}

bool target_quarter_res(TargetKind t) {
  return t == TargetKind::kChromaLow || t == TargetKind::kAlbedoLow;
}

bool target_aligned(TargetKind t) {
  return t == TargetKind::kInverseGrayShading ||
         t == TargetKind::kInverseDiffuseShading ||
         t == TargetKind::kInverseRgbShading;
}

bool has_plane(const std::vector<InputPlane>& inputs, InputPlane p) {
  return std::find(inputs.begin(), inputs.end(), p) != inputs.end();
}

}  // namespace

// ---- image <-> tensor bridge

Tensor image_to_tensor(const LinearImage& img, bool requires_grad) {
  if (img.empty()) throw DataError("image_to_tensor: empty image");
  const Shape shape{1, img.channels(), img.height(), img.width()};
  std::vector<float> data(img.data().begin(), img.data().end());
  return Tensor::from_vector(shape, std::move(data), requires_grad);
}

LinearImage tensor_to_image(const Tensor& t, int batch_index, ColorSpace cs) {
  if (!t.defined()) throw DataError("tensor_to_image: undefined tensor");
  const Shape s = t.shape();
  if (batch_index < 0 || batch_index >= s.n)
    throw DataError("tensor_to_image: batch index out of range");
  const std::size_t per = static_cast<std::size_t>(s.c) * s.h * s.w;
  auto src = t.value().subspan(per * static_cast<std::size_t>(batch_index), per);
  return LinearImage::from_data(s.w, s.h, s.c, cs,
                                std::vector<float>(src.begin(), src.end()));
}

// ---- stage descriptions

int StageSpec::in_channels() const {
  int total = 0;
  for (InputPlane p : inputs) total += plane_channels(p);
  return total;
}

int StageSpec::out_channels() const { return target_channels(target); }

int StageSpec::downscale_log2() const {
  return target_quarter_res(target) ? 2 : 0;
}

bool StageSpec::scale_aligned() const { return target_aligned(target); }

void StageSpec::validate() const {
  if (name.empty()) throw DataError("stage spec: empty name");
  if (inputs.empty()) throw DataError("stage spec '" + name + "': no inputs");
  if (!has_plane(inputs, InputPlane::kImage))
    throw DataError("stage spec '" + name + "': the image must be an input");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t j = i + 1; j < inputs.size(); ++j) {
      if (inputs[i] == inputs[j])
        throw DataError("stage spec '" + name + "': duplicate input plane");
    }
  }
  if (!(w_mse >= 0.0f) || !(w_msg >= 0.0f) || (w_mse == 0.0f && w_msg == 0.0f))
    throw DataError("stage spec '" + name + "': loss weights must be " +
                    "non-negative and not both zero");

  // The canonical stages carry fixed channel contracts.
  struct Contract {
    const char* name;
    int in, out, down;
  };
  constexpr Contract kContracts[] = {
      {"gray0", 3, 1, 0},    {"chroma", 7, 2, 2},  {"albedo", 9, 3, 0},
      {"diffuse", 9, 3, 0},  {"baseline", 3, 3, 0},
  };
  for (const Contract& c : kContracts) {
    if (name != c.name) continue;
    if (in_channels() != c.in || out_channels() != c.out ||
        downscale_log2() != c.down) {
      throw DataError("stage spec '" + name + "': expected " +
                      std::to_string(c.in) + "->" + std::to_string(c.out) +
                      " channels at 1/" + std::to_string(1 << c.down) +
                      " resolution");
    }
  }
}

StageSpec stage_spec(StageId id) {
  StageSpec s;
  s.id = id;
  switch (id) {
    case StageId::kGray0:
      s.name = "gray0";
      s.inputs = {InputPlane::kImage};
      s.target = TargetKind::kInverseGrayShading;
      break;
    case StageId::kChroma:
      s.name = "chroma";
      s.inputs = {InputPlane::kImage, InputPlane::kGrayShading,
                  InputPlane::kGrayAlbedo};
      s.target = TargetKind::kChromaLow;
      break;
    case StageId::kAlbedo:
      s.name = "albedo";
      s.inputs = {InputPlane::kImage, InputPlane::kChromaAlbedo,
                  InputPlane::kChromaShading};
      s.target = TargetKind::kAlbedo;
      break;
    case StageId::kDiffuse:
      s.name = "diffuse";
      s.inputs = {InputPlane::kImage, InputPlane::kDiffuseAlbedo,
                  InputPlane::kRgbShading};
      s.target = TargetKind::kInverseDiffuseShading;
      break;
    case StageId::kBaseline:
      s.name = "baseline";
      s.inputs = {InputPlane::kImage};
      s.target = TargetKind::kAlbedo;
      break;
  }
  s.validate();
  return s;
}

StageSpec stage_spec(const std::string& name) {
  if (name == "gray0") return stage_spec(StageId::kGray0);
  if (name == "chroma") return stage_spec(StageId::kChroma);
  if (name == "albedo") return stage_spec(StageId::kAlbedo);
  if (name == "diffuse") return stage_spec(StageId::kDiffuse);
  if (name == "baseline") return stage_spec(StageId::kBaseline);

  StageSpec s;
  s.name = name;
  if (name == "chroma_direct_albedo") {
    // Same 7-channel input as the chroma stage, but regresses the albedo
    // itself at quarter resolution instead of the color components.
    s.id = StageId::kChroma;
    s.inputs = {InputPlane::kImage, InputPlane::kGrayShading,
                InputPlane::kGrayAlbedo};
    s.target = TargetKind::kAlbedoLow;
  } else if (name == "albedo_shading_estimation") {
    // Same input as the albedo stage, but regresses the (inverse) rgb
    // shading instead of the albedo.
    s.id = StageId::kAlbedo;
    s.inputs = {InputPlane::kImage, InputPlane::kChromaAlbedo,
                InputPlane::kChromaShading};
    s.target = TargetKind::kInverseRgbShading;
  } else if (name == "albedo_gray_input") {
    s.id = StageId::kAlbedo;
    s.inputs = {InputPlane::kImage, InputPlane::kGrayShading,
                InputPlane::kGrayAlbedo};
    s.target = TargetKind::kAlbedo;
  } else if (name == "albedo_image_only") {
    s.id = StageId::kAlbedo;
    s.inputs = {InputPlane::kImage};
    s.target = TargetKind::kAlbedo;
  } else if (name == "diffuse_gray_input") {
    s.id = StageId::kDiffuse;
    s.inputs = {InputPlane::kImage, InputPlane::kGrayShading,
                InputPlane::kGrayAlbedo};
    s.target = TargetKind::kInverseDiffuseShading;
  } else if (name == "diffuse_image_only") {
    s.id = StageId::kDiffuse;
    s.inputs = {InputPlane::kImage};
    s.target = TargetKind::kInverseDiffuseShading;
  } else {
    throw DataError("unknown stage or ablation variant: '" + name + "'");
  }
  s.validate();
  return s;
}

std::vector<std::string> ablation_variant_names() {
  return {"chroma_direct_albedo", "albedo_shading_estimation",
          "albedo_gray_input",    "albedo_image_only",
          "diffuse_gray_input",   "diffuse_image_only"};
}

// ---- training configuration

void TrainConfig::validate() const {
  if (dataset_root.empty()) throw DataError("train config: dataset required");
  if (iterations <= 0) throw DataError("train config: iterations must be > 0");
  if (batch_size <= 0) throw DataError("train config: batch_size must be > 0");
  if (!(lr > 0.0) || !std::isfinite(lr))
    throw DataError("train config: lr must be a positive finite value");
  if (eval_interval <= 0)
    throw DataError("train config: eval_interval must be > 0");
  if (!(w_mse >= 0.0f) || !(w_msg >= 0.0f) || (w_mse == 0.0f && w_msg == 0.0f))
    throw DataError("train config: loss weights must be non-negative and " +
                    std::string("not both zero"));
  for (int w : widths) {
    if (w <= 0) throw DataError("train config: widths must be positive");
  }
  if (msg_scales < 1) throw DataError("train config: msg_scales must be >= 1");
}

TrainConfig TrainConfig::from_kv(const KvFile& kv) {
  TrainConfig cfg;
  cfg.dataset_root = kv.get("dataset");
  cfg.seed = kv.get_u64("seed");
  cfg.iterations = kv.get_int_or("iterations", cfg.iterations);
  cfg.batch_size = kv.get_int_or("batch_size", cfg.batch_size);
  cfg.lr = kv.get_double_or("lr", cfg.lr);
  cfg.w_mse = static_cast<float>(kv.get_double_or("w_mse", cfg.w_mse));
  cfg.w_msg = static_cast<float>(kv.get_double_or("w_msg", cfg.w_msg));
  cfg.eval_interval = kv.get_int_or("eval_interval", cfg.eval_interval);
  cfg.msg_scales = kv.get_int_or("msg_scales", cfg.msg_scales);
  if (kv.has("widths")) {
    std::stringstream ss(kv.get("widths"));
    std::string item;
    std::vector<int> parsed;
    while (std::getline(ss, item, ',')) {
      try {
        parsed.push_back(std::stoi(item));
      } catch (const std::exception&) {
        throw DataError("train config: bad widths entry '" + item + "'");
      }
    }
    if (parsed.size() != 3)
      throw DataError("train config: widths must list three values");
    std::copy(parsed.begin(), parsed.end(), cfg.widths.begin());
  }
  cfg.validate();
  return cfg;
}

KvFile TrainConfig::to_kv(const std::string& stage_name) const {
  KvFile kv;
  kv.set("format", "cdi-train-config-v1");
  kv.set("stage", stage_name);
  kv.set("dataset", dataset_root.string());
  kv.set_int("iterations", iterations);
  kv.set_int("batch_size", batch_size);
  kv.set_double("lr", lr);
  kv.set_u64("seed", seed);
  kv.set_double("w_mse", w_mse);
  kv.set_double("w_msg", w_msg);
  kv.set_int("eval_interval", eval_interval);
  kv.set("widths", std::to_string(widths[0]) + "," + std::to_string(widths[1]) +
                       "," + std::to_string(widths[2]));
  kv.set_int("msg_scales", msg_scales);
  return kv;
}

// ---- sample preparation

namespace {

// Stacks same-sized images channel-wise into a (1, sum C, H, W) tensor.
Tensor stack_planes(const std::vector<const LinearImage*>& planes) {
  int total_c = 0;
  for (const LinearImage* p : planes) total_c += p->channels();
  const int h = planes.front()->height();
  const int w = planes.front()->width();
  std::vector<float> data;
  data.reserve(static_cast<std::size_t>(total_c) * h * w);
  for (const LinearImage* p : planes) {
    if (p->height() != h || p->width() != w)
      throw DataError("input planes disagree on resolution");
    data.insert(data.end(), p->data().begin(), p->data().end());
  }
  return Tensor::from_vector(Shape{1, total_c, h, w}, std::move(data), false);
}

LinearImage quarter_res(const LinearImage& img) {
  return downsample2(downsample2(img));
}

// The per-scene planes a stage may consume, oracle- or network-derived.
struct PlaneSet {
  LinearImage gray_shading;    // 1ch
  LinearImage gray_albedo;     // 3ch
  LinearImage chroma_albedo;   // 3ch
  LinearImage chroma_shading;  // 3ch
  LinearImage diffuse_albedo;  // 3ch
  LinearImage rgb_shading;     // 3ch
};

PlaneSet build_planes(const SceneGT& scene, const SceneTargets& targets,
                      const StageSpec& spec, const UpstreamNets& upstream) {
  const LinearImage& image = scene.components.image;
  const auto& in = spec.inputs;

  const bool need_diffuse_albedo = has_plane(in, InputPlane::kDiffuseAlbedo) ||
                                   has_plane(in, InputPlane::kRgbShading);
  const bool need_chroma_planes = has_plane(in, InputPlane::kChromaAlbedo) ||
                                  has_plane(in, InputPlane::kChromaShading) ||
                                  (need_diffuse_albedo && upstream.albedo);
  const bool need_gray = has_plane(in, InputPlane::kGrayShading) ||
                         has_plane(in, InputPlane::kGrayAlbedo) ||
                         need_chroma_planes;

  PlaneSet planes;
  if (need_gray) {
    if (upstream.gray0) {
      GrayDecomposition gray = infer_gray(*upstream.gray0, image);
      planes.gray_shading = std::move(gray.shading);
      planes.gray_albedo = std::move(gray.albedo);
    } else {
      planes.gray_shading = targets.gray_shading;
      planes.gray_albedo = targets.gray_albedo;
    }
  }
  if (need_chroma_planes) {
    std::optional<ChromaMap> chroma_low;
    if (upstream.chroma) {
      chroma_low = infer_chroma(*upstream.chroma, image, planes.gray_shading,
                                planes.gray_albedo);
    } else {
      chroma_low.emplace(quarter_res(targets.chroma.image()));
    }
    auto [ca, cs] =
        albedo_from_chroma(image, planes.gray_shading, *chroma_low);
    planes.chroma_albedo = std::move(ca);
    planes.chroma_shading = std::move(cs);
  }
  if (need_diffuse_albedo) {
    planes.diffuse_albedo =
        upstream.albedo ? infer_albedo(*upstream.albedo, image,
                                       planes.chroma_albedo,
                                       planes.chroma_shading)
                        : scene.components.albedo;
    planes.rgb_shading = safe_div(image, planes.diffuse_albedo, kEpsilon);
  }
  return planes;
}

const LinearImage& plane_ref(const PlaneSet& planes, const LinearImage& image,
                             InputPlane p) {
  switch (p) {
    case InputPlane::kImage:
      return image;
    case InputPlane::kGrayShading:
      return planes.gray_shading;
    case InputPlane::kGrayAlbedo:
      return planes.gray_albedo;
    case InputPlane::kChromaAlbedo:
      return planes.chroma_albedo;
    case InputPlane::kChromaShading:
      return planes.chroma_shading;
    case InputPlane::kDiffuseAlbedo:
      return planes.diffuse_albedo;
    case InputPlane::kRgbShading:
      return planes.rgb_shading;
  }
  throw std::logic_error("plane_ref: unhandled plane");
}

// The scale reference for aligned targets: the shading estimate the network
// receives as input, falling back to the image's own luminance for
// image-only variants.
LinearImage alignment_reference(const StageSpec& spec, const PlaneSet& planes,
                                const LinearImage& image) {
  if (spec.target == TargetKind::kInverseDiffuseShading &&
      has_plane(spec.inputs, InputPlane::kRgbShading))
    return luminance(planes.rgb_shading);
  if (spec.target == TargetKind::kInverseRgbShading &&
      has_plane(spec.inputs, InputPlane::kChromaShading))
    return luminance(planes.chroma_shading);
  if (has_plane(spec.inputs, InputPlane::kGrayShading))
    return planes.gray_shading;
  return luminance(image);
}

// Least-squares-aligns the ground-truth shading to the reference (both on
// luminance) and returns its bounded inverse as the regression target.
LinearImage aligned_inverse_target(const LinearImage& gt_shading,
                                   const LinearImage& reference) {
  const LinearImage gt_lum =
      gt_shading.channels() == 1 ? gt_shading : luminance(gt_shading);
  const double alpha = ls_scale_align(gt_lum.data(), reference.data());
  return inverse_shading(scale(gt_shading, static_cast<float>(alpha)));
}

LinearImage build_target(const SceneGT& scene, const SceneTargets& targets,
                         const StageSpec& spec, const PlaneSet& planes) {
  const LinearImage& image = scene.components.image;
  switch (spec.target) {
    case TargetKind::kInverseGrayShading:
      return aligned_inverse_target(targets.gray_shading, luminance(image));
    case TargetKind::kChromaLow:
      return quarter_res(targets.chroma.image());
    case TargetKind::kAlbedo:
      return scene.components.albedo;
    case TargetKind::kAlbedoLow:
      return quarter_res(scene.components.albedo);
    case TargetKind::kInverseDiffuseShading:
      return aligned_inverse_target(scene.components.shading,
                                    alignment_reference(spec, planes, image));
    case TargetKind::kInverseRgbShading:
      return aligned_inverse_target(targets.rgb_shading,
                                    alignment_reference(spec, planes, image));
  }
  throw std::logic_error("build_target: unhandled target kind");
}

}  // namespace

StageSample prepare_stage_sample(const SceneGT& scene, const StageSpec& spec,
                                 const UpstreamNets& upstream) {
  spec.validate();
  const LinearImage& image = scene.components.image;
  if (image.width() % 4 != 0 || image.height() % 4 != 0)
    throw DataError("stage sample: scene resolution must be divisible by 4");

  const SceneTargets targets = make_targets(scene);
  const PlaneSet planes = build_planes(scene, targets, spec, upstream);

  std::vector<const LinearImage*> stack;
  stack.reserve(spec.inputs.size());
  for (InputPlane p : spec.inputs)
    stack.push_back(&plane_ref(planes, image, p));

  StageSample sample;
  sample.input = stack_planes(stack);
  sample.target = image_to_tensor(build_target(scene, targets, spec, planes));
  return sample;
}

// ---- training

namespace {

Tensor stack_batch(const std::vector<StageSample>& samples,
                   const std::vector<int>& indices, bool targets) {
  const Tensor& first = targets ? samples.front().target : samples.front().input;
  const Shape s = first.shape();
  const std::size_t per = static_cast<std::size_t>(s.c) * s.h * s.w;
  Tensor batch =
      Tensor::zeros(Shape{static_cast<int>(indices.size()), s.c, s.h, s.w});
  auto dst = batch.value();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const StageSample& sample = samples[static_cast<std::size_t>(indices[b])];
    auto src = (targets ? sample.target : sample.input).value();
    std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(b * per));
  }
  return batch;
}

struct LossParts {
  double mse = 0.0;
  double msg = 0.0;
  double total(float w_mse, float w_msg) const {
    return w_mse * mse + w_msg * msg;
  }
};

}  // namespace

TrainResult train_stage(const StageSpec& spec, const TrainConfig& cfg,
                        const std::filesystem::path& run_dir,
                        const UpstreamNets& upstream) {
  spec.validate();
  cfg.validate();

  const DatasetManifest manifest = load_dataset_manifest(cfg.dataset_root);
  const auto train_entries = manifest.split_entries("train");
  const auto val_entries = manifest.split_entries("val");
  if (train_entries.empty() || val_entries.empty())
    throw DataError("train_stage: dataset needs non-empty train and val splits");

  auto prepare = [&](const std::vector<DatasetEntry>& entries,
                     std::vector<StageSample>& out) {
    out.reserve(entries.size());
    for (const DatasetEntry& e : entries) {
      const SceneGT scene = load_scene(cfg.dataset_root / e.id);
      out.push_back(prepare_stage_sample(scene, spec, upstream));
    }
  };
  std::vector<StageSample> train_samples, val_samples;
  prepare(train_entries, train_samples);
  prepare(val_entries, val_samples);

  const Shape target_shape = train_samples.front().target.shape();
  if (cfg.w_msg > 0.0f) {
    const int div = 1 << (cfg.msg_scales - 1);
    if (target_shape.h % div != 0 || target_shape.w % div != 0)
      throw DataError(
          "train_stage: target resolution must be divisible by 2^(msg_scales-1)");
  }

  NetworkConfig netcfg;
  netcfg.in_channels = spec.in_channels();
  netcfg.out_channels = spec.out_channels();
  netcfg.widths = cfg.widths;
  netcfg.low_res_head = spec.low_res_head();
  Rng init_rng = Rng::forked(cfg.seed, kInitSalt);
  EncoderDecoder net(netcfg, init_rng);
  Adam adam(net.parameters(), AdamConfig{.lr = cfg.lr});

  std::filesystem::create_directories(run_dir / "checkpoints");
  std::filesystem::create_directories(run_dir / "samples");
  cfg.to_kv(spec.name).save(run_dir / "config");

  std::ofstream curves(run_dir / "curves.csv");
  if (!curves) throw DataError("train_stage: cannot write curves.csv");
  curves << "iteration,train_loss,val_mse,val_msg\n";

  // Forward pass for a set of samples; losses averaged over all of them.
  auto eval_batches = [&](const std::vector<StageSample>& samples) {
    LossParts parts;
    std::size_t done = 0;
    while (done < samples.size()) {
      const std::size_t n = std::min<std::size_t>(
          static_cast<std::size_t>(cfg.batch_size), samples.size() - done);
      std::vector<int> idx(n);
      for (std::size_t i = 0; i < n; ++i)
        idx[i] = static_cast<int>(done + i);
      const Tensor input = stack_batch(samples, idx, false);
      const Tensor target = stack_batch(samples, idx, true);
      const Tensor pred = net.forward(input);
      const double w = static_cast<double>(n) / static_cast<double>(samples.size());
      parts.mse += w * mse_loss(pred, target).item();
      if (cfg.w_msg > 0.0f)
        parts.msg += w * msg_loss(pred, target, cfg.msg_scales).item();
      done += n;
    }
    return parts;
  };

  TrainResult result;
  auto log_row = [&](int iteration, double train_loss, const LossParts& val) {
    char line[160];
    std::snprintf(line, sizeof line, "%d,%.9g,%.9g,%.9g\n", iteration,
                  train_loss, val.mse, val.msg);
    curves << line;
    curves.flush();
    result.curve.push_back(CurveRow{iteration, train_loss, val.mse, val.msg});
  };

  Rng batch_rng = Rng::forked(cfg.seed, kBatchSalt);
  auto draw_batch = [&](Rng& rng) {
    std::vector<int> idx(static_cast<std::size_t>(cfg.batch_size));
    for (int& i : idx)
      i = rng.uniform_int(0, static_cast<int>(train_samples.size()) - 1);
    return idx;
  };

  // Iteration-0 row: the untrained validation losses plus the training loss
  // previewed on the batch the first step will draw (stream copied, so the
  // training sequence is undisturbed).
  {
    Rng preview_rng = batch_rng;
    const std::vector<int> idx = draw_batch(preview_rng);
    const Tensor pred = net.forward(stack_batch(train_samples, idx, false));
    const Tensor target = stack_batch(train_samples, idx, true);
    double preview = cfg.w_mse * mse_loss(pred, target).item();
    if (cfg.w_msg > 0.0f)
      preview += cfg.w_msg * msg_loss(pred, target, cfg.msg_scales).item();
    log_row(0, preview, eval_batches(val_samples));
  }
  result.initial_val_mse = result.curve.front().val_mse;

  double train_accum = 0.0;
  int train_accum_n = 0;
  for (int it = 1; it <= cfg.iterations; ++it) {
    const std::vector<int> idx = draw_batch(batch_rng);
    const Tensor input = stack_batch(train_samples, idx, false);
    const Tensor target = stack_batch(train_samples, idx, true);
    const Tensor pred = net.forward(input);

    Tensor loss = scale(mse_loss(pred, target), cfg.w_mse);
    if (cfg.w_msg > 0.0f)
      loss = add(loss, scale(msg_loss(pred, target, cfg.msg_scales), cfg.w_msg));

    const double loss_value = loss.item();
    if (!std::isfinite(loss_value)) {
      std::string batch_desc;
      for (int i : idx) {
        const DatasetEntry& e = train_entries[static_cast<std::size_t>(i)];
        batch_desc += " " + e.id + "(seed " + std::to_string(e.seed) + ")";
      }
      throw NumericError("train_stage '" + spec.name +
                         "': non-finite loss at iteration " +
                         std::to_string(it) + "; batch scenes:" + batch_desc);
    }

    adam.zero_grad();
    loss.backward();
    adam.step();

    train_accum += loss_value;
    ++train_accum_n;
    if (it % cfg.eval_interval == 0 || it == cfg.iterations) {
      log_row(it, train_accum / train_accum_n, eval_batches(val_samples));
      train_accum = 0.0;
      train_accum_n = 0;
    }
  }
  result.final_val_mse = result.curve.back().val_mse;

  result.checkpoint_path = run_dir / "checkpoints" / "final.ckpt";
  write_checkpoint(result.checkpoint_path, net.to_checkpoint(&adam));

  const std::size_t n_samples = std::min<std::size_t>(2, val_samples.size());
  for (std::size_t i = 0; i < n_samples; ++i) {
    const Tensor pred = net.forward(val_samples[i].input);
    char name[64];
    std::snprintf(name, sizeof name, "val_%02zu", i);
    write_iidf(tensor_to_image(pred, 0, ColorSpace::kData),
               run_dir / "samples" / (std::string(name) + "_pred.iidf"));
    write_iidf(tensor_to_image(val_samples[i].target, 0, ColorSpace::kData),
               run_dir / "samples" / (std::string(name) + "_target.iidf"));
  }
  return result;
}

// ---- parameter accounting

namespace {

std::size_t conv_params(int in_c, int out_c) {
  return static_cast<std::size_t>(out_c) * in_c * 9 + static_cast<std::size_t>(out_c);
}

std::size_t network_params(int in_c, int out_c, const std::array<int, 3>& w,
                           bool low_res_head) {
  std::size_t total = conv_params(in_c, w[0]) + conv_params(w[0], w[1]) +
                      conv_params(w[1], w[2]);
  if (low_res_head) return total + conv_params(w[2], out_c);
  return total + conv_params(w[2] + w[1], w[1]) + conv_params(w[1] + w[0], w[0]) +
         conv_params(w[0], out_c);
}

}  // namespace

std::size_t pipeline_parameter_total(const std::array<int, 3>& widths) {
  return network_params(3, 1, widths, false) +   // gray0
         network_params(7, 2, widths, true) +    // chroma
         network_params(9, 3, widths, false) +   // albedo
         network_params(9, 3, widths, false);    // diffuse
}

std::array<int, 3> baseline_widths(const std::array<int, 3>& widths) {
  const std::size_t total = pipeline_parameter_total(widths);
  for (int j = 0; j <= 512; ++j) {
    const double m = 1.0 + static_cast<double>(j) / 8.0;
    std::array<int, 3> cand{};
    for (std::size_t i = 0; i < 3; ++i)
      cand[i] = static_cast<int>(std::ceil(widths[i] * m));
    if (network_params(3, 3, cand, false) >= total) return cand;
  }
  throw std::logic_error("baseline_widths: no match found");  // unreachable
}

// ---- inference

EncoderDecoder load_network(const std::filesystem::path& checkpoint_path) {
  return EncoderDecoder::from_checkpoint(read_checkpoint(checkpoint_path));
}

namespace {

Tensor forward_planes(const EncoderDecoder& net,
                      const std::vector<const LinearImage*>& planes) {
  return net.forward(stack_planes(planes));
}

void require_same_shape(const LinearImage& a, const LinearImage& b,
                        const char* what) {
  if (a.width() != b.width() || a.height() != b.height())
    throw DataError(std::string(what) + ": resolution mismatch");
}

}  // namespace

GrayDecomposition infer_gray(const EncoderDecoder& net, const LinearImage& image) {
  const Tensor out = forward_planes(net, {&image});
  const LinearImage inverse = tensor_to_image(out, 0, ColorSpace::kLinear);
  GrayDecomposition gray;
  gray.shading = shading_from_inverse(inverse);
  gray.albedo = safe_div(image, gray.shading, kEpsilon);
  return gray;
}

ChromaMap infer_chroma(const EncoderDecoder& net, const LinearImage& image,
                       const LinearImage& gray_shading,
                       const LinearImage& gray_albedo) {
  require_same_shape(image, gray_shading, "infer_chroma");
  require_same_shape(image, gray_albedo, "infer_chroma");
  const Tensor out = forward_planes(net, {&image, &gray_shading, &gray_albedo});
  LinearImage map = tensor_to_image(out, 0, ColorSpace::kData);
  // The head keeps values strictly inside (0,1); the chroma rails narrow
  // that a hair further so implied channel ratios stay bounded.
  for (float& v : map.data()) v = std::clamp(v, kChromaMin, kChromaMax);
  return ChromaMap(std::move(map));
}

LinearImage infer_albedo(const EncoderDecoder& net, const LinearImage& image,
                         const LinearImage& chroma_albedo,
                         const LinearImage& chroma_shading) {
  require_same_shape(image, chroma_albedo, "infer_albedo");
  require_same_shape(image, chroma_shading, "infer_albedo");
  const Tensor out =
      forward_planes(net, {&image, &chroma_albedo, &chroma_shading});
  return tensor_to_image(out, 0, ColorSpace::kLinear);
}

DiffuseDecomposition infer_diffuse(const EncoderDecoder& net,
                                   const LinearImage& image,
                                   const LinearImage& albedo,
                                   const LinearImage& rgb_shading) {
  require_same_shape(image, albedo, "infer_diffuse");
  require_same_shape(image, rgb_shading, "infer_diffuse");
  const Tensor out = forward_planes(net, {&image, &albedo, &rgb_shading});
  const LinearImage predicted = tensor_to_image(out, 0, ColorSpace::kLinear);
  DiffuseDecomposition diffuse;
  diffuse.shading = shading_from_inverse(predicted);
  // Recomputed from the rounded shading so the pair is consistent to the
  // bijection's own round-trip accuracy.
  diffuse.inverse = inverse_shading(diffuse.shading);
  diffuse.residual = compute_residual(image, albedo, diffuse.shading);
  return diffuse;
}

LinearImage infer_baseline(const EncoderDecoder& net, const LinearImage& image) {
  const Tensor out = forward_planes(net, {&image});
  return tensor_to_image(out, 0, ColorSpace::kLinear);
}

IntrinsicComponents decompose(const LinearImage& image, GrayMode mode,
                              const PipelineNets& nets,
                              const GrayDecomposition* oracle_gray) {
  if (!nets.chroma || !nets.albedo || !nets.diffuse)
    throw UsageError("decompose: chroma, albedo, and diffuse networks required");

  GrayDecomposition gray;
  if (mode == GrayMode::kOracle) {
    if (!oracle_gray)
      throw UsageError("decompose: oracle mode needs a grayscale decomposition");
    gray = *oracle_gray;
  } else {
    if (!nets.gray0)
      throw UsageError("decompose: net mode needs the gray0 network");
    gray = infer_gray(*nets.gray0, image);
  }

  IntrinsicComponents comps;
  comps.image = image;
  comps.gray_shading = gray.shading;
  comps.gray_albedo = gray.albedo;

  ChromaMap chroma =
      infer_chroma(*nets.chroma, image, gray.shading, gray.albedo);
  auto [chroma_albedo, chroma_shading] =
      albedo_from_chroma(image, gray.shading, chroma);
  comps.chroma_albedo = std::move(chroma_albedo);
  comps.chroma_shading = std::move(chroma_shading);

  comps.albedo =
      infer_albedo(*nets.albedo, image, comps.chroma_albedo, comps.chroma_shading);
  comps.rgb_shading = safe_div(image, comps.albedo, kEpsilon);

  DiffuseDecomposition diffuse =
      infer_diffuse(*nets.diffuse, image, comps.albedo, comps.rgb_shading);
  comps.shading = std::move(diffuse.shading);
  comps.residual = std::move(diffuse.residual);
  comps.inverse = std::move(diffuse.inverse);
  comps.chroma = std::move(chroma);

  comps.validate();
  return comps;
}

}  // namespace cdi
