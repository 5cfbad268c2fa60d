#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "cdi/checkpoint.hpp"
#include "cdi/optim.hpp"
#include "cdi/rng.hpp"
#include "cdi/tensor.hpp"

namespace cdi {

struct NetworkConfig {
  int in_channels = 3;
  int out_channels = 3;
  // Encoder widths at full, 1/2, and 1/4 resolution.
  std::array<int, 3> widths{16, 32, 64};
  // When set, the head reads the bottleneck and emits at 1/4 resolution;
  // otherwise a skip-connected decoder restores full resolution first.
  bool low_res_head = false;
  float leaky_slope = 0.1f;

  void validate() const;
};

// Small encoder-decoder: three conv+leaky-relu encoder levels with 2x average
// pooling between them, then (unless low_res_head) two decoder levels of
// 2x bilinear upsampling with channel-concatenated skips, and a sigmoid conv
// head whose outputs are strictly inside (0, 1).
class EncoderDecoder {
 public:
  EncoderDecoder(const NetworkConfig& config, Rng& rng);

  static EncoderDecoder from_checkpoint(const CheckpointData& data);

  // Builds a fresh graph over the parameter leaves. Input must have
  // in_channels channels and height/width divisible by 4.
  Tensor forward(const Tensor& x) const;

  std::vector<Tensor> parameters() const;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::size_t parameter_count() const;
  const NetworkConfig& config() const { return config_; }

  // Copies blob values into the matching parameters; the blob set must
  // exactly match this network's names and shapes.
  void load_parameters(const CheckpointData& data);
  CheckpointData to_checkpoint(const Adam* optimizer = nullptr) const;

 private:
  struct ConvLayer {
    std::string name;
    Tensor weight, bias;
  };

  ConvLayer make_layer(const std::string& name, int in_c, int out_c, Rng& rng);

  NetworkConfig config_;
  std::vector<ConvLayer> layers_;  // enc0, enc1, enc2, [dec1, dec0,] head
};

}  // namespace cdi
