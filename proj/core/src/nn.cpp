#include "cdi/nn.hpp"

#include <algorithm>
#include <cmath>

#include "cdi/errors.hpp"
#include "cdi/tensor_ops.hpp"

namespace cdi {

void NetworkConfig::validate() const {
  if (in_channels < 1 || in_channels > 64) {
    throw DataError("network: in_channels out of range");
  }
  if (out_channels < 1 || out_channels > 64) {
    throw DataError("network: out_channels out of range");
  }
  for (const int w : widths) {
    if (w < 1 || w > 1024) throw DataError("network: width out of range");
  }
  if (!(leaky_slope >= 0.0f) || leaky_slope >= 1.0f) {
    throw DataError("network: leaky_slope must be in [0, 1)");
  }
}

EncoderDecoder::ConvLayer EncoderDecoder::make_layer(const std::string& name,
                                                     int in_c, int out_c,
                                                     Rng& rng) {
  ConvLayer layer;
  layer.name = name;
  const Shape ws{out_c, in_c, 3, 3};
  std::vector<float> data(ws.numel());
  const double bound = std::sqrt(6.0 / (static_cast<double>(in_c) * 9.0));
  for (float& v : data) v = static_cast<float>(rng.uniform(-bound, bound));
  layer.weight = Tensor::from_vector(ws, std::move(data), true);
  layer.bias = Tensor::zeros(Shape{1, out_c, 1, 1}, true);
  return layer;
}

EncoderDecoder::EncoderDecoder(const NetworkConfig& config, Rng& rng)
    : config_(config) {
  config_.validate();
  const auto [w0, w1, w2] = config_.widths;
  layers_.push_back(make_layer("enc0", config_.in_channels, w0, rng));
  layers_.push_back(make_layer("enc1", w0, w1, rng));
  layers_.push_back(make_layer("enc2", w1, w2, rng));
  if (!config_.low_res_head) {
    layers_.push_back(make_layer("dec1", w2 + w1, w1, rng));
    layers_.push_back(make_layer("dec0", w1 + w0, w0, rng));
    layers_.push_back(make_layer("head", w0, config_.out_channels, rng));
  } else {
    layers_.push_back(make_layer("head", w2, config_.out_channels, rng));
  }
}

Tensor EncoderDecoder::forward(const Tensor& x) const {
  const Shape& s = x.shape();
  if (s.c != config_.in_channels) {
    throw DataError("network: input has " + std::to_string(s.c) +
                    " channels, expected " + std::to_string(config_.in_channels));
  }
  if (s.h % 4 != 0 || s.w % 4 != 0) {
    throw DataError("network: input dims must be divisible by 4, got " +
                    s.to_string());
  }
  const float slope = config_.leaky_slope;
  auto layer = [&](const char* name) -> const ConvLayer& {
    for (const ConvLayer& l : layers_) {
      if (l.name == name) return l;
    }
    throw DataError(std::string("network: missing layer ") + name);
  };
  auto block = [&](const Tensor& in, const ConvLayer& l) {
    return leaky_relu(conv3x3(in, l.weight, l.bias), slope);
  };

  const Tensor e0 = block(x, layer("enc0"));
  const Tensor e1 = block(avg_pool2(e0), layer("enc1"));
  const Tensor e2 = block(avg_pool2(e1), layer("enc2"));
  if (config_.low_res_head) {
    const ConvLayer& head = layer("head");
    return sigmoid(conv3x3(e2, head.weight, head.bias));
  }
  const Tensor d1 = block(concat_channels(upsample_bilinear2(e2), e1), layer("dec1"));
  const Tensor d0 = block(concat_channels(upsample_bilinear2(d1), e0), layer("dec0"));
  const ConvLayer& head = layer("head");
  return sigmoid(conv3x3(d0, head.weight, head.bias));
}

std::vector<Tensor> EncoderDecoder::parameters() const {
  std::vector<Tensor> out;
  out.reserve(layers_.size() * 2);
  for (const ConvLayer& l : layers_) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

std::vector<std::pair<std::string, Tensor>> EncoderDecoder::named_parameters()
    const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(layers_.size() * 2);
  for (const ConvLayer& l : layers_) {
    out.emplace_back(l.name + ".weight", l.weight);
    out.emplace_back(l.name + ".bias", l.bias);
  }
  return out;
}

std::size_t EncoderDecoder::parameter_count() const {
  std::size_t count = 0;
  for (const ConvLayer& l : layers_) {
    count += l.weight.shape().numel() + l.bias.shape().numel();
  }
  return count;
}

void EncoderDecoder::load_parameters(const CheckpointData& data) {
  auto named = named_parameters();
  if (data.params.size() != named.size()) {
    throw DataError("checkpoint has " + std::to_string(data.params.size()) +
                    " blobs, network expects " + std::to_string(named.size()));
  }
  for (auto& [name, tensor] : named) {
    const TensorBlob* match = nullptr;
    for (const TensorBlob& blob : data.params) {
      if (blob.name == name) {
        match = &blob;
        break;
      }
    }
    if (!match) throw DataError("checkpoint is missing blob '" + name + "'");
    if (!(match->shape == tensor.shape())) {
      throw DataError("checkpoint blob '" + name + "' has shape " +
                      match->shape.to_string() + ", network expects " +
                      tensor.shape().to_string());
    }
    std::ranges::copy(match->data, tensor.value().begin());
  }
}

CheckpointData EncoderDecoder::to_checkpoint(const Adam* optimizer) const {
  CheckpointData data;
  for (const auto& [name, tensor] : named_parameters()) {
    TensorBlob blob;
    blob.name = name;
    blob.shape = tensor.shape();
    blob.data.assign(tensor.value().begin(), tensor.value().end());
    data.params.push_back(std::move(blob));
  }
  if (optimizer) {
    if (optimizer->params().size() != data.params.size()) {
      throw DataError("optimizer does not match network parameters");
    }
    data.has_optimizer = true;
    data.optimizer_step = optimizer->step_count();
    data.moment1 = optimizer->moment1();
    data.moment2 = optimizer->moment2();
  }
  return data;
}

namespace {

const TensorBlob* find_blob(const CheckpointData& data, const std::string& name) {
  for (const TensorBlob& blob : data.params) {
    if (blob.name == name) return &blob;
  }
  return nullptr;
}

}  // namespace

EncoderDecoder EncoderDecoder::from_checkpoint(const CheckpointData& data) {
  const TensorBlob* enc0 = find_blob(data, "enc0.weight");
  const TensorBlob* enc1 = find_blob(data, "enc1.weight");
  const TensorBlob* enc2 = find_blob(data, "enc2.weight");
  const TensorBlob* head = find_blob(data, "head.weight");
  if (!enc0 || !enc1 || !enc2 || !head) {
    throw DataError("checkpoint does not describe this network family");
  }
  NetworkConfig config;
  config.in_channels = enc0->shape.c;
  config.widths = {enc0->shape.n, enc1->shape.n, enc2->shape.n};
  config.out_channels = head->shape.n;
  config.low_res_head = find_blob(data, "dec1.weight") == nullptr;
  Rng rng(0);
  EncoderDecoder net(config, rng);
  net.load_parameters(data);
  return net;
}

}  // namespace cdi
