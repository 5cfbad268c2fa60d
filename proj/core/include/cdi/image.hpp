#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cdi {

// Colorspace tag carried by every image. `kData` marks signed auxiliary maps
// (residuals, masks, chroma targets) that are exempt from the non-negativity
// invariant.
enum class ColorSpace : std::uint32_t {
  kLinear = 0,
  kSrgb = 1,
  kData = 2,
};

// Planar float image, channel-major: data[c*w*h + y*w + x].
//
// Invariants, enforced by the checked factories and validate():
//   - data length == width*height*channels, channels in {1,2,3}
//   - every value finite
//   - values non-negative unless tagged kData
class LinearImage {
 public:
  LinearImage() = default;
  LinearImage(int width, int height, int channels, ColorSpace cs, float fill = 0.0f);

  static LinearImage from_data(int width, int height, int channels, ColorSpace cs,
                               std::vector<float> data);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  ColorSpace color_space() const { return color_space_; }
  bool empty() const { return data_.empty(); }

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }
  std::size_t size() const { return data_.size(); }

  float& at(int c, int y, int x) {
    return data_[plane_offset(c) + static_cast<std::size_t>(y) * width_ + x];
  }
  float at(int c, int y, int x) const {
    return data_[plane_offset(c) + static_cast<std::size_t>(y) * width_ + x];
  }

  std::span<float> channel(int c) { return {data_.data() + plane_offset(c), pixel_count()}; }
  std::span<const float> channel(int c) const {
    return {data_.data() + plane_offset(c), pixel_count()};
  }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  // Retags without conversion; revalidates the non-negativity rule.
  LinearImage retagged(ColorSpace cs) const;

  bool same_shape(const LinearImage& other) const {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }

  // Throws DataError if any invariant is broken.
  void validate() const;

 private:
  std::size_t plane_offset(int c) const { return static_cast<std::size_t>(c) * pixel_count(); }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  ColorSpace color_space_ = ColorSpace::kLinear;
  std::vector<float> data_;
};

// ---- scalar transfer-function kernels (double precision; shared by the
// ---- image ops and by tests that need an independent reference path)

// sRGB electro-optical transfer: encoded [0,1] -> linear [0,1].
double srgb_eotf(double encoded);
// Inverse: linear [0,1] -> encoded [0,1].
double srgb_oetf(double linear);
// Rec.709 luma weights, anchored on green so gray inputs are reproduced
// exactly: lum = g + 0.2126*(r-g) + 0.0722*(b-g).
double luminance709(double r, double g, double b);

// ---- whole-image colorspace ops

// Requires tag kSrgb and values in [0,1]; throws DataError otherwise.
LinearImage srgb_to_linear(const LinearImage& img);
// Requires tag kLinear; clamps to [0,1] before encoding (that is the contract,
// not an error path).
LinearImage linear_to_srgb(const LinearImage& img);
// 3-channel -> 1-channel Rec.709 luminance; tag preserved.
LinearImage luminance(const LinearImage& img);

// ---- elementwise arithmetic
//
// Tag rule: arithmetic that can produce signed values returns kData; products
// and clips of non-negative inputs stay kLinear. Shapes must match exactly
// except where a 1-channel operand is broadcast over a 3-channel one.

LinearImage mul(const LinearImage& a, const LinearImage& b);
LinearImage add(const LinearImage& a, const LinearImage& b);
LinearImage sub(const LinearImage& a, const LinearImage& b);
LinearImage scale(const LinearImage& a, float s);
LinearImage clip(const LinearImage& a, float lo, float hi);

// a / max(b, eps). The guard takes over only where b < eps, so the quotient
// is exact wherever the divisor is healthy. Broadcasts a 1-channel divisor.
LinearImage safe_div(const LinearImage& a, const LinearImage& b, float eps);

// 1-channel -> n identical channels.
LinearImage broadcast(const LinearImage& mono, int channels);

float min_value(const LinearImage& a);
float max_value(const LinearImage& a);
double mean_value(const LinearImage& a);
double max_abs_diff(const LinearImage& a, const LinearImage& b);

// ---- resampling

// Half-pixel-centered bilinear resize with edge clamp; constants are
// preserved exactly. Any channel count; tag preserved.
LinearImage resize_bilinear(const LinearImage& img, int new_width, int new_height);
// 2x2 box average; requires even width and height.
LinearImage downsample2(const LinearImage& img);

}  // namespace cdi
