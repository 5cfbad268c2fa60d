#include "cdi/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cdi/errors.hpp"

namespace cdi {

namespace {

constexpr std::int64_t kMaxDimension = 1 << 20;

void check_dims(int width, int height, int channels) {
  if (width <= 0 || height <= 0) throw DataError("image dimensions must be positive");
  if (width > kMaxDimension || height > kMaxDimension ||
      static_cast<std::int64_t>(width) * height * channels > (std::int64_t{1} << 31)) {
    throw DataError("image dimension overflow");
  }
  if (channels < 1 || channels > 3) {
    throw DataError("channel count must be 1, 2, or 3, got " + std::to_string(channels));
  }
}

}  // namespace

LinearImage::LinearImage(int width, int height, int channels, ColorSpace cs, float fill)
    : width_(width), height_(height), channels_(channels), color_space_(cs) {
  check_dims(width, height, channels);
  if (!std::isfinite(fill)) throw DataError("non-finite fill value");
  if (cs != ColorSpace::kData && fill < 0.0f) throw DataError("negative fill in non-data image");
  data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

LinearImage LinearImage::from_data(int width, int height, int channels, ColorSpace cs,
                                   std::vector<float> data) {
  check_dims(width, height, channels);
  LinearImage img;
  img.width_ = width;
  img.height_ = height;
  img.channels_ = channels;
  img.color_space_ = cs;
  img.data_ = std::move(data);
  img.validate();
  return img;
}

LinearImage LinearImage::retagged(ColorSpace cs) const {
  LinearImage out = *this;
  out.color_space_ = cs;
  out.validate();
  return out;
}

void LinearImage::validate() const {
  check_dims(width_, height_, channels_);
  if (data_.size() != static_cast<std::size_t>(width_) * height_ * channels_) {
    throw DataError("image data length does not match width*height*channels");
  }
  const bool allow_negative = color_space_ == ColorSpace::kData;
  for (float v : data_) {
    if (!std::isfinite(v)) throw DataError("image contains non-finite values");
    if (!allow_negative && v < 0.0f) {
      throw DataError("negative value in image tagged linear/srgb");
    }
  }
}

// ---- scalar kernels

double srgb_eotf(double encoded) {
  return encoded <= 0.04045 ? encoded / 12.92 : std::pow((encoded + 0.055) / 1.055, 2.4);
}

double srgb_oetf(double linear) {
  if (linear <= 0.0031308) return 12.92 * linear;
  // 1.055 - 0.055 != 1 in double, so the power branch misses the upper fixed
  // point by one ulp; pin it.
  if (linear >= 1.0) return 1.0;
  return 1.055 * std::pow(linear, 1.0 / 2.4) - 0.055;
}

double luminance709(double r, double g, double b) {
  return g + 0.2126 * (r - g) + 0.0722 * (b - g);
}

// ---- whole-image ops

LinearImage srgb_to_linear(const LinearImage& img) {
  if (img.color_space() != ColorSpace::kSrgb) {
    throw DataError("srgb_to_linear expects an sRGB-tagged image");
  }
  std::vector<float> out(img.size());
  auto src = img.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const float v = src[i];
    if (v < 0.0f || v > 1.0f) throw DataError("sRGB value out of [0,1]");
    out[i] = static_cast<float>(srgb_eotf(v));
  }
  return LinearImage::from_data(img.width(), img.height(), img.channels(), ColorSpace::kLinear,
                                std::move(out));
}

LinearImage linear_to_srgb(const LinearImage& img) {
  if (img.color_space() != ColorSpace::kLinear) {
    throw DataError("linear_to_srgb expects a linear-tagged image");
  }
  std::vector<float> out(img.size());
  auto src = img.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double v = std::clamp(static_cast<double>(src[i]), 0.0, 1.0);
    out[i] = static_cast<float>(srgb_oetf(v));
  }
  return LinearImage::from_data(img.width(), img.height(), img.channels(), ColorSpace::kSrgb,
                                std::move(out));
}

LinearImage luminance(const LinearImage& img) {
  if (img.channels() != 3) throw DataError("luminance expects a 3-channel image");
  const std::size_t n = img.pixel_count();
  std::vector<float> out(n);
  auto r = img.channel(0);
  auto g = img.channel(1);
  auto b = img.channel(2);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = static_cast<float>(luminance709(r[i], g[i], b[i]));
  }
  return LinearImage::from_data(img.width(), img.height(), 1, img.color_space(), std::move(out));
}

// ---- elementwise

namespace {

void check_same_shape(const LinearImage& a, const LinearImage& b, const char* op) {
  if (!a.same_shape(b)) throw DataError(std::string(op) + ": shape mismatch");
}

bool is_data(const LinearImage& a) { return a.color_space() == ColorSpace::kData; }

}  // namespace

LinearImage mul(const LinearImage& a, const LinearImage& b) {
  check_same_shape(a, b, "mul");
  std::vector<float> out(a.size());
  auto pa = a.data();
  auto pb = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] * pb[i];
  const ColorSpace cs = (is_data(a) || is_data(b)) ? ColorSpace::kData : ColorSpace::kLinear;
  return LinearImage::from_data(a.width(), a.height(), a.channels(), cs, std::move(out));
}

LinearImage add(const LinearImage& a, const LinearImage& b) {
  check_same_shape(a, b, "add");
  std::vector<float> out(a.size());
  auto pa = a.data();
  auto pb = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] + pb[i];
  const ColorSpace cs = (is_data(a) || is_data(b)) ? ColorSpace::kData : ColorSpace::kLinear;
  return LinearImage::from_data(a.width(), a.height(), a.channels(), cs, std::move(out));
}

LinearImage sub(const LinearImage& a, const LinearImage& b) {
  check_same_shape(a, b, "sub");
  std::vector<float> out(a.size());
  auto pa = a.data();
  auto pb = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] - pb[i];
  return LinearImage::from_data(a.width(), a.height(), a.channels(), ColorSpace::kData,
                                std::move(out));
}

LinearImage scale(const LinearImage& a, float s) {
  std::vector<float> out(a.size());
  auto pa = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = pa[i] * s;
  const ColorSpace cs = (s < 0.0f) ? ColorSpace::kData : a.color_space();
  return LinearImage::from_data(a.width(), a.height(), a.channels(), cs, std::move(out));
}

LinearImage clip(const LinearImage& a, float lo, float hi) {
  std::vector<float> out(a.size());
  auto pa = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(pa[i], lo, hi);
  const ColorSpace cs =
      (lo >= 0.0f && a.color_space() == ColorSpace::kData) ? ColorSpace::kLinear : a.color_space();
  return LinearImage::from_data(a.width(), a.height(), a.channels(), cs, std::move(out));
}

LinearImage safe_div(const LinearImage& a, const LinearImage& b, float eps) {
  if (eps <= 0.0f) throw DataError("safe_div: eps must be positive");
  const bool bcast = b.channels() == 1 && a.channels() != 1;
  if (!bcast) check_same_shape(a, b, "safe_div");
  if (bcast && (a.width() != b.width() || a.height() != b.height())) {
    throw DataError("safe_div: shape mismatch");
  }
  std::vector<float> out(a.size());
  const std::size_t n = a.pixel_count();
  for (int c = 0; c < a.channels(); ++c) {
    auto pa = a.channel(c);
    auto pb = b.channel(bcast ? 0 : c);
    float* po = out.data() + static_cast<std::size_t>(c) * n;
    for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] / std::max(pb[i], eps);
  }
  const ColorSpace cs = (is_data(a) || is_data(b)) ? ColorSpace::kData : ColorSpace::kLinear;
  return LinearImage::from_data(a.width(), a.height(), a.channels(), cs, std::move(out));
}

LinearImage broadcast(const LinearImage& mono, int channels) {
  if (mono.channels() != 1) throw DataError("broadcast expects a 1-channel image");
  std::vector<float> out(mono.pixel_count() * channels);
  auto src = mono.channel(0);
  for (int c = 0; c < channels; ++c) {
    std::copy(src.begin(), src.end(), out.begin() + static_cast<std::size_t>(c) * src.size());
  }
  return LinearImage::from_data(mono.width(), mono.height(), channels, mono.color_space(),
                                std::move(out));
}

float min_value(const LinearImage& a) {
  return *std::min_element(a.data().begin(), a.data().end());
}

float max_value(const LinearImage& a) {
  return *std::max_element(a.data().begin(), a.data().end());
}

double mean_value(const LinearImage& a) {
  double acc = 0.0;
  for (float v : a.data()) acc += v;
  return acc / static_cast<double>(a.size());
}

double max_abs_diff(const LinearImage& a, const LinearImage& b) {
  check_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  auto pa = a.data();
  auto pb = b.data();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(pa[i]) - static_cast<double>(pb[i])));
  }
  return m;
}

// ---- resampling

LinearImage resize_bilinear(const LinearImage& img, int new_width, int new_height) {
  if (new_width <= 0 || new_height <= 0) throw DataError("resize: non-positive target size");
  if (new_width == img.width() && new_height == img.height()) return img;

  LinearImage out(new_width, new_height, img.channels(), img.color_space());
  const double sx = static_cast<double>(img.width()) / new_width;
  const double sy = static_cast<double>(img.height()) / new_height;
  for (int c = 0; c < img.channels(); ++c) {
    auto src = img.channel(c);
    auto dst = out.channel(c);
    for (int y = 0; y < new_height; ++y) {
      const double fy = (y + 0.5) * sy - 0.5;
      const int fy0 = static_cast<int>(std::floor(fy));
      const int y0 = std::clamp(fy0, 0, img.height() - 1);
      const int y1 = std::clamp(fy0 + 1, 0, img.height() - 1);
      const double wy = fy - std::floor(fy);
      for (int x = 0; x < new_width; ++x) {
        const double fx = (x + 0.5) * sx - 0.5;
        const int fx0 = static_cast<int>(std::floor(fx));
        const int x0 = std::clamp(fx0, 0, img.width() - 1);
        const int x1 = std::clamp(fx0 + 1, 0, img.width() - 1);
        const double wx = fx - std::floor(fx);
        const double v00 = src[static_cast<std::size_t>(y0) * img.width() + x0];
        const double v01 = src[static_cast<std::size_t>(y0) * img.width() + x1];
        const double v10 = src[static_cast<std::size_t>(y1) * img.width() + x0];
        const double v11 = src[static_cast<std::size_t>(y1) * img.width() + x1];
        const double top = v00 + (v01 - v00) * wx;
        const double bot = v10 + (v11 - v10) * wx;
        dst[static_cast<std::size_t>(y) * new_width + x] =
            static_cast<float>(top + (bot - top) * wy);
      }
    }
  }
  return out;
}

LinearImage downsample2(const LinearImage& img) {
  if (img.width() % 2 != 0 || img.height() % 2 != 0) {
    throw DataError("downsample2 requires even dimensions");
  }
  const int w = img.width() / 2;
  const int h = img.height() / 2;
  LinearImage out(w, h, img.channels(), img.color_space());
  for (int c = 0; c < img.channels(); ++c) {
    auto src = img.channel(c);
    auto dst = out.channel(c);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(2 * y) * img.width() + 2 * x;
        dst[static_cast<std::size_t>(y) * w + x] =
            0.25f * (src[i] + src[i + 1] + src[i + img.width()] + src[i + img.width() + 1]);
      }
    }
  }
  return out;
}

}  // namespace cdi
