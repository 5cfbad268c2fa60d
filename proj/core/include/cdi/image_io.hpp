#pragma once

#include <filesystem>

#include "cdi/image.hpp"

namespace cdi {

// IIDF float container, little-endian:
//   magic "IIDF" | u32 width | u32 height | u32 channels |
//   u32 colorspace (0=linear, 1=srgb, 2=data) | f32 data, planar channel-major
// write_iidf . read_iidf is the identity on (width, height, channels, data)
// bit for bit.
LinearImage read_iidf(const std::filesystem::path& path);
void write_iidf(const LinearImage& img, const std::filesystem::path& path);

// 8-bit PNG. Reads gray, RGB, or RGBA (alpha dropped); returns values in
// [0,1] tagged kSrgb. Writes 1-channel (gray) or 3-channel (RGB) images,
// which must already be sRGB-encoded.
LinearImage read_png(const std::filesystem::path& path);
void write_png(const LinearImage& img, const std::filesystem::path& path);

// Dispatch by extension: .iidf or .png.
LinearImage read_image(const std::filesystem::path& path);
void write_image(const LinearImage& img, const std::filesystem::path& path);

}  // namespace cdi
