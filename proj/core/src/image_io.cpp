#include "cdi/image_io.hpp"

#include <png.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

#include "cdi/errors.hpp"

namespace cdi {
namespace {

constexpr char kMagic[4] = {'I', 'I', 'D', 'F'};

void put_u32(std::vector<unsigned char>& out, uint32_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

uint32_t get_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

std::vector<unsigned char> read_all_bytes(const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "rb");
  if (!f) throw DataError("cannot open for reading: " + path.string());
  std::fseek(f, 0, SEEK_END);
  const long len = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  if (len < 0) {
    std::fclose(f);
    throw DataError("cannot determine file size: " + path.string());
  }
  std::vector<unsigned char> bytes(static_cast<size_t>(len));
  const size_t got = len ? std::fread(bytes.data(), 1, bytes.size(), f) : 0;
  std::fclose(f);
  if (got != bytes.size())
    throw DataError("short read: " + path.string());
  return bytes;
}

void write_all_bytes(const std::filesystem::path& path,
                     const std::vector<unsigned char>& bytes) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw DataError("cannot open for writing: " + path.string());
  const size_t put = std::fwrite(bytes.data(), 1, bytes.size(), f);
  std::fclose(f);
  if (put != bytes.size())
    throw DataError("short write: " + path.string());
}

}  // namespace

LinearImage read_iidf(const std::filesystem::path& path) {
  const std::vector<unsigned char> bytes = read_all_bytes(path);
  if (bytes.size() < 20)
    throw DataError("iidf: truncated header: " + path.string());
  if (std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw DataError("iidf: bad magic: " + path.string());
  const uint32_t w = get_u32(bytes.data() + 4);
  const uint32_t h = get_u32(bytes.data() + 8);
  const uint32_t c = get_u32(bytes.data() + 12);
  const uint32_t cs = get_u32(bytes.data() + 16);
  if (w == 0 || h == 0)
    throw DataError("iidf: zero dimension: " + path.string());
  if (c < 1 || c > 3)
    throw DataError("iidf: channel count must be 1..3: " + path.string());
  if (cs > 2)
    throw DataError("iidf: unknown colorspace tag: " + path.string());
  const uint64_t count = uint64_t{w} * h * c;
  if (count > (uint64_t{1} << 31))
    throw DataError("iidf: dimensions overflow: " + path.string());
  if (bytes.size() != 20 + count * 4)
    throw DataError("iidf: payload size mismatch: " + path.string());

  std::vector<float> data(count);
  const unsigned char* p = bytes.data() + 20;
  for (uint64_t i = 0; i < count; ++i, p += 4)
    data[i] = std::bit_cast<float>(get_u32(p));
  for (float v : data)
    if (!std::isfinite(v))
      throw DataError("iidf: non-finite value: " + path.string());

  return LinearImage::from_data(static_cast<int>(w), static_cast<int>(h),
                                static_cast<int>(c),
                                static_cast<ColorSpace>(cs), std::move(data));
}

void write_iidf(const LinearImage& img, const std::filesystem::path& path) {
  img.validate();
  std::vector<unsigned char> bytes;
  bytes.reserve(20 + img.size() * 4);
  bytes.insert(bytes.end(), kMagic, kMagic + 4);
  put_u32(bytes, static_cast<uint32_t>(img.width()));
  put_u32(bytes, static_cast<uint32_t>(img.height()));
  put_u32(bytes, static_cast<uint32_t>(img.channels()));
  put_u32(bytes, static_cast<uint32_t>(img.color_space()));
  for (float v : img.data()) put_u32(bytes, std::bit_cast<uint32_t>(v));
  write_all_bytes(path, bytes);
}

namespace {

struct PngReadCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* file = nullptr;
  ~PngReadCloser() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (file) std::fclose(file);
  }
};

struct PngWriteCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* file = nullptr;
  ~PngWriteCloser() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (file) std::fclose(file);
  }
};

}  // namespace

LinearImage read_png(const std::filesystem::path& path) {
  PngReadCloser ctx;
  ctx.file = std::fopen(path.string().c_str(), "rb");
  if (!ctx.file) throw DataError("cannot open for reading: " + path.string());

  unsigned char sig[8];
  if (std::fread(sig, 1, 8, ctx.file) != 8 || png_sig_cmp(sig, 0, 8))
    throw DataError("png: bad signature: " + path.string());

  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                   nullptr);
  if (!ctx.png) throw DataError("png: reader init failed");
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.info) throw DataError("png: info init failed");
  if (setjmp(png_jmpbuf(ctx.png)))
    throw DataError("png: decode failed: " + path.string());

  png_init_io(ctx.png, ctx.file);
  png_set_sig_bytes(ctx.png, 8);
  png_read_info(ctx.png, ctx.info);

  const png_uint_32 w = png_get_image_width(ctx.png, ctx.info);
  const png_uint_32 h = png_get_image_height(ctx.png, ctx.info);
  const int bit_depth = png_get_bit_depth(ctx.png, ctx.info);
  const int color_type = png_get_color_type(ctx.png, ctx.info);

  // Normalize every input variant to 8-bit gray or RGB.
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(ctx.png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
    png_set_expand_gray_1_2_4_to_8(ctx.png);
  if (png_get_valid(ctx.png, ctx.info, PNG_INFO_tRNS))
    png_set_tRNS_to_alpha(ctx.png);
  if (bit_depth == 16) png_set_strip_16(ctx.png);
  png_set_strip_alpha(ctx.png);
  png_read_update_info(ctx.png, ctx.info);

  const int out_type = png_get_color_type(ctx.png, ctx.info);
  const int channels =
      (out_type == PNG_COLOR_TYPE_GRAY) ? 1
      : (out_type == PNG_COLOR_TYPE_RGB) ? 3
                                         : 0;
  if (channels == 0)
    throw DataError("png: unsupported color type: " + path.string());

  const size_t row_bytes = png_get_rowbytes(ctx.png, ctx.info);
  if (row_bytes != static_cast<size_t>(w) * channels)
    throw DataError("png: unexpected row size: " + path.string());

  std::vector<unsigned char> pixels(row_bytes * h);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = pixels.data() + y * row_bytes;
  png_read_image(ctx.png, rows.data());
  png_read_end(ctx.png, nullptr);

  LinearImage img(static_cast<int>(w), static_cast<int>(h), channels,
                  ColorSpace::kSrgb);
  for (int c = 0; c < channels; ++c) {
    std::span<float> plane = img.channel(c);
    for (png_uint_32 y = 0; y < h; ++y)
      for (png_uint_32 x = 0; x < w; ++x)
        plane[y * w + x] =
            static_cast<float>(pixels[y * row_bytes + x * channels + c]) /
            255.0f;
  }
  return img;
}

void write_png(const LinearImage& img, const std::filesystem::path& path) {
  img.validate();
  if (img.channels() != 1 && img.channels() != 3)
    throw DataError("png: can only write 1- or 3-channel images");
  if (img.color_space() != ColorSpace::kSrgb)
    throw DataError("png: image must be sRGB-encoded before writing");

  const int w = img.width();
  const int h = img.height();
  const int channels = img.channels();
  std::vector<unsigned char> pixels(static_cast<size_t>(w) * h * channels);
  for (int c = 0; c < channels; ++c) {
    std::span<const float> plane = img.channel(c);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const float v = std::clamp(plane[y * w + x], 0.0f, 1.0f);
        pixels[(static_cast<size_t>(y) * w + x) * channels + c] =
            static_cast<unsigned char>(std::lround(v * 255.0f));
      }
    }
  }

  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  PngWriteCloser ctx;
  ctx.file = std::fopen(path.string().c_str(), "wb");
  if (!ctx.file) throw DataError("cannot open for writing: " + path.string());

  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                    nullptr);
  if (!ctx.png) throw DataError("png: writer init failed");
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.info) throw DataError("png: info init failed");
  if (setjmp(png_jmpbuf(ctx.png)))
    throw DataError("png: encode failed: " + path.string());

  png_init_io(ctx.png, ctx.file);
  png_set_IHDR(ctx.png, ctx.info, static_cast<png_uint_32>(w),
               static_cast<png_uint_32>(h), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx.png, ctx.info);

  std::vector<png_bytep> rows(h);
  const size_t row_bytes = static_cast<size_t>(w) * channels;
  for (int y = 0; y < h; ++y) rows[y] = pixels.data() + y * row_bytes;
  png_write_image(ctx.png, rows.data());
  png_write_end(ctx.png, nullptr);
}

namespace {

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  for (char& ch : ext) ch = static_cast<char>(std::tolower(ch));
  return ext;
}

}  // namespace

LinearImage read_image(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".iidf") return read_iidf(path);
  if (ext == ".png") return read_png(path);
  throw DataError("unsupported image extension: " + path.string());
}

void write_image(const LinearImage& img, const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".iidf") return write_iidf(img, path);
  if (ext == ".png") return write_png(img, path);
  throw DataError("unsupported image extension: " + path.string());
}

}  // namespace cdi
