#include <png.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "cdi/errors.hpp"
#include "cdi/image.hpp"
#include "cdi/image_io.hpp"
#include "cdi/rng.hpp"
#include "doctest.h"

namespace fs = std::filesystem;
using namespace cdi;

namespace {

fs::path temp_dir() {
  const fs::path dir = fs::current_path() / "tmp_test_imaging";
  fs::create_directories(dir);
  return dir;
}

LinearImage random_image(int w, int h, int c, ColorSpace cs, uint64_t seed,
                         float lo = 0.0f, float hi = 1.0f) {
  Rng rng(seed);
  LinearImage img(w, h, c, cs);
  for (float& v : img.data()) v = rng.uniformf(lo, hi);
  return img;
}

std::vector<unsigned char> slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("srgb transfer functions: fixed points and midpoint") {
  CHECK(srgb_eotf(0.0) == 0.0);
  CHECK(srgb_eotf(1.0) == 1.0);
  CHECK(srgb_oetf(0.0) == 0.0);
  CHECK(srgb_oetf(1.0) == 1.0);

  const double direct = std::pow((0.5 + 0.055) / 1.055, 2.4);
  CHECK(srgb_eotf(0.5) == doctest::Approx(direct).epsilon(1e-12));
  CHECK(srgb_eotf(0.5) == doctest::Approx(0.2140).epsilon(5e-4));

  // Continuity at the linear/power join.
  CHECK(srgb_eotf(0.04045) == doctest::Approx(0.04045 / 12.92).epsilon(1e-6));
}

TEST_CASE("srgb transfer functions: round trip under 1e-6 on a dense grid") {
  double worst = 0.0;
  for (int i = 0; i <= 100000; ++i) {
    const double x = i / 100000.0;
    worst = std::max(worst, std::abs(srgb_eotf(srgb_oetf(x)) - x));
    worst = std::max(worst, std::abs(srgb_oetf(srgb_eotf(x)) - x));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("srgb image conversions: round trip, tags, and range checks") {
  const LinearImage encoded = random_image(31, 17, 3, ColorSpace::kSrgb, 11);
  const LinearImage lin = srgb_to_linear(encoded);
  CHECK(lin.color_space() == ColorSpace::kLinear);
  const LinearImage back = linear_to_srgb(lin);
  CHECK(back.color_space() == ColorSpace::kSrgb);
  CHECK(max_abs_diff(encoded, back) < 1e-6);

  // Decoding demands the srgb tag and [0,1] values.
  CHECK_THROWS_AS(srgb_to_linear(lin), DataError);
  LinearImage over(2, 2, 3, ColorSpace::kSrgb, 0.5f);
  over.at(0, 0, 0) = 1.5f;
  CHECK_THROWS_AS(srgb_to_linear(over), DataError);

  // Encoding clamps out-of-range linear values instead of rejecting them.
  LinearImage hot(2, 2, 3, ColorSpace::kLinear, 2.0f);
  const LinearImage hot_enc = linear_to_srgb(hot);
  CHECK(max_value(hot_enc) == 1.0f);
  CHECK(min_value(hot_enc) == 1.0f);
}

TEST_CASE("luminance: primary weights, gray exactness, linearity") {
  LinearImage primaries(3, 1, 3, ColorSpace::kLinear);
  // pixel 0 = red, pixel 1 = green, pixel 2 = blue
  primaries.at(0, 0, 0) = 1.0f;
  primaries.at(1, 0, 1) = 1.0f;
  primaries.at(2, 0, 2) = 1.0f;
  const LinearImage lum = luminance(primaries);
  CHECK(lum.channels() == 1);
  CHECK(lum.at(0, 0, 0) == doctest::Approx(0.2126).epsilon(1e-7));
  CHECK(lum.at(0, 0, 1) == doctest::Approx(0.7152).epsilon(1e-7));
  CHECK(lum.at(0, 0, 2) == doctest::Approx(0.0722).epsilon(1e-7));

  // (1,1,1) -> exactly 1; any gray image reproduces its channel value
  // bit for bit.
  for (float v : {1.0f, 0.1f, 0.7f, 0.123456f, 1.0f / 3.0f}) {
    const LinearImage gray(5, 4, 3, ColorSpace::kLinear, v);
    const LinearImage l = luminance(gray);
    for (float got : l.data()) CHECK(got == v);
  }

  // Linearity: lum(a*x) == a*lum(x).
  const LinearImage x = random_image(16, 16, 3, ColorSpace::kLinear, 12);
  CHECK(max_abs_diff(luminance(scale(x, 2.5f)), scale(luminance(x), 2.5f)) <
        1e-6);
}

TEST_CASE("elementwise ops: arithmetic, tags, and safe division") {
  const LinearImage a = random_image(9, 7, 3, ColorSpace::kLinear, 21, 0.2f, 1.0f);
  const LinearImage b = random_image(9, 7, 3, ColorSpace::kLinear, 22, 0.2f, 1.0f);

  const LinearImage p = mul(a, b);
  CHECK(p.color_space() == ColorSpace::kLinear);
  CHECK(p.at(1, 2, 3) == a.at(1, 2, 3) * b.at(1, 2, 3));

  const LinearImage d = sub(a, b);
  CHECK(d.color_space() == ColorSpace::kData);
  CHECK(max_abs_diff(add(d, b), a) < 1e-7);
  CHECK(add(d, b).color_space() == ColorSpace::kData);

  CHECK(scale(a, -1.0f).color_space() == ColorSpace::kData);
  CHECK(scale(a, 2.0f).color_space() == ColorSpace::kLinear);
  CHECK(clip(scale(a, -1.0f), 0.0f, 1.0f).color_space() == ColorSpace::kLinear);

  // Above eps the divisor is untouched, so mul/div round-trips to within
  // one rounding step each way.
  const LinearImage q = safe_div(p, b, 1e-4f);
  CHECK(max_abs_diff(q, a) < 1e-6);

  // The guard takes over below eps.
  LinearImage tiny(1, 1, 1, ColorSpace::kLinear, 0.0f);
  LinearImage one(1, 1, 1, ColorSpace::kLinear, 1.0f);
  CHECK(safe_div(one, tiny, 1e-4f).at(0, 0, 0) == doctest::Approx(1e4f));

  // 1-channel divisor broadcasts over 3 channels.
  const LinearImage mono = random_image(9, 7, 1, ColorSpace::kLinear, 23, 0.5f, 1.0f);
  const LinearImage r = safe_div(a, mono, 1e-4f);
  for (int c = 0; c < 3; ++c)
    CHECK(r.at(c, 3, 4) == a.at(c, 3, 4) / mono.at(0, 3, 4));

  const LinearImage bc = broadcast(mono, 3);
  CHECK(bc.channels() == 3);
  CHECK(bc.at(0, 1, 1) == mono.at(0, 1, 1));
  CHECK(bc.at(2, 1, 1) == mono.at(0, 1, 1));

  CHECK(mean_value(one) == 1.0);
  CHECK(min_value(d) <= max_value(d));
}

TEST_CASE("image invariants are enforced") {
  CHECK_THROWS_AS(LinearImage(0, 4, 3, ColorSpace::kLinear), DataError);
  CHECK_THROWS_AS(LinearImage(4, 4, 4, ColorSpace::kLinear), DataError);
  CHECK_THROWS_AS(
      LinearImage::from_data(2, 2, 1, ColorSpace::kLinear, {1.0f, 2.0f}),
      DataError);
  CHECK_THROWS_AS(LinearImage::from_data(2, 1, 1, ColorSpace::kLinear,
                                         {1.0f, -0.5f}),
                  DataError);
  CHECK_THROWS_AS(
      LinearImage::from_data(2, 1, 1, ColorSpace::kLinear,
                             {1.0f, std::numeric_limits<float>::quiet_NaN()}),
      DataError);
  // Signed values are fine under the data tag, but cannot be retagged linear.
  const LinearImage signed_img =
      LinearImage::from_data(2, 1, 1, ColorSpace::kData, {1.0f, -0.5f});
  CHECK_THROWS_AS(signed_img.retagged(ColorSpace::kLinear), DataError);
}

TEST_CASE("resize_bilinear: constants, edge clamp, and box equivalence") {
  // Constants survive any resize exactly.
  const LinearImage flat(7, 5, 2, ColorSpace::kData, 0.37f);
  const LinearImage up = resize_bilinear(flat, 13, 9);
  CHECK(up.color_space() == ColorSpace::kData);
  for (float v : up.data()) CHECK(v == 0.37f);

  // 2 -> 4 with half-pixel centers: edge samples clamp, interior blends 3:1.
  LinearImage row = LinearImage::from_data(2, 1, 1, ColorSpace::kLinear,
                                           {0.2f, 0.6f});
  const LinearImage wide = resize_bilinear(row, 4, 1);
  CHECK(wide.at(0, 0, 0) == doctest::Approx(0.2f));
  CHECK(wide.at(0, 0, 1) == doctest::Approx(0.75 * 0.2f + 0.25 * 0.6f));
  CHECK(wide.at(0, 0, 2) == doctest::Approx(0.25 * 0.2f + 0.75 * 0.6f));
  CHECK(wide.at(0, 0, 3) == doctest::Approx(0.6f));

  // Exact 2x downscale coincides with the 2x2 box filter.
  const LinearImage img = random_image(16, 12, 3, ColorSpace::kLinear, 31);
  CHECK(max_abs_diff(resize_bilinear(img, 8, 6), downsample2(img)) < 1e-6);

  LinearImage box = LinearImage::from_data(2, 2, 1, ColorSpace::kLinear,
                                           {1.0f, 2.0f, 3.0f, 4.0f});
  CHECK(downsample2(box).at(0, 0, 0) == 2.5f);
  CHECK_THROWS_AS(downsample2(LinearImage(3, 4, 1, ColorSpace::kLinear)),
                  DataError);
}

TEST_CASE("iidf: write/read is the identity bit for bit") {
  const fs::path path = temp_dir() / "roundtrip.iidf";
  LinearImage img = random_image(13, 9, 3, ColorSpace::kData, 41, -2.0f, 3.0f);
  // Exercise exact-representation corners, including a subnormal.
  img.at(0, 0, 0) = 0.0f;
  img.at(1, 0, 0) = 1e-42f;
  img.at(2, 0, 0) = 3.0e38f;
  write_iidf(img, path);

  const LinearImage back = read_iidf(path);
  CHECK(back.width() == img.width());
  CHECK(back.height() == img.height());
  CHECK(back.channels() == img.channels());
  CHECK(back.color_space() == img.color_space());
  REQUIRE(back.size() == img.size());
  CHECK(std::memcmp(back.data().data(), img.data().data(),
                    img.size() * sizeof(float)) == 0);

  // 2-channel maps and the other tags round-trip too.
  for (int c : {1, 2}) {
    const fs::path p2 = temp_dir() / ("roundtrip_" + std::to_string(c) + ".iidf");
    const LinearImage m = random_image(6, 5, c, ColorSpace::kLinear, 42 + c);
    write_iidf(m, p2);
    const LinearImage mb = read_iidf(p2);
    CHECK(mb.channels() == c);
    CHECK(mb.color_space() == ColorSpace::kLinear);
    CHECK(std::memcmp(mb.data().data(), m.data().data(),
                      m.size() * sizeof(float)) == 0);
  }
}

TEST_CASE("iidf: malformed files are rejected") {
  const fs::path good_path = temp_dir() / "good.iidf";
  write_iidf(random_image(4, 3, 2, ColorSpace::kLinear, 51), good_path);
  const std::vector<unsigned char> good = slurp(good_path);
  REQUIRE(good.size() == 20 + 4 * 3 * 2 * 4);

  const fs::path bad_path = temp_dir() / "bad.iidf";
  auto expect_reject = [&](std::vector<unsigned char> bytes) {
    spit(bad_path, bytes);
    CHECK_THROWS_AS(read_iidf(bad_path), DataError);
  };

  auto patched = [&](size_t off, std::initializer_list<unsigned char> b) {
    std::vector<unsigned char> v = good;
    size_t i = off;
    for (unsigned char ch : b) v[i++] = ch;
    return v;
  };

  expect_reject(patched(0, {'X'}));                       // bad magic
  expect_reject({good.begin(), good.begin() + 10});       // truncated header
  expect_reject({good.begin(), good.end() - 4});          // short payload
  expect_reject(patched(12, {4, 0, 0, 0}));               // 4 channels
  expect_reject(patched(12, {0, 0, 0, 0}));               // 0 channels
  expect_reject(patched(16, {7, 0, 0, 0}));               // unknown colorspace
  expect_reject(patched(4, {0, 0, 0, 0}));                // zero width
  expect_reject(patched(20, {0x00, 0x00, 0xc0, 0x7f}));   // NaN payload
  std::vector<unsigned char> longer = good;
  longer.insert(longer.end(), {0, 0, 0, 0});              // trailing bytes
  expect_reject(longer);
  CHECK_THROWS_AS(read_iidf(temp_dir() / "does_not_exist.iidf"), DataError);
}

TEST_CASE("png: 8-bit round trip for gray and rgb") {
  for (int channels : {1, 3}) {
    const fs::path path =
        temp_dir() / ("rt_" + std::to_string(channels) + ".png");
    LinearImage img(16, 11, channels, ColorSpace::kSrgb);
    Rng rng(61);
    for (float& v : img.data())
      v = static_cast<float>(rng.uniform_int(0, 255)) / 255.0f;
    write_png(img, path);
    const LinearImage back = read_png(path);
    CHECK(back.channels() == channels);
    CHECK(back.color_space() == ColorSpace::kSrgb);
    CHECK(max_abs_diff(back, img) == 0.0);
  }
  // Writer accepts only sRGB-tagged 1- or 3-channel images.
  CHECK_THROWS_AS(
      write_png(LinearImage(4, 4, 3, ColorSpace::kLinear), temp_dir() / "x.png"),
      DataError);
  CHECK_THROWS_AS(
      write_png(LinearImage(4, 4, 2, ColorSpace::kSrgb), temp_dir() / "x.png"),
      DataError);
}

TEST_CASE("png: alpha channel is ignored on read") {
  const fs::path path = temp_dir() / "rgba.png";
  const unsigned char rgba[2 * 2 * 4] = {
      10, 20, 30, 255, 40, 50, 60, 128,  //
      70, 80, 90, 0,   100, 110, 120, 7,
  };
  {
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    REQUIRE(f);
    png_structp png =
        png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    REQUIRE(setjmp(png_jmpbuf(png)) == 0);
    png_init_io(png, f);
    png_set_IHDR(png, info, 2, 2, 8, PNG_COLOR_TYPE_RGB_ALPHA,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_bytep rows[2] = {const_cast<png_bytep>(rgba),
                         const_cast<png_bytep>(rgba + 8)};
    png_write_image(png, rows);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(f);
  }

  const LinearImage img = read_png(path);
  CHECK(img.width() == 2);
  CHECK(img.height() == 2);
  CHECK(img.channels() == 3);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x)
      for (int c = 0; c < 3; ++c)
        CHECK(img.at(c, y, x) ==
              static_cast<float>(rgba[(y * 2 + x) * 4 + c]) / 255.0f);
}

TEST_CASE("read_image/write_image dispatch on extension") {
  const fs::path dir = temp_dir();
  const LinearImage img = random_image(5, 4, 3, ColorSpace::kLinear, 71);
  write_image(img, dir / "disp.iidf");
  CHECK(max_abs_diff(read_image(dir / "disp.iidf"), img) == 0.0);
  CHECK_THROWS_AS(write_image(img, dir / "disp.exr"), DataError);
  CHECK_THROWS_AS(read_image(dir / "disp.exr"), DataError);
}
