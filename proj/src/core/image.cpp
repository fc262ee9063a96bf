#include "auv/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "auv/checkpoint.hpp"
#include "auv/errors.hpp"

namespace auv {

float srgb_to_linear(float s) {
  s = std::clamp(s, 0.0f, 1.0f);
  return s <= 0.04045f ? s / 12.92f : std::pow((s + 0.055f) / 1.055f, 2.4f);
}

float linear_to_srgb(float l) {
  l = std::clamp(l, 0.0f, 1.0f);
  return l <= 0.0031308f ? l * 12.92f : 1.055f * std::pow(l, 1.0f / 2.4f) - 0.055f;
}

namespace {
unsigned char to_byte(float linear) {
  return static_cast<unsigned char>(std::lround(linear_to_srgb(linear) * 255.0f));
}
}  // namespace

float quantize_srgb8(float linear) { return srgb_to_linear(static_cast<float>(to_byte(linear)) / 255.0f); }

void sample_bilinear(const Image& img, double x, double y, float* out) {
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - x0, fy = y - y0;
  for (int c = 0; c < img.channels; ++c) {
    const double top = img.at(x0, y0, c) * (1.0 - fx) + img.at(x1, y0, c) * fx;
    const double bot = img.at(x0, y1, c) * (1.0 - fx) + img.at(x1, y1, c) * fx;
    out[c] = static_cast<float>(top * (1.0 - fy) + bot * fy);
  }
}

void sample_uv(const Image& img, double u, double v, float* out) {
  sample_bilinear(img, u * img.width - 0.5, (1.0 - v) * img.height - 0.5, out);
}

Image read_png(const std::filesystem::path& path) {
  FILE* fp = std::fopen(path.string().c_str(), "rb");
  if (!fp) throw IoError("cannot open PNG '" + path.string() + "'");
  std::unique_ptr<FILE, int (*)(FILE*)> guard(fp, &std::fclose);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed");
  }
  std::vector<unsigned char> pixels;
  int width = 0, height = 0, channels = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("malformed PNG '" + path.string() + "'");
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_gray_to_rgb(png);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  pixels.resize(stride * static_cast<std::size_t>(height));
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) rows[static_cast<std::size_t>(y)] = pixels.data() + stride * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(width, height, channels);
  float lut[256];
  for (int i = 0; i < 256; ++i) lut[i] = srgb_to_linear(static_cast<float>(i) / 255.0f);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c) {
        const unsigned char b = pixels[stride * y + static_cast<std::size_t>(x) * channels + c];
        // Alpha stays linear in [0,1].
        img.at(x, y, c) = (channels == 4 && c == 3) ? b / 255.0f : lut[b];
      }
  return img;
}

namespace {
std::vector<char> encode_png(int width, int height, int channels, const std::vector<unsigned char>& bytes) {
  if (channels < 1 || channels > 4) throw Error(ErrorKind::InvalidArgument, "PNG supports 1..4 channels");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  std::vector<char> out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encoding failed");
  }
  png_set_write_fn(
      png, &out,
      [](png_structp p, png_bytep data, png_size_t len) {
        auto* o = static_cast<std::vector<char>*>(png_get_io_ptr(p));
        o->insert(o->end(), reinterpret_cast<char*>(data), reinterpret_cast<char*>(data) + len);
      },
      nullptr);
  static const int kColorTypes[] = {PNG_COLOR_TYPE_GRAY, PNG_COLOR_TYPE_GRAY_ALPHA, PNG_COLOR_TYPE_RGB,
                                    PNG_COLOR_TYPE_RGB_ALPHA};
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               kColorTypes[channels - 1], PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(bytes.data() + static_cast<std::size_t>(y) * width * channels));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}
}  // namespace

void write_png(const std::filesystem::path& path, const Image& img) {
  std::vector<unsigned char> bytes(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const bool alpha = img.channels == 4 && (i % 4) == 3;
    bytes[i] = alpha ? static_cast<unsigned char>(std::lround(std::clamp(img.data[i], 0.0f, 1.0f) * 255.0f))
                     : to_byte(img.data[i]);
  }
  write_file_atomic(path, encode_png(img.width, img.height, img.channels, bytes));
}

void write_png_raw(const std::filesystem::path& path, int width, int height, int channels,
                   const std::vector<unsigned char>& bytes) {
  if (bytes.size() != static_cast<std::size_t>(width) * height * channels) {
    throw Error(ErrorKind::InvalidArgument, "write_png_raw: buffer size mismatch");
  }
  write_file_atomic(path, encode_png(width, height, channels, bytes));
}

}  // namespace auv
