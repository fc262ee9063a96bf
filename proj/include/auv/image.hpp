#pragma once

#include <filesystem>
#include <vector>

namespace auv {

// Float raster, row-major, interleaved channels. Color values are linear RGB.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, int c, float fill = 0.0f)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  float& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  float at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  bool empty() const { return data.empty(); }
  bool operator==(const Image&) const = default;
};

float srgb_to_linear(float s);
float linear_to_srgb(float l);
// The value a linear channel takes after an 8-bit sRGB write and read back.
float quantize_srgb8(float linear);

// Bilinear lookup with pixel centres at integer coordinates; coordinates are
// clamped to the image. Writes `channels` values to out.
void sample_bilinear(const Image& img, double x, double y, float* out);
// Lookup by texture coordinates in OBJ convention: (0,0) bottom-left,
// (1,1) top-right, wrap-free clamp.
void sample_uv(const Image& img, double u, double v, float* out);

// 8-bit sRGB PNG I/O. Reading converts to linear; gray / palette / 16-bit
// inputs are expanded to RGB(A). Writing converts linear to sRGB, 1..4 channels.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);
// Writes raw 8-bit values without color conversion (label maps, masks).
void write_png_raw(const std::filesystem::path& path, int width, int height, int channels,
                   const std::vector<unsigned char>& bytes);

}  // namespace auv
