#include <doctest.h>

#include <cmath>
#include <opencv2/photo.hpp>

#include "auv/baker.hpp"
#include "auv/rng.hpp"

using namespace auv;

namespace {

struct Hole {
  Image img;
  std::vector<std::uint8_t> valid;
};

Hole smooth_field_with_holes(int S, std::uint64_t seed) {
  Rng rng(seed);
  Hole h{Image(S, S, 3), std::vector<std::uint8_t>(static_cast<std::size_t>(S) * S, 1)};
  double a[3], b[3], f[3];
  for (int c = 0; c < 3; ++c) {
    a[c] = rng.uniform(0.2, 0.5);
    b[c] = rng.uniform(0.05, 0.2);
    f[c] = rng.uniform(1.0, 3.0);
  }
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x)
      for (int c = 0; c < 3; ++c)
        h.img.at(x, y, c) = static_cast<float>(a[c] + b[c] * std::sin(f[c] * x / S * 3.0 + c) * std::cos(f[c] * y / S * 2.0));
  for (int d = 0; d < 4; ++d) {
    const double cx = rng.uniform(10, S - 10), cy = rng.uniform(10, S - 10), r = rng.uniform(2, 6);
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x)
        if (std::hypot(x - cx, y - cy) <= r) h.valid[static_cast<std::size_t>(y) * S + x] = 0;
  }
  return h;
}

// Per channel through OpenCV's Telea inpainting on 32-bit float rasters in the 0..255 range.
Image opencv_telea(const Image& img, const std::vector<std::uint8_t>& valid, double radius) {
  const int W = img.width, H = img.height;
  cv::Mat mask(H, W, CV_8U);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) mask.at<unsigned char>(y, x) = valid[static_cast<std::size_t>(y) * W + x] ? 0 : 255;
  Image out(W, H, img.channels);
  for (int c = 0; c < img.channels; ++c) {
    cv::Mat src(H, W, CV_32F), dst;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) src.at<float>(y, x) = 255.0f * img.at(x, y, c);
    cv::inpaint(src, mask, dst, radius, cv::INPAINT_TELEA);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) out.at(x, y, c) = dst.at<float>(y, x) / 255.0f;
  }
  return out;
}

}  // namespace

TEST_CASE("fast-marching fill agrees with OpenCV's Telea inpainting on smooth fields") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Hole h = smooth_field_with_holes(64, seed);
    const Image ours = inpaint_fmm(h.img, h.valid, 5.0);
    const Image ref = opencv_telea(h.img, h.valid, 5.0);
    double diff = 0, dev_ours = 0, dev_ref = 0;
    int n = 0;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        if (h.valid[static_cast<std::size_t>(y) * 64 + x]) continue;
        for (int c = 0; c < 3; ++c) {
          diff += std::abs(ours.at(x, y, c) - ref.at(x, y, c));
          dev_ours += std::abs(ours.at(x, y, c) - h.img.at(x, y, c));
          dev_ref += std::abs(ref.at(x, y, c) - h.img.at(x, y, c));
        }
        n += 3;
      }
    REQUIRE(n > 0);
    MESSAGE("seed " << seed << ": mean |ours-opencv| " << diff / n << ", error ours " << dev_ours / n << ", opencv "
                    << dev_ref / n);
    CHECK(diff / n < 0.02);
    CHECK(dev_ours / n <= 1.5 * dev_ref / n + 1e-3);
  }
}
