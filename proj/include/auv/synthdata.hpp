#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "auv/geometry.hpp"
#include "auv/image.hpp"

namespace auv {

using Mat3 = Eigen::Matrix3d;

// Procedural face raster plus its warp and landmark ground truth. Pixel
// coordinates have pixel centres at integers, x right, y down.
struct ToyImage {
  Image image;  // RGB in [0,1]
  Mat3 homography = Mat3::Identity();  // canonical pixel -> this image's pixel
  // Left eye, right eye, mouth centre.
  std::array<Vec2, 3> canonical_landmarks{};
  std::array<Vec2, 3> landmarks{};
  Vec3 background = Vec3::Zero();
  Vec3 eye_color = Vec3::Zero();
  Vec3 mouth_color = Vec3::Zero();
  std::uint64_t seed = 0;
};

enum ToyLandmark { kLeftEye = 0, kRightEye = 1, kMouth = 2 };

// Deterministic per seed: hair, skin, two eye blobs and a mouth with seeded
// colours. With layout_jitter = 0 every face shares one canonical layout;
// values up to 1 perturb feature positions and sizes per seed. `size` in
// [16, 512].
ToyImage make_face_image(std::uint64_t seed, int size = 64, double layout_jitter = 0.0);

// Perspective map taking the four image corners to corners displaced by up to
// max_corner_shift * (size - 1) pixels in each coordinate. max_corner_shift
// must lie in [0, 0.25].
Mat3 random_homography(std::uint64_t seed, double max_corner_shift, int size);
// Homography taking src[i] to dst[i] for four point pairs.
Mat3 homography_from_corners(const std::array<Vec2, 4>& src, const std::array<Vec2, 4>& dst);
Vec2 apply_homography(const Mat3& h, const Vec2& p);

// Inverse-mapped bilinear warp; samples falling outside the source frame take
// the background colour. Composes the homography and maps the landmarks.
ToyImage warp_image(const ToyImage& img, const Mat3& h);

// Pixel coordinate -> normalized coordinate in [-0.5, 0.5] and back.
inline double pixel_to_unit(double px, int size) { return (px + 0.5) / size - 0.5; }
inline double unit_to_pixel(double u, int size) { return (u + 0.5) * size - 0.5; }

enum HeadLabel { kFace = 0, kScalp = 1, kNeck = 2 };
inline constexpr int kHeadLabelCount = 3;

struct SyntheticHead {
  TexturedMesh mesh;
  std::array<Vec3, 3> landmarks{};  // left eye, right eye, mouth (on the mesh surface)
  std::vector<int> vertex_labels;   // HeadLabel per vertex
  Vec3 nose_direction = Vec3(0, 0, 1);
  Vec3 skin_color = Vec3::Zero();
  Vec3 hair_color = Vec3::Zero();
  Vec3 eye_color = Vec3::Zero();
  int hair_palette_index = 0;
  std::uint64_t seed = 0;
};

struct HeadOptions {
  int longitude_segments = 96;
  int latitude_segments = 48;
  int texture_width = 512;
  int texture_height = 256;
};

// Deformed ellipsoid facing +z with +y up, lat-long texture with hair, skin,
// eyes and mouth painted in parameter space.
SyntheticHead make_head_mesh(std::uint64_t seed, const HeadOptions& options = {});

inline constexpr int kHairPaletteSize = 32;
Vec3 hair_palette(int index);

// Disk layout written by gen-data: <name>.png plus a <name>.json sidecar with
// seed, homography and landmarks (toy); <name>.obj/.mtl/.png plus a sidecar
// with landmarks, vertex labels and colours (heads).
void save_toy_image(const std::filesystem::path& dir, const std::string& name, const ToyImage& img);
ToyImage load_toy_image(const std::filesystem::path& dir, const std::string& name);
// Every sidecar in `dir`, sorted by name.
std::vector<ToyImage> load_toy_images(const std::filesystem::path& dir);

void save_head(const std::filesystem::path& dir, const std::string& name, const SyntheticHead& head);
// Sidecar fields only; the mesh itself is read with load_textured_mesh.
struct HeadSidecar {
  std::array<Vec3, 3> landmarks{};
  std::vector<int> vertex_labels;
  Vec3 eye_color = Vec3::Zero();
  Vec3 skin_color = Vec3::Zero();
  Vec3 hair_color = Vec3::Zero();
};
HeadSidecar load_head_sidecar(const std::filesystem::path& json_path);

}  // namespace auv
