#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "auv/image.hpp"
#include "auv/tensor.hpp"

namespace auv {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Tri = std::array<int, 3>;

struct TexturedMesh {
  std::vector<Vec3> vertices;
  std::vector<Tri> triangles;
  // Per-corner texture coordinates: uv_triangles[f][c] indexes uvs. Empty
  // when the file carries no texture coordinates.
  std::vector<Vec2> uvs;
  std::vector<Tri> uv_triangles;
  std::vector<int> material_ids;  // per face, -1 when unassigned
  std::vector<std::string> material_names;
  // Diffuse map per material (empty Image when the material has none).
  std::vector<Image> material_textures;
  // Texture used for faces without a material-specific map.
  std::optional<Image> texture;

  bool textured() const { return texture.has_value() && !uv_triangles.empty(); }
  const Image* texture_for_face(int face) const;
  // Throws DataError on out-of-range indices or non-finite values.
  void validate() const;
};

// OBJ (+ MTL + PNG) reader. Triangles only; v/vt/vn index forms and negative
// (relative) indices are accepted. A missing mtllib, material file, map_Kd or
// image leaves the mesh untextured rather than failing.
TexturedMesh load_textured_mesh(const std::filesystem::path& path);

struct UnitBoxTransform {
  Vec3 center = Vec3::Zero();
  double scale = 1.0;
  Vec3 apply(const Vec3& p) const { return (p - center) * scale; }
};

// Centre of the bounding box and 1 / longest extent.
UnitBoxTransform unit_box_transform(const std::vector<Vec3>& points);
TexturedMesh normalize_to_unit_box(const TexturedMesh& mesh);

struct ColoredPointCloud {
  std::vector<Vec3> positions;
  std::vector<Vec3> normals;
  std::vector<Vec3> colors;
  std::vector<int> faces;       // source triangle per sample
  std::vector<Vec3> barycentric;
  bool colorless = false;

  std::size_t size() const { return positions.size(); }
};

inline constexpr double kColorlessSentinel = 0.5;

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);
Vec3 face_normal(const TexturedMesh& mesh, int face);

// Area-proportional sampling with face normals and bilinear texture colour.
// Draws come from Rng(seed, 0x5A3D), so a shape's dataset index is a fine seed.
ColoredPointCloud sample_surface(const TexturedMesh& mesh, int n, std::uint64_t seed);

// Area-weighted vertex normals (unit length; zero-area neighbourhoods give +z).
std::vector<Vec3> vertex_normals(const TexturedMesh& mesh);

struct ColoredVoxelGrid {
  int resolution = 0;
  // [4, R, R, R] indexed [channel][ix][iy][iz]; channels r, g, b, occupancy.
  Tensor<float> data;

  int index_of(double coord) const;
  float occupancy(int ix, int iy, int iz) const;
  float color(int c, int ix, int iy, int iz) const;
  std::size_t occupied_count() const;
};

// Voxel index along each axis is floor((p + 0.5) * R) clamped to [0, R-1];
// occupied voxels hold the mean colour of their points.
ColoredVoxelGrid voxelize_colored(const ColoredPointCloud& cloud, int resolution);

// Writes an OBJ plus a sibling MTL with one material per texture image.
struct ObjWriteSpec {
  std::vector<Vec3> vertices;
  std::vector<Vec2> uvs;
  std::vector<Tri> triangles;
  std::vector<Tri> uv_triangles;  // empty: uv index equals vertex index
  std::vector<int> face_material;
  std::vector<std::string> material_names;
  std::vector<std::string> texture_files;  // relative to the OBJ directory
};
void write_obj(const std::filesystem::path& obj_path, const ObjWriteSpec& spec);

}  // namespace auv
