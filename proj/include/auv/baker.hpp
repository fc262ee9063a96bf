#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "auv/dataset.hpp"
#include "auv/geometry.hpp"
#include "auv/image.hpp"
#include "auv/networks.hpp"

namespace auv {

// UV values in [-kUvWindow, kUvWindow] map onto the texture raster.
inline constexpr double kUvWindow = 0.55;

// Texel index of a UV coordinate: floor((clamp(q) + window) / (2 window) * R),
// capped at R - 1.
int uv_to_texel(double q, int resolution);
// Centre of texel i in UV units.
double texel_to_uv(int i, int resolution);
// UV -> OBJ texture coordinate in [0,1] (v up, raster row 0 at the top).
Vec2 uv_to_atlas(double qx, double qy);

struct TextureImage {
  Image color;               // R x R x 3; texel (x, y) covers uv_x -> x, uv_y -> y
  std::vector<int> count;    // samples per texel

  int resolution() const { return color.width; }
  bool valid(int x, int y) const { return count[static_cast<std::size_t>(y) * color.width + x] > 0; }
  std::vector<std::uint8_t> validity() const;
  std::size_t valid_count() const;
};

// UV and mask of each point under one shape code, evaluated without keeping a
// tape around.
struct PointMapping {
  Tensor<float> uv;     // [N,2]
  Tensor<float> masks;  // [N,K]
  int route(int i) const;  // argmax mask, ties to the lower index
};

PointMapping map_points(AuvModel<float>& model, const Tensor<float>& encoder_input, const Tensor<float>& points,
                        const Tensor<float>& normals, int chunk = 8192);

// Routes each sample to its argmax generator and averages colors per texel.
// A generator that receives no samples yields an all-invalid texture.
std::vector<TextureImage> bake_samples(const PointMapping& mapping, const Tensor<float>& colors, int resolution);
std::vector<TextureImage> bake_texture(AuvModel<float>& model, const ShapeData& shape, int resolution = 256);

// Fast-marching inpainting: holes are filled from the boundary inward, each
// texel from known texels within `radius` weighted by direction, distance and
// level-set terms. Valid texels are copied bit for bit. Throws DataError if
// nothing is valid.
Image inpaint_fmm(const Image& img, const std::vector<std::uint8_t>& valid, double radius = 5.0, double eps = 1e-6);
Image inpaint_texture(const TextureImage& tex, double radius = 5.0);

// Mean absolute difference of two inpainted textures over texels that were
// valid in one of them and lie within `band` texels of a valid texel of the
// other. Returns NaN when the band is empty.
double boundary_disagreement(const TextureImage& a, const Image& a_filled, const TextureImage& b, const Image& b_filled,
                             int band = 2);

struct TexturedExport {
  std::vector<Vec3> vertices;
  std::vector<Tri> triangles;
  std::vector<Vec2> uvs;             // per vertex, atlas coordinates in [0,1]
  std::vector<int> face_texture;     // per face, in [0, K)
  std::vector<Image> textures;       // K rasters
  int resolution = 0;
  int seam_faces = 0;                // faces whose vertices disagree on the mask

  int texture_count() const { return static_cast<int>(textures.size()); }
  void validate() const;
  // FNV-1a over vertices, triangles, UVs and face indices.
  std::uint64_t geometry_hash() const;
};

// Per-face texture by majority vote of the vertices' routes, ties to the
// lower index.
std::vector<int> vote_face_textures(const std::vector<Tri>& triangles, const std::vector<int>& vertex_route, int K,
                                    int* seam_faces = nullptr);

// Evaluates UV and masks on the mesh vertices (in the normalized frame the
// shape was preprocessed in) and attaches the given textures.
TexturedExport make_export(AuvModel<float>& model, const TexturedMesh& mesh, const ShapeData& shape,
                           std::vector<Image> textures);

// Writes <name>.obj, <name>.mtl, <name>_tex<k>.png and <name>.json.
void write_export(const std::filesystem::path& dir, const std::string& name, const TexturedExport& ex);

// Reads back what write_export wrote (texture rasters come back after the
// 8-bit sRGB round trip).
TexturedExport load_export(const std::filesystem::path& dir, const std::string& name);

// A's geometry, UVs and face routing with B's rasters. Throws ConfigError on a
// texture-count mismatch.
TexturedExport transfer_texture(const TexturedExport& a, const std::vector<Image>& b_textures);

}  // namespace auv
