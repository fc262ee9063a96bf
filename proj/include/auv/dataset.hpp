#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "auv/geometry.hpp"
#include "auv/synthdata.hpp"
#include "auv/tensor.hpp"

namespace auv {

// One preprocessed 3D shape: surface samples plus the colored voxel grid fed
// to the encoder.
struct ShapeData {
  std::string name;
  Tensor<float> points;   // [N,3]
  Tensor<float> normals;  // [N,3]
  Tensor<float> colors;   // [N,3]
  Tensor<float> grid;     // [4,R,R,R]
  bool colorless = false;
  // Optional ground truth: a label per point and landmark positions, both in
  // the normalized frame of `points`.
  std::vector<int> labels;
  std::vector<Vec3> landmarks;

  int size() const { return points.rank() == 2 ? points.dim(0) : 0; }
  // [N,9]: color, normal, coordinate.
  Tensor<float> target() const;
  void validate() const;
};

// Per-mesh ground truth carried through preprocessing.
struct MeshAnnotations {
  std::vector<int> vertex_labels;  // empty: no labels
  std::vector<Vec3> landmarks;     // in the mesh's own frame
};

// Normalizes to the unit box, samples n points (seeded) and voxelizes. A
// point's label is that of the closest corner of its source triangle.
ShapeData preprocess_mesh(const TexturedMesh& mesh, const std::string& name, int n_points, int grid_resolution,
                          std::uint64_t seed, const MeshAnnotations& annotations = {});

ShapeData shape_from_cloud(const ColoredPointCloud& cloud, const std::string& name, int grid_resolution);

// Runs preprocess_mesh for every mesh, spreading work over up to
// worker_threads threads (0: AUV_THREADS or the hardware count). Shape i uses
// seed base_seed + i, so results do not depend on the thread count.
std::vector<ShapeData> preprocess_meshes(const std::vector<TexturedMesh>& meshes, const std::vector<std::string>& names,
                                         int n_points, int grid_resolution, std::uint64_t base_seed,
                                         int worker_threads = 0, const std::vector<MeshAnnotations>& annotations = {});

struct MeshFolder {
  std::vector<TexturedMesh> meshes;
  std::vector<std::string> names;
  std::vector<MeshAnnotations> annotations;
};
// Every *.obj in `dir`, sorted by name. A head sidecar <name>.json, when
// present, supplies labels and landmarks.
MeshFolder load_mesh_folder(const std::filesystem::path& dir);

// Thread cap from AUV_THREADS (falls back to the hardware count, at least 1).
int worker_thread_count();

void save_shapes(const std::filesystem::path& path, const std::vector<ShapeData>& shapes);
std::vector<ShapeData> load_shapes(const std::filesystem::path& path);

// [3,S,S] planar copy of a toy raster (encoder input).
Tensor<float> toy_encoder_input(const ToyImage& img);
// Pixel centres in unit coordinates, row-major: [S*S, 2].
Tensor<float> toy_pixel_grid(int size);
// Colors in the same order: [S*S, 3].
Tensor<float> toy_pixel_colors(const ToyImage& img);

}  // namespace auv
