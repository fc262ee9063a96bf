#include "auv/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include "auv/checkpoint.hpp"
#include "auv/errors.hpp"

namespace auv {

Tensor<float> ShapeData::target() const {
  const int N = size();
  Tensor<float> t({N, 9});
  for (int i = 0; i < N; ++i)
    for (int c = 0; c < 3; ++c) {
      t.at(i, c) = colors.at(i, c);
      t.at(i, 3 + c) = normals.at(i, c);
      t.at(i, 6 + c) = points.at(i, c);
    }
  return t;
}

void ShapeData::validate() const {
  const int N = size();
  if (N < 1 || points.shape() != Shape{N, 3} || normals.shape() != points.shape() || colors.shape() != points.shape()) {
    throw DataError("shape '" + name + "': inconsistent point arrays " + shape_str(points.shape()) + ", " +
                    shape_str(normals.shape()) + ", " + shape_str(colors.shape()));
  }
  if (grid.rank() != 4 || grid.dim(0) != 4 || grid.dim(1) != grid.dim(2) || grid.dim(2) != grid.dim(3)) {
    throw DataError("shape '" + name + "': voxel grid must be [4,R,R,R], got " + shape_str(grid.shape()));
  }
  for (const Tensor<float>* t : {&points, &normals, &colors, &grid})
    for (float v : t->values())
      if (!std::isfinite(v)) throw DataError("shape '" + name + "': non-finite value");
  if (!labels.empty() && static_cast<int>(labels.size()) != N) {
    throw DataError("shape '" + name + "': one label per point required");
  }
}

ShapeData shape_from_cloud(const ColoredPointCloud& cloud, const std::string& name, int grid_resolution) {
  const int N = static_cast<int>(cloud.size());
  ShapeData s;
  s.name = name;
  s.colorless = cloud.colorless;
  s.points = Tensor<float>({N, 3});
  s.normals = Tensor<float>({N, 3});
  s.colors = Tensor<float>({N, 3});
  for (int i = 0; i < N; ++i)
    for (int c = 0; c < 3; ++c) {
      const auto k = static_cast<std::size_t>(i);
      s.points.at(i, c) = static_cast<float>(cloud.positions[k][c]);
      s.normals.at(i, c) = static_cast<float>(cloud.normals[k][c]);
      s.colors.at(i, c) = static_cast<float>(cloud.colors[k][c]);
    }
  s.grid = voxelize_colored(cloud, grid_resolution).data;
  return s;
}

ShapeData preprocess_mesh(const TexturedMesh& mesh, const std::string& name, int n_points, int grid_resolution,
                          std::uint64_t seed, const MeshAnnotations& annotations) {
  const UnitBoxTransform box = unit_box_transform(mesh.vertices);
  const TexturedMesh norm = normalize_to_unit_box(mesh);
  const ColoredPointCloud cloud = sample_surface(norm, n_points, seed);
  ShapeData s = shape_from_cloud(cloud, name, grid_resolution);
  if (!annotations.vertex_labels.empty()) {
    if (annotations.vertex_labels.size() != mesh.vertices.size()) {
      throw DataError("shape '" + name + "': one label per vertex required");
    }
    s.labels.resize(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const Tri& t = norm.triangles[static_cast<std::size_t>(cloud.faces[i])];
      int corner = 0;
      cloud.barycentric[i].maxCoeff(&corner);
      s.labels[i] = annotations.vertex_labels[static_cast<std::size_t>(t[static_cast<std::size_t>(corner)])];
    }
  }
  for (const Vec3& l : annotations.landmarks) s.landmarks.push_back(box.apply(l));
  return s;
}

int worker_thread_count() {
  if (const char* env = std::getenv("AUV_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<ShapeData> preprocess_meshes(const std::vector<TexturedMesh>& meshes, const std::vector<std::string>& names,
                                         int n_points, int grid_resolution, std::uint64_t base_seed,
                                         int worker_threads, const std::vector<MeshAnnotations>& annotations) {
  if (names.size() != meshes.size()) throw Error(ErrorKind::InvalidArgument, "preprocess_meshes: one name per mesh");
  if (!annotations.empty() && annotations.size() != meshes.size()) {
    throw Error(ErrorKind::InvalidArgument, "preprocess_meshes: one annotation set per mesh");
  }
  const MeshAnnotations none;
  std::vector<ShapeData> out(meshes.size());
  const int threads = std::min<int>(worker_threads > 0 ? worker_threads : worker_thread_count(),
                                    std::max<int>(1, static_cast<int>(meshes.size())));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < meshes.size(); i = next++) {
      try {
        out[i] = preprocess_mesh(meshes[i], names[i], n_points, grid_resolution, base_seed + i,
                                 annotations.empty() ? none : annotations[i]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

MeshFolder load_mesh_folder(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("'" + dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> objs;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".obj") objs.push_back(e.path());
  std::sort(objs.begin(), objs.end());
  if (objs.empty()) throw DataError("no .obj files in '" + dir.string() + "'");
  MeshFolder f;
  for (const auto& p : objs) {
    f.meshes.push_back(load_textured_mesh(p));
    f.names.push_back(p.stem().string());
    MeshAnnotations a;
    const auto side = std::filesystem::path(p).replace_extension(".json");
    if (std::filesystem::exists(side)) {
      HeadSidecar h = load_head_sidecar(side);
      a.vertex_labels = std::move(h.vertex_labels);
      a.landmarks.assign(h.landmarks.begin(), h.landmarks.end());
    }
    f.annotations.push_back(std::move(a));
  }
  return f;
}

void save_shapes(const std::filesystem::path& path, const std::vector<ShapeData>& shapes) {
  Checkpoint ck;
  ck.put_text("dataset.count", std::to_string(shapes.size()));
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const ShapeData& s = shapes[i];
    s.validate();
    const std::string p = "shape" + std::to_string(i) + ".";
    ck.put_text(p + "name", s.name);
    ck.put_text(p + "colorless", s.colorless ? "1" : "0");
    ck.put(p + "points", s.points);
    ck.put(p + "normals", s.normals);
    ck.put(p + "colors", s.colors);
    ck.put(p + "grid", s.grid);
    if (!s.labels.empty()) {
      Tensor<float> l({s.size()});
      for (int i = 0; i < s.size(); ++i) l[static_cast<std::size_t>(i)] = static_cast<float>(s.labels[static_cast<std::size_t>(i)]);
      ck.put(p + "labels", l);
    }
    if (!s.landmarks.empty()) {
      const int L = static_cast<int>(s.landmarks.size());
      Tensor<float> l({L, 3});
      for (int i = 0; i < L; ++i)
        for (int c = 0; c < 3; ++c) l.at(i, c) = static_cast<float>(s.landmarks[static_cast<std::size_t>(i)][c]);
      ck.put(p + "landmarks", l);
    }
  }
  ck.save(path);
}

std::vector<ShapeData> load_shapes(const std::filesystem::path& path) {
  const Checkpoint ck = Checkpoint::load(path);
  if (!ck.has_text("dataset.count")) throw DataError("'" + path.string() + "' is not a preprocessed dataset");
  std::size_t count = 0;
  try {
    count = std::stoul(ck.text("dataset.count"));
  } catch (const std::exception&) {
    throw DataError("'" + path.string() + "': bad dataset count");
  }
  std::vector<ShapeData> shapes(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::string p = "shape" + std::to_string(i) + ".";
    ShapeData& s = shapes[i];
    s.name = ck.text(p + "name");
    s.colorless = ck.text(p + "colorless") == "1";
    s.points = ck.get(p + "points");
    s.normals = ck.get(p + "normals");
    s.colors = ck.get(p + "colors");
    s.grid = ck.get(p + "grid");
    if (ck.has(p + "labels"))
      for (float v : ck.get(p + "labels").values()) s.labels.push_back(static_cast<int>(v));
    if (ck.has(p + "landmarks")) {
      const Tensor<float> l = ck.get(p + "landmarks");
      for (int i = 0; i < l.dim(0); ++i) s.landmarks.emplace_back(l.at(i, 0), l.at(i, 1), l.at(i, 2));
    }
    s.validate();
  }
  return shapes;
}

Tensor<float> toy_encoder_input(const ToyImage& img) {
  const Image& im = img.image;
  if (im.channels != 3 || im.width != im.height) throw DataError("toy image must be square RGB");
  const int S = im.width;
  Tensor<float> t({3, S, S});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) t[(static_cast<std::size_t>(c) * S + y) * S + x] = im.at(x, y, c);
  return t;
}

Tensor<float> toy_pixel_grid(int size) {
  Tensor<float> t({size * size, 2});
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      t.at(y * size + x, 0) = static_cast<float>(pixel_to_unit(x, size));
      t.at(y * size + x, 1) = static_cast<float>(pixel_to_unit(y, size));
    }
  return t;
}

Tensor<float> toy_pixel_colors(const ToyImage& img) {
  const Image& im = img.image;
  const int S = im.width;
  Tensor<float> t({S * S, 3});
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x)
      for (int c = 0; c < 3; ++c) t.at(y * S + x, c) = im.at(x, y, c);
  return t;
}

}  // namespace auv
