#include "auv/geometry.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "auv/checkpoint.hpp"
#include "auv/errors.hpp"
#include "auv/rng.hpp"

namespace auv {

const Image* TexturedMesh::texture_for_face(int face) const {
  if (!material_ids.empty()) {
    const int m = material_ids[static_cast<std::size_t>(face)];
    if (m >= 0 && static_cast<std::size_t>(m) < material_textures.size() &&
        !material_textures[static_cast<std::size_t>(m)].empty()) {
      return &material_textures[static_cast<std::size_t>(m)];
    }
  }
  return texture ? &*texture : nullptr;
}

void TexturedMesh::validate() const {
  const int nv = static_cast<int>(vertices.size());
  for (const Vec3& v : vertices) {
    if (!v.allFinite()) throw DataError("mesh: non-finite vertex position");
  }
  for (std::size_t f = 0; f < triangles.size(); ++f) {
    for (int idx : triangles[f]) {
      if (idx < 0 || idx >= nv) {
        throw DataError("mesh: triangle " + std::to_string(f) + " references vertex " + std::to_string(idx) +
                        " outside [0," + std::to_string(nv) + ")");
      }
    }
  }
  if (!uv_triangles.empty()) {
    if (uv_triangles.size() != triangles.size()) throw DataError("mesh: uv triangle count differs from triangle count");
    const int nt = static_cast<int>(uvs.size());
    for (std::size_t f = 0; f < uv_triangles.size(); ++f)
      for (int idx : uv_triangles[f])
        if (idx < 0 || idx >= nt) {
          throw DataError("mesh: triangle " + std::to_string(f) + " references uv " + std::to_string(idx) +
                          " outside [0," + std::to_string(nt) + ")");
        }
  }
  for (const Vec2& t : uvs) {
    if (!t.allFinite()) throw DataError("mesh: non-finite texture coordinate");
  }
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void parse_fail(const std::filesystem::path& path, int line, const std::string& msg) {
  throw DataError(path.string() + ":" + std::to_string(line) + ": " + msg);
}

// OBJ indices are 1-based; negative values count back from the current end.
int resolve_index(const std::string& tok, int count, const std::filesystem::path& path, int line) {
  int v = 0;
  try {
    std::size_t used = 0;
    v = std::stoi(tok, &used);
    if (used != tok.size()) parse_fail(path, line, "bad index '" + tok + "'");
  } catch (const std::logic_error&) {
    parse_fail(path, line, "bad index '" + tok + "'");
  }
  if (v == 0) parse_fail(path, line, "index 0 is invalid (OBJ indices are 1-based)");
  return v > 0 ? v - 1 : count + v;
}

std::map<std::string, std::filesystem::path> parse_mtl(const std::filesystem::path& path) {
  std::map<std::string, std::filesystem::path> maps;
  std::ifstream in(path);
  if (!in) return maps;
  std::string line, current;
  while (std::getline(in, line)) {
    std::istringstream ss(trim(line));
    std::string key;
    ss >> key;
    if (key == "newmtl") {
      std::getline(ss, current);
      current = trim(current);
    } else if (key == "map_Kd" && !current.empty()) {
      std::string rest;
      std::getline(ss, rest);
      rest = trim(rest);
      // Options such as "-s 1 1 1" precede the file name; keep the last token.
      const auto sp = rest.find_last_of(" \t");
      if (sp != std::string::npos) rest = rest.substr(sp + 1);
      maps[current] = path.parent_path() / rest;
    }
  }
  return maps;
}

}  // namespace

TexturedMesh load_textured_mesh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mesh '" + path.string() + "'");
  TexturedMesh mesh;
  std::vector<std::filesystem::path> mtl_files;
  std::map<std::string, int> material_index;
  int current_material = -1;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::istringstream ss(t);
    std::string key;
    ss >> key;
    if (key == "v") {
      Vec3 p;
      if (!(ss >> p.x() >> p.y() >> p.z())) parse_fail(path, line_no, "expected 3 coordinates after 'v'");
      mesh.vertices.push_back(p);
    } else if (key == "vt") {
      Vec2 uv;
      if (!(ss >> uv.x() >> uv.y())) parse_fail(path, line_no, "expected 2 coordinates after 'vt'");
      mesh.uvs.push_back(uv);
    } else if (key == "f") {
      std::vector<std::string> corners;
      std::string c;
      while (ss >> c) corners.push_back(c);
      if (corners.size() != 3) {
        parse_fail(path, line_no, "only triangular faces are supported (got " + std::to_string(corners.size()) + " corners)");
      }
      Tri v{}, vt{};
      bool has_vt = true;
      for (int k = 0; k < 3; ++k) {
        const std::string& s = corners[static_cast<std::size_t>(k)];
        const auto slash = s.find('/');
        v[static_cast<std::size_t>(k)] = resolve_index(s.substr(0, slash), static_cast<int>(mesh.vertices.size()), path, line_no);
        if (slash == std::string::npos) {
          has_vt = false;
          continue;
        }
        const auto slash2 = s.find('/', slash + 1);
        const std::string ts = s.substr(slash + 1, slash2 == std::string::npos ? std::string::npos : slash2 - slash - 1);
        if (ts.empty()) {
          has_vt = false;
        } else {
          vt[static_cast<std::size_t>(k)] = resolve_index(ts, static_cast<int>(mesh.uvs.size()), path, line_no);
        }
      }
      for (int idx : v) {
        if (idx < 0 || idx >= static_cast<int>(mesh.vertices.size())) {
          parse_fail(path, line_no, "vertex index out of range");
        }
      }
      mesh.triangles.push_back(v);
      if (has_vt) {
        for (int idx : vt)
          if (idx < 0 || idx >= static_cast<int>(mesh.uvs.size())) parse_fail(path, line_no, "uv index out of range");
        mesh.uv_triangles.push_back(vt);
      } else if (!mesh.uv_triangles.empty()) {
        parse_fail(path, line_no, "face without texture coordinates in a textured mesh");
      }
      mesh.material_ids.push_back(current_material);
    } else if (key == "mtllib") {
      std::string rest;
      std::getline(ss, rest);
      mtl_files.push_back(path.parent_path() / trim(rest));
    } else if (key == "usemtl") {
      std::string name;
      std::getline(ss, name);
      name = trim(name);
      auto it = material_index.find(name);
      if (it == material_index.end()) {
        it = material_index.emplace(name, static_cast<int>(mesh.material_names.size())).first;
        mesh.material_names.push_back(name);
      }
      current_material = it->second;
    }
    // vn, o, g, s and anything else are ignored.
  }
  if (!mesh.uv_triangles.empty() && mesh.uv_triangles.size() != mesh.triangles.size()) {
    throw DataError(path.string() + ": mixes faces with and without texture coordinates");
  }
  mesh.validate();

  std::map<std::string, std::filesystem::path> maps;
  for (const auto& f : mtl_files) {
    for (auto& [k, v] : parse_mtl(f)) maps.emplace(k, v);
  }
  mesh.material_textures.resize(mesh.material_names.size());
  for (std::size_t m = 0; m < mesh.material_names.size(); ++m) {
    auto it = maps.find(mesh.material_names[m]);
    if (it == maps.end() || !std::filesystem::exists(it->second)) continue;
    mesh.material_textures[m] = read_png(it->second);
    if (!mesh.texture) mesh.texture = mesh.material_textures[m];
  }
  if (!mesh.texture && !maps.empty()) {
    // Material library without usemtl: fall back to its first map.
    const auto& p = maps.begin()->second;
    if (std::filesystem::exists(p)) mesh.texture = read_png(p);
  }
  return mesh;
}

UnitBoxTransform unit_box_transform(const std::vector<Vec3>& points) {
  if (points.empty()) throw DataError("normalize_to_unit_box: empty point set");
  Vec3 lo = points.front(), hi = points.front();
  for (const Vec3& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double extent = (hi - lo).maxCoeff();
  if (!(extent > 0.0)) throw DataError("normalize_to_unit_box: degenerate (zero-extent) geometry");
  UnitBoxTransform t;
  t.center = 0.5 * (lo + hi);
  t.scale = 1.0 / extent;
  return t;
}

TexturedMesh normalize_to_unit_box(const TexturedMesh& mesh) {
  const UnitBoxTransform t = unit_box_transform(mesh.vertices);
  TexturedMesh out = mesh;
  for (Vec3& v : out.vertices) v = t.apply(v);
  return out;
}

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) { return 0.5 * (b - a).cross(c - a).norm(); }

Vec3 face_normal(const TexturedMesh& mesh, int face) {
  const Tri& t = mesh.triangles[static_cast<std::size_t>(face)];
  const Vec3 n = (mesh.vertices[static_cast<std::size_t>(t[1])] - mesh.vertices[static_cast<std::size_t>(t[0])])
                     .cross(mesh.vertices[static_cast<std::size_t>(t[2])] - mesh.vertices[static_cast<std::size_t>(t[0])]);
  const double len = n.norm();
  return len > 0.0 ? Vec3(n / len) : Vec3(0, 0, 1);
}

ColoredPointCloud sample_surface(const TexturedMesh& mesh, int n, std::uint64_t seed) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "sample_surface: n must be >= 1");
  if (mesh.triangles.empty()) throw DataError("sample_surface: mesh has no triangles");
  std::vector<double> cdf(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.triangles.size(); ++f) {
    const Tri& t = mesh.triangles[f];
    total += triangle_area(mesh.vertices[static_cast<std::size_t>(t[0])], mesh.vertices[static_cast<std::size_t>(t[1])],
                           mesh.vertices[static_cast<std::size_t>(t[2])]);
    cdf[f] = total;
  }
  if (!(total > 0.0)) throw DataError("sample_surface: mesh has zero surface area");

  ColoredPointCloud cloud;
  cloud.colorless = !mesh.textured();
  cloud.positions.reserve(static_cast<std::size_t>(n));
  Rng rng(seed, 0x5A3D);
  for (int i = 0; i < n; ++i) {
    const double r = rng.uniform() * total;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), r);
    const int f = static_cast<int>(std::min<std::ptrdiff_t>(it - cdf.begin(), static_cast<std::ptrdiff_t>(cdf.size()) - 1));
    const double s = std::sqrt(rng.uniform());
    const double u = rng.uniform();
    const Vec3 bary(1.0 - s, s * (1.0 - u), s * u);
    const Tri& t = mesh.triangles[static_cast<std::size_t>(f)];
    const Vec3 p = bary[0] * mesh.vertices[static_cast<std::size_t>(t[0])] +
                   bary[1] * mesh.vertices[static_cast<std::size_t>(t[1])] +
                   bary[2] * mesh.vertices[static_cast<std::size_t>(t[2])];
    Vec3 color = Vec3::Constant(kColorlessSentinel);
    if (!cloud.colorless) {
      const Tri& tt = mesh.uv_triangles[static_cast<std::size_t>(f)];
      const Vec2 uv = bary[0] * mesh.uvs[static_cast<std::size_t>(tt[0])] + bary[1] * mesh.uvs[static_cast<std::size_t>(tt[1])] +
                      bary[2] * mesh.uvs[static_cast<std::size_t>(tt[2])];
      const Image* tex = mesh.texture_for_face(f);
      float rgba[4] = {0, 0, 0, 0};
      sample_uv(*tex, uv.x(), uv.y(), rgba);
      color = Vec3(rgba[0], rgba[1], rgba[2]);
    }
    cloud.positions.push_back(p);
    cloud.normals.push_back(face_normal(mesh, f));
    cloud.colors.push_back(color);
    cloud.faces.push_back(f);
    cloud.barycentric.push_back(bary);
  }
  return cloud;
}

std::vector<Vec3> vertex_normals(const TexturedMesh& mesh) {
  std::vector<Vec3> acc(mesh.vertices.size(), Vec3::Zero());
  for (const Tri& t : mesh.triangles) {
    const Vec3& a = mesh.vertices[static_cast<std::size_t>(t[0])];
    const Vec3& b = mesh.vertices[static_cast<std::size_t>(t[1])];
    const Vec3& c = mesh.vertices[static_cast<std::size_t>(t[2])];
    const Vec3 n = (b - a).cross(c - a);  // length = 2 * area
    for (int k : t) acc[static_cast<std::size_t>(k)] += n;
  }
  for (Vec3& n : acc) {
    const double len = n.norm();
    n = len > 0.0 ? Vec3(n / len) : Vec3(0, 0, 1);
  }
  return acc;
}

int ColoredVoxelGrid::index_of(double coord) const {
  const int i = static_cast<int>(std::floor((coord + 0.5) * resolution));
  return std::clamp(i, 0, resolution - 1);
}

float ColoredVoxelGrid::occupancy(int ix, int iy, int iz) const { return color(3, ix, iy, iz); }

float ColoredVoxelGrid::color(int c, int ix, int iy, int iz) const {
  const std::size_t R = static_cast<std::size_t>(resolution);
  return data[((static_cast<std::size_t>(c) * R + ix) * R + iy) * R + iz];
}

std::size_t ColoredVoxelGrid::occupied_count() const {
  const std::size_t R = static_cast<std::size_t>(resolution);
  std::size_t n = 0;
  for (std::size_t i = 0; i < R * R * R; ++i) n += data[3 * R * R * R + i] > 0.5f ? 1 : 0;
  return n;
}

ColoredVoxelGrid voxelize_colored(const ColoredPointCloud& cloud, int resolution) {
  if (resolution < 8) throw Error(ErrorKind::InvalidArgument, "voxelize_colored: resolution must be >= 8");
  if (cloud.size() == 0) throw DataError("voxelize_colored: empty point cloud");
  ColoredVoxelGrid grid;
  grid.resolution = resolution;
  const std::size_t R = static_cast<std::size_t>(resolution);
  const std::size_t V = R * R * R;
  std::vector<double> sums(3 * V, 0.0);
  std::vector<int> counts(V, 0);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.positions[i];
    const std::size_t v = (static_cast<std::size_t>(grid.index_of(p.x())) * R + grid.index_of(p.y())) * R + grid.index_of(p.z());
    counts[v] += 1;
    for (int c = 0; c < 3; ++c) sums[c * V + v] += cloud.colors[i][c];
  }
  grid.data = Tensor<float>({4, resolution, resolution, resolution});
  for (std::size_t v = 0; v < V; ++v) {
    if (counts[v] == 0) continue;
    grid.data[3 * V + v] = 1.0f;
    if (cloud.colorless) continue;
    for (int c = 0; c < 3; ++c) grid.data[c * V + v] = static_cast<float>(sums[c * V + v] / counts[v]);
  }
  return grid;
}

void write_obj(const std::filesystem::path& obj_path, const ObjWriteSpec& spec) {
  const std::filesystem::path mtl_path = std::filesystem::path(obj_path).replace_extension(".mtl");
  std::ostringstream mtl;
  for (std::size_t m = 0; m < spec.material_names.size(); ++m) {
    mtl << "newmtl " << spec.material_names[m] << "\nKd 1 1 1\n";
    if (m < spec.texture_files.size() && !spec.texture_files[m].empty()) mtl << "map_Kd " << spec.texture_files[m] << "\n";
    mtl << "\n";
  }
  std::ostringstream obj;
  obj << std::setprecision(9);
  if (!spec.material_names.empty()) obj << "mtllib " << mtl_path.filename().string() << "\n";
  for (const Vec3& v : spec.vertices) obj << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << "\n";
  for (const Vec2& t : spec.uvs) obj << "vt " << t.x() << ' ' << t.y() << "\n";
  const bool has_uv = !spec.uvs.empty();
  int current = -2;
  for (std::size_t f = 0; f < spec.triangles.size(); ++f) {
    const int m = f < spec.face_material.size() ? spec.face_material[f] : -1;
    if (m != current && m >= 0) {
      obj << "usemtl " << spec.material_names[static_cast<std::size_t>(m)] << "\n";
      current = m;
    }
    obj << 'f';
    for (int k = 0; k < 3; ++k) {
      const int v = spec.triangles[f][static_cast<std::size_t>(k)] + 1;
      obj << ' ' << v;
      if (has_uv) {
        const int t = (spec.uv_triangles.empty() ? spec.triangles[f][static_cast<std::size_t>(k)]
                                                 : spec.uv_triangles[f][static_cast<std::size_t>(k)]) + 1;
        obj << '/' << t;
      }
    }
    obj << "\n";
  }
  if (!spec.material_names.empty()) write_text_atomic(mtl_path, mtl.str());
  write_text_atomic(obj_path, obj.str());
}

}  // namespace auv
