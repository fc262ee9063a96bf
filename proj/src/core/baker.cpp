#include "auv/baker.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <json.hpp>
#include <queue>

#include "auv/checkpoint.hpp"
#include "auv/errors.hpp"

namespace auv {

int uv_to_texel(double q, int resolution) {
  const double c = std::clamp(q, -kUvWindow, kUvWindow);
  const int i = static_cast<int>(std::floor((c + kUvWindow) / (2.0 * kUvWindow) * resolution));
  return std::clamp(i, 0, resolution - 1);
}

double texel_to_uv(int i, int resolution) { return (i + 0.5) / resolution * (2.0 * kUvWindow) - kUvWindow; }

Vec2 uv_to_atlas(double qx, double qy) {
  const double w = 2.0 * kUvWindow;
  return Vec2((std::clamp(qx, -kUvWindow, kUvWindow) + kUvWindow) / w,
              1.0 - (std::clamp(qy, -kUvWindow, kUvWindow) + kUvWindow) / w);
}

std::vector<std::uint8_t> TextureImage::validity() const {
  std::vector<std::uint8_t> v(count.size());
  for (std::size_t i = 0; i < count.size(); ++i) v[i] = count[i] > 0 ? 1 : 0;
  return v;
}

std::size_t TextureImage::valid_count() const {
  return static_cast<std::size_t>(std::count_if(count.begin(), count.end(), [](int c) { return c > 0; }));
}

int PointMapping::route(int i) const {
  const int K = masks.dim(1);
  int best = 0;
  for (int k = 1; k < K; ++k)
    if (masks.at(i, k) > masks.at(i, best)) best = k;
  return best;
}

PointMapping map_points(AuvModel<float>& model, const Tensor<float>& encoder_input, const Tensor<float>& points,
                        const Tensor<float>& normals, int chunk) {
  const int N = points.dim(0);
  const int K = model.config().generator_count();
  if (normals.shape() != Shape{N, 3} && K > 1) throw ShapeError("map_points: normals must be [N,3]");
  PointMapping out{Tensor<float>({N, 2}), Tensor<float>({N, K})};
  Tape<float> enc_tape;
  const Tensor<float> code = model.encode(enc_tape, encoder_input).code.value();
  const int D = points.dim(1);
  for (int begin = 0; begin < N; begin += chunk) {
    const int n = std::min(chunk, N - begin);
    Tensor<float> p({n, D}), nr({n, 3});
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < D; ++c) p.at(i, c) = points.at(begin + i, c);
      if (K > 1)
        for (int c = 0; c < 3; ++c) nr.at(i, c) = normals.at(begin + i, c);
    }
    Tape<float> tape;
    Var<float> z = tape.constant(code);
    Var<float> pv = tape.constant(p);
    const Tensor<float> uv = model.map_uv(tape, pv, z).value();
    const auto masks = model.masks(tape, pv, nr, z);
    for (int i = 0; i < n; ++i) {
      out.uv.at(begin + i, 0) = uv.at(i, 0);
      out.uv.at(begin + i, 1) = uv.at(i, 1);
      for (int k = 0; k < K; ++k) out.masks.at(begin + i, k) = masks[static_cast<std::size_t>(k)].value().at(i, 0);
    }
  }
  return out;
}

std::vector<TextureImage> bake_samples(const PointMapping& mapping, const Tensor<float>& colors, int resolution) {
  if (resolution < 1) throw ConfigError("bake: resolution must be >= 1");
  const int N = mapping.uv.dim(0);
  const int K = mapping.masks.dim(1);
  if (colors.shape() != Shape{N, 3} || mapping.masks.dim(0) != N) throw ShapeError("bake: sample arrays disagree");
  const std::size_t texels = static_cast<std::size_t>(resolution) * resolution;
  std::vector<std::vector<double>> sums(static_cast<std::size_t>(K), std::vector<double>(texels * 3, 0.0));
  std::vector<TextureImage> out(static_cast<std::size_t>(K));
  for (auto& t : out) {
    t.color = Image(resolution, resolution, 3);
    t.count.assign(texels, 0);
  }
  for (int i = 0; i < N; ++i) {
    const auto k = static_cast<std::size_t>(mapping.route(i));
    const std::size_t idx = static_cast<std::size_t>(uv_to_texel(mapping.uv.at(i, 1), resolution)) * resolution +
                            static_cast<std::size_t>(uv_to_texel(mapping.uv.at(i, 0), resolution));
    ++out[k].count[idx];
    for (int c = 0; c < 3; ++c) sums[k][idx * 3 + c] += colors.at(i, c);
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (out[k].valid_count() == 0) std::cerr << "warning: no samples routed to generator " << k << "\n";
    for (std::size_t t = 0; t < texels; ++t)
      if (out[k].count[t] > 0)
        for (int c = 0; c < 3; ++c)
          out[k].color.data[t * 3 + c] = static_cast<float>(sums[k][t * 3 + c] / out[k].count[t]);
  }
  return out;
}

std::vector<TextureImage> bake_texture(AuvModel<float>& model, const ShapeData& shape, int resolution) {
  shape.validate();
  return bake_samples(map_points(model, shape.grid, shape.points, shape.normals), shape.colors, resolution);
}

namespace {

enum : std::uint8_t { kKnown = 0, kBand = 1, kInside = 2 };

}  // namespace

Image inpaint_fmm(const Image& img, const std::vector<std::uint8_t>& valid, double radius, double eps) {
  const int W = img.width, H = img.height, C = img.channels;
  const std::size_t n = static_cast<std::size_t>(W) * H;
  if (valid.size() != n) throw ShapeError("inpaint: validity mask size mismatch");
  if (!(radius >= 1.0)) throw ConfigError("inpaint: radius must be >= 1");
  if (std::none_of(valid.begin(), valid.end(), [](std::uint8_t v) { return v != 0; })) {
    throw DataError("inpaint: image has no valid texels");
  }
  constexpr double kInf = 1e6;
  Image out = img;
  std::vector<std::uint8_t> flag(n);
  std::vector<double> T(n);
  for (std::size_t i = 0; i < n; ++i) {
    flag[i] = valid[i] ? kKnown : kInside;
    T[i] = valid[i] ? 0.0 : kInf;
  }
  auto id = [W](int x, int y) { return static_cast<std::size_t>(y) * W + x; };
  auto inside = [W, H](int x, int y) { return x >= 0 && y >= 0 && x < W && y < H; };
  const int dx4[4] = {1, -1, 0, 0}, dy4[4] = {0, 0, 1, -1};

  using Entry = std::tuple<double, std::uint64_t, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  std::uint64_t seq = 0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (flag[id(x, y)] != kKnown) continue;
      for (int d = 0; d < 4; ++d) {
        const int nx = x + dx4[d], ny = y + dy4[d];
        if (inside(nx, ny) && flag[id(nx, ny)] == kInside) {
          flag[id(x, y)] = kBand;
          heap.emplace(0.0, seq++, id(x, y));
          break;
        }
      }
    }

  auto t_at = [&](int x, int y) { return inside(x, y) ? T[id(x, y)] : kInf; };
  auto solve = [&](double a, double b) {
    if (a >= kInf && b >= kInf) return kInf;
    if (a >= kInf) return b + 1.0;
    if (b >= kInf) return a + 1.0;
    const double d = a - b;
    if (std::abs(d) >= 1.0) return std::min(a, b) + 1.0;
    return 0.5 * (a + b + std::sqrt(2.0 - d * d));
  };
  auto arrival = [&](int x, int y) {
    const double l = t_at(x - 1, y), r = t_at(x + 1, y), u = t_at(x, y - 1), b = t_at(x, y + 1);
    return std::min({solve(l, u), solve(r, u), solve(l, b), solve(r, b)});
  };
  // One-sided or central difference over texels that already carry a value.
  auto diff = [&](auto&& value, auto&& usable, int x, int y, int ax) -> double {
    const int xm = x - (ax == 0), ym = y - (ax == 1), xp = x + (ax == 0), yp = y + (ax == 1);
    const bool m = inside(xm, ym) && usable(xm, ym), p = inside(xp, yp) && usable(xp, yp);
    if (m && p) return 0.5 * (value(xp, yp) - value(xm, ym));
    if (p && usable(x, y)) return value(xp, yp) - value(x, y);
    if (m && usable(x, y)) return value(x, y) - value(xm, ym);
    return 0.0;
  };
  auto has_t = [&](int x, int y) { return T[id(x, y)] < kInf; };
  auto has_value = [&](int x, int y) { return flag[id(x, y)] != kInside; };
  const int r = static_cast<int>(std::ceil(radius));
  std::vector<double> acc(static_cast<std::size_t>(C));

  auto fill = [&](int px, int py) {
    const double Tp = T[id(px, py)];
    const auto tval = [&](int x, int y) { return T[id(x, y)]; };
    double gx = diff(tval, has_t, px, py, 0), gy = diff(tval, has_t, px, py, 1);
    const double gn = std::hypot(gx, gy);
    if (gn > 0) {
      gx /= gn;
      gy /= gn;
    }
    std::fill(acc.begin(), acc.end(), 0.0);
    double wsum = 0;
    for (int qy = py - r; qy <= py + r; ++qy)
      for (int qx = px - r; qx <= px + r; ++qx) {
        if (!inside(qx, qy) || !has_value(qx, qy)) continue;
        const double rx = px - qx, ry = py - qy;
        const double d2 = rx * rx + ry * ry;
        if (d2 > radius * radius) continue;
        const double dir = std::max(std::abs(rx * gx + ry * gy) / std::sqrt(d2), eps);
        const double dst = 1.0 / (d2 + eps);
        const double lev = 1.0 / (1.0 + std::abs(T[id(qx, qy)] - Tp));
        const double w = dir * dst * lev;
        for (int c = 0; c < C; ++c) {
          const auto ival = [&](int x, int y) { return static_cast<double>(out.at(x, y, c)); };
          const double ix = diff(ival, has_value, qx, qy, 0), iy = diff(ival, has_value, qx, qy, 1);
          acc[static_cast<std::size_t>(c)] += w * (out.at(qx, qy, c) + ix * rx + iy * ry);
        }
        wsum += w;
      }
    for (int c = 0; c < C; ++c) out.at(px, py, c) = static_cast<float>(acc[static_cast<std::size_t>(c)] / wsum);
  };

  while (!heap.empty()) {
    const auto [t, s, idx] = heap.top();
    heap.pop();
    if (flag[idx] != kBand || t != T[idx]) continue;
    flag[idx] = kKnown;
    const int x = static_cast<int>(idx % W), y = static_cast<int>(idx / W);
    for (int d = 0; d < 4; ++d) {
      const int nx = x + dx4[d], ny = y + dy4[d];
      if (!inside(nx, ny)) continue;
      const std::size_t nid = id(nx, ny);
      if (flag[nid] == kKnown) continue;
      const double tn = arrival(nx, ny);
      if (flag[nid] == kInside) {
        T[nid] = tn;
        fill(nx, ny);
        flag[nid] = kBand;
        heap.emplace(tn, seq++, nid);
      } else if (tn < T[nid]) {
        T[nid] = tn;
        heap.emplace(tn, seq++, nid);
      }
    }
  }
  return out;
}

Image inpaint_texture(const TextureImage& tex, double radius) { return inpaint_fmm(tex.color, tex.validity(), radius); }

double boundary_disagreement(const TextureImage& a, const Image& a_filled, const TextureImage& b, const Image& b_filled,
                             int band) {
  const int R = a.resolution();
  if (b.resolution() != R || a_filled.width != R || b_filled.width != R) throw ShapeError("textures differ in size");
  auto near = [&](const TextureImage& t, int x, int y) {
    for (int yy = std::max(0, y - band); yy <= std::min(R - 1, y + band); ++yy)
      for (int xx = std::max(0, x - band); xx <= std::min(R - 1, x + band); ++xx)
        if (t.valid(xx, yy)) return true;
    return false;
  };
  double sum = 0;
  std::size_t n = 0;
  for (int y = 0; y < R; ++y)
    for (int x = 0; x < R; ++x) {
      const bool in_band = (a.valid(x, y) && near(b, x, y)) || (b.valid(x, y) && near(a, x, y));
      if (!in_band) continue;
      for (int c = 0; c < 3; ++c) sum += std::abs(a_filled.at(x, y, c) - b_filled.at(x, y, c));
      n += 3;
    }
  return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

void TexturedExport::validate() const {
  if (uvs.size() != vertices.size()) throw DataError("export: one UV per vertex required");
  if (face_texture.size() != triangles.size()) throw DataError("export: one texture index per face required");
  const int K = texture_count();
  for (int f : face_texture)
    if (f < 0 || f >= K) throw DataError("export: face texture index out of range");
  for (const Vec2& t : uvs)
    if (!(t.x() >= 0 && t.x() <= 1 && t.y() >= 0 && t.y() <= 1)) throw DataError("export: UV outside [0,1]");
}

std::uint64_t TexturedExport::geometry_hash() const {
  std::uint64_t h = fnv1a(vertices.data(), vertices.size() * sizeof(Vec3));
  h = fnv1a(triangles.data(), triangles.size() * sizeof(Tri), h);
  h = fnv1a(uvs.data(), uvs.size() * sizeof(Vec2), h);
  return fnv1a(face_texture.data(), face_texture.size() * sizeof(int), h);
}

std::vector<int> vote_face_textures(const std::vector<Tri>& triangles, const std::vector<int>& vertex_route, int K,
                                    int* seam_faces) {
  std::vector<int> out(triangles.size());
  int seams = 0;
  std::vector<int> votes(static_cast<std::size_t>(K));
  for (std::size_t f = 0; f < triangles.size(); ++f) {
    std::fill(votes.begin(), votes.end(), 0);
    for (int v : triangles[f]) ++votes[static_cast<std::size_t>(vertex_route.at(static_cast<std::size_t>(v)))];
    out[f] = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    if (votes[static_cast<std::size_t>(out[f])] != 3) ++seams;
  }
  if (seam_faces) *seam_faces = seams;
  return out;
}

TexturedExport make_export(AuvModel<float>& model, const TexturedMesh& mesh, const ShapeData& shape,
                           std::vector<Image> textures) {
  const int K = model.config().generator_count();
  if (static_cast<int>(textures.size()) != K) throw ConfigError("export: expected one texture per generator");
  if (model.config().point_dim != 3) throw ConfigError("export needs a 3D model");
  const TexturedMesh norm = normalize_to_unit_box(mesh);
  const std::vector<Vec3> normals = vertex_normals(norm);
  const int V = static_cast<int>(norm.vertices.size());
  Tensor<float> p({V, 3}), n({V, 3});
  for (int i = 0; i < V; ++i)
    for (int c = 0; c < 3; ++c) {
      p.at(i, c) = static_cast<float>(norm.vertices[static_cast<std::size_t>(i)][c]);
      n.at(i, c) = static_cast<float>(normals[static_cast<std::size_t>(i)][c]);
    }
  const PointMapping m = map_points(model, shape.grid, p, n);
  TexturedExport ex;
  ex.vertices = mesh.vertices;
  ex.triangles = mesh.triangles;
  ex.uvs.resize(static_cast<std::size_t>(V));
  std::vector<int> route(static_cast<std::size_t>(V));
  for (int i = 0; i < V; ++i) {
    ex.uvs[static_cast<std::size_t>(i)] = uv_to_atlas(m.uv.at(i, 0), m.uv.at(i, 1));
    route[static_cast<std::size_t>(i)] = m.route(i);
  }
  ex.face_texture = vote_face_textures(ex.triangles, route, K, &ex.seam_faces);
  ex.resolution = textures.empty() ? 0 : textures.front().width;
  ex.textures = std::move(textures);
  ex.validate();
  return ex;
}

void write_export(const std::filesystem::path& dir, const std::string& name, const TexturedExport& ex) {
  ex.validate();
  std::filesystem::create_directories(dir);
  ObjWriteSpec spec;
  spec.vertices = ex.vertices;
  spec.uvs = ex.uvs;
  spec.triangles = ex.triangles;
  spec.face_material = ex.face_texture;
  for (int k = 0; k < ex.texture_count(); ++k) {
    const std::string png = name + "_tex" + std::to_string(k) + ".png";
    write_png(dir / png, ex.textures[static_cast<std::size_t>(k)]);
    spec.material_names.push_back("tex" + std::to_string(k));
    spec.texture_files.push_back(png);
  }
  write_obj(dir / (name + ".obj"), spec);
  nlohmann::ordered_json j;
  j["R"] = ex.resolution;
  j["uv_window"] = {-kUvWindow, kUvWindow};
  j["K"] = ex.texture_count();
  j["seam_faces"] = ex.seam_faces;
  write_text_atomic(dir / (name + ".json"), j.dump(2) + "\n");
}

TexturedExport load_export(const std::filesystem::path& dir, const std::string& name) {
  const TexturedMesh mesh = load_textured_mesh(dir / (name + ".obj"));
  const auto side = dir / (name + ".json");
  std::ifstream in(side);
  if (!in) throw IoError("missing export sidecar '" + side.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("'" + side.string() + "': " + e.what());
  }
  TexturedExport ex;
  ex.vertices = mesh.vertices;
  ex.triangles = mesh.triangles;
  if (mesh.uv_triangles != mesh.triangles || mesh.uvs.size() != mesh.vertices.size()) {
    throw DataError("export '" + name + "': expected one UV per vertex");
  }
  ex.uvs = mesh.uvs;
  ex.face_texture = mesh.material_ids;
  ex.textures = mesh.material_textures;
  ex.resolution = j.value("R", 0);
  ex.seam_faces = j.value("seam_faces", 0);
  if (j.value("K", -1) != ex.texture_count()) throw DataError("export '" + name + "': texture count disagrees with sidecar");
  for (const Image& t : ex.textures)
    if (t.empty()) throw DataError("export '" + name + "': missing texture raster");
  ex.validate();
  return ex;
}

TexturedExport transfer_texture(const TexturedExport& a, const std::vector<Image>& b_textures) {
  if (b_textures.size() != a.textures.size()) {
    throw ConfigError("transfer: texture count mismatch (" + std::to_string(a.textures.size()) + " vs " +
                      std::to_string(b_textures.size()) + ")");
  }
  TexturedExport out = a;
  out.textures = b_textures;
  if (!b_textures.empty()) out.resolution = b_textures.front().width;
  return out;
}

}  // namespace auv
