#include <doctest.h>

#include <cmath>
#include <fstream>

#include "auv/errors.hpp"
#include "auv/geometry.hpp"
#include "auv/rng.hpp"
#include "tempdir.hpp"

using namespace auv;

namespace {

const char* kCube =
    "v -1 -1 -1\nv 1 -1 -1\nv 1 1 -1\nv -1 1 -1\nv -1 -1 1\nv 1 -1 1\nv 1 1 1\nv -1 1 1\n"
    "f 1 3 2\nf 1 4 3\nf 5 6 7\nf 5 7 8\nf 1 2 6\nf 1 6 5\nf 4 8 7\nf 4 7 3\nf 1 5 8\nf 1 8 4\nf 2 3 7\nf 2 7 6\n";

void write_text(const std::filesystem::path& p, const std::string& s) { std::ofstream(p) << s; }

TexturedMesh cube() {
  auvtest::TempDir dir("cube");
  write_text(dir / "cube.obj", kCube);
  return load_textured_mesh(dir / "cube.obj");
}

TexturedMesh flat_mesh(std::vector<Vec3> v, std::vector<Tri> t) {
  TexturedMesh m;
  m.vertices = std::move(v);
  m.triangles = std::move(t);
  return m;
}

}  // namespace

TEST_CASE("unit cube OBJ loads with 8 vertices and 12 triangles, untextured") {
  const TexturedMesh m = cube();
  CHECK(m.vertices.size() == 8);
  CHECK(m.triangles.size() == 12);
  CHECK_FALSE(m.textured());
}

TEST_CASE("OBJ index 0 is rejected and parse errors carry the line number") {
  auvtest::TempDir dir("objerr");
  write_text(dir / "zero.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n");
  CHECK_THROWS_AS(load_textured_mesh(dir / "zero.obj"), DataError);
  write_text(dir / "bad.obj", "v 0 0 0\nv 1 0 0\nv 0 1 zz\nf 1 2 3\n");
  try {
    load_textured_mesh(dir / "bad.obj");
    FAIL("no throw");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }
  write_text(dir / "dangling.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n");
  CHECK_THROWS_AS(load_textured_mesh(dir / "dangling.obj"), DataError);
  CHECK_THROWS_AS(load_textured_mesh(dir / "missing.obj"), IoError);
}

TEST_CASE("textured OBJ with MTL and PNG resolves its texture") {
  auvtest::TempDir dir("objtex");
  Image tex(4, 4, 3, 0.25f);
  write_png(dir / "t.png", tex);
  write_text(dir / "m.mtl", "newmtl skin\nmap_Kd t.png\n");
  write_text(dir / "m.obj", "mtllib m.mtl\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nusemtl skin\nf 1/1 2/2 3/3\n");
  const TexturedMesh m = load_textured_mesh(dir / "m.obj");
  CHECK(m.textured());
  REQUIRE(m.texture_for_face(0) != nullptr);
  CHECK(m.texture_for_face(0)->at(2, 2, 1) == doctest::Approx(quantize_srgb8(0.25f)).epsilon(1e-6));
  write_text(dir / "nomtl.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nf 1/1 2/2 3/3\n");
  CHECK_FALSE(load_textured_mesh(dir / "nomtl.obj").textured());
}

TEST_CASE("normalize_to_unit_box examples") {
  SUBCASE("[-2,2] per axis scales by a quarter") {
    const TexturedMesh n = normalize_to_unit_box(cube());
    for (const Vec3& v : n.vertices) CHECK(v.cwiseAbs().maxCoeff() == doctest::Approx(0.5).epsilon(1e-15));
    const TexturedMesh c = cube();
    TexturedMesh big = c;
    for (Vec3& v : big.vertices) v *= 2;
    const TexturedMesh nb = normalize_to_unit_box(big);
    for (std::size_t i = 0; i < nb.vertices.size(); ++i) CHECK((nb.vertices[i] - big.vertices[i] / 4).norm() < 1e-15);
  }
  SUBCASE("idempotent") {
    Rng rng(1);
    TexturedMesh m = flat_mesh({}, {});
    for (int i = 0; i < 50; ++i) m.vertices.emplace_back(rng.uniform(-3, 1), rng.uniform(0, 2), rng.uniform(5, 6));
    const TexturedMesh once = normalize_to_unit_box(m), twice = normalize_to_unit_box(once);
    for (std::size_t i = 0; i < once.vertices.size(); ++i) CHECK((once.vertices[i] - twice.vertices[i]).norm() < 1e-7);
  }
  SUBCASE("2x1x1 box keeps its aspect ratio") {
    TexturedMesh m = cube();
    for (Vec3& v : m.vertices) v.x() *= 2;
    const TexturedMesh n = normalize_to_unit_box(m);
    Vec3 lo = Vec3::Constant(1e9), hi = -lo;
    for (const Vec3& v : n.vertices) {
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
    CHECK((hi - lo).x() == doctest::Approx(1.0));
    CHECK((hi - lo).y() == doctest::Approx(0.5));
    CHECK((hi - lo).z() == doctest::Approx(0.5));
    CHECK((hi + lo).norm() < 1e-15);
  }
  CHECK_THROWS_AS(normalize_to_unit_box(flat_mesh({Vec3(1, 1, 1), Vec3(1, 1, 1)}, {})), DataError);
  CHECK_THROWS_AS(normalize_to_unit_box(flat_mesh({}, {})), DataError);
}

TEST_CASE("area-proportional sampling hits the binomial proportion") {
  // Triangle areas 1 and 3 (right triangles with legs 1x2 and 3x2).
  const TexturedMesh m = flat_mesh({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 2, 0), Vec3(5, 0, 0), Vec3(8, 0, 0), Vec3(5, 2, 0)},
                                   {Tri{0, 1, 2}, Tri{3, 4, 5}});
  const ColoredPointCloud c = sample_surface(m, 40000, 3);
  int first = 0;
  for (int f : c.faces) first += f == 0 ? 1 : 0;
  CHECK(std::abs(first - 10000) <= 200);
  CHECK(std::abs((40000 - first) - 30000) <= 600);
  CHECK(c.colorless);
  for (const Vec3& col : c.colors) CHECK(col == Vec3::Constant(kColorlessSentinel));
}

TEST_CASE("samples carry unit face normals and constant texture colors") {
  TexturedMesh m = flat_mesh({Vec3(0, 0, 0), Vec3(0.5, 0.1, 0), Vec3(0.1, 0.4, 0.3)}, {Tri{0, 1, 2}});
  m.uvs = {Vec2(0, 0), Vec2(1, 0), Vec2(0, 1)};
  m.uv_triangles = {Tri{0, 1, 2}};
  Image tex(8, 8, 3);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      tex.at(x, y, 0) = 0.2f;
      tex.at(x, y, 1) = 0.6f;
      tex.at(x, y, 2) = 0.9f;
    }
  m.texture = tex;
  m.material_ids = {-1};
  const ColoredPointCloud c = sample_surface(m, 500, 4);
  const Vec3 fn = face_normal(m, 0);
  CHECK_FALSE(c.colorless);
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(std::abs(c.normals[i].norm() - 1) < 1e-4);
    CHECK((c.normals[i] - fn).norm() < 1e-12);
    CHECK(c.colors[i].x() == doctest::Approx(0.2).epsilon(1e-6));
    CHECK(c.colors[i].y() == doctest::Approx(0.6).epsilon(1e-6));
    CHECK(c.colors[i].z() == doctest::Approx(0.9).epsilon(1e-6));
  }
}

TEST_CASE("sampling a normalized mesh stays in the unit box and commutes with normalization") {
  const TexturedMesh n = normalize_to_unit_box(cube());
  const ColoredPointCloud c = sample_surface(n, 2000, 5);
  for (const Vec3& p : c.positions) CHECK(p.cwiseAbs().maxCoeff() <= 0.5 + 1e-12);
  // Normalizing the sampled positions by the mesh transform is a no-op.
  const UnitBoxTransform t = unit_box_transform(n.vertices);
  for (const Vec3& p : c.positions) CHECK((t.apply(p) - p).norm() < 1e-12);
  // Same seed, same cloud.
  CHECK(sample_surface(n, 2000, 5).positions == c.positions);
}

TEST_CASE("face normals of a closed convex mesh average to zero") {
  const ColoredPointCloud c = sample_surface(normalize_to_unit_box(cube()), 60000, 6);
  Vec3 mean = Vec3::Zero();
  for (const Vec3& nrm : c.normals) mean += nrm;
  mean /= static_cast<double>(c.size());
  // Each axis pair of faces splits ~Binomial(n, 1/3) samples: sd of the mean is about 0.004.
  CHECK(mean.norm() < 0.02);
  for (const Vec3& nrm : c.normals) CHECK(std::abs(nrm.norm() - 1.0) < 1e-4);
}

TEST_CASE("voxelize examples") {
  ColoredPointCloud c;
  c.positions = {Vec3(0, 0, 0)};
  c.normals = {Vec3(0, 0, 1)};
  c.colors = {Vec3(0.1, 0.2, 0.3)};
  ColoredVoxelGrid g = voxelize_colored(c, 64);
  CHECK(g.occupancy(32, 32, 32) == 1.0f);
  CHECK(g.color(2, 32, 32, 32) == doctest::Approx(0.3).epsilon(1e-6));
  CHECK(g.occupied_count() == 1);

  c.positions = {Vec3(0.1, 0.1, 0.1), Vec3(0.1001, 0.1, 0.1)};
  c.normals.assign(2, Vec3(0, 0, 1));
  c.colors = {Vec3::Constant(0.2), Vec3::Constant(0.4)};
  g = voxelize_colored(c, 16);
  CHECK(g.occupied_count() == 1);
  const int i = g.index_of(0.1);
  CHECK(g.color(0, i, i, i) == doctest::Approx(0.3).epsilon(1e-6));

  c.positions = {Vec3(0.5, -0.5, 0.5)};
  c.normals = {Vec3(0, 0, 1)};
  c.colors = {Vec3::Constant(1)};
  g = voxelize_colored(c, 8);
  CHECK(g.occupancy(7, 0, 7) == 1.0f);
  CHECK(g.index_of(0.5) == 7);
  CHECK(g.index_of(-0.5) == 0);

  CHECK_THROWS_AS(voxelize_colored(ColoredPointCloud{}, 16), DataError);
  CHECK_THROWS(voxelize_colored(c, 4));
}

TEST_CASE("voxel occupancy is binary, bounded and deterministic") {
  const ColoredPointCloud c = sample_surface(normalize_to_unit_box(cube()), 3000, 7);
  for (int R : {8, 16, 32}) {
    const ColoredVoxelGrid a = voxelize_colored(c, R), b = voxelize_colored(c, R);
    CHECK(a.data == b.data);
    CHECK(a.occupied_count() <= std::min<std::size_t>(c.size(), static_cast<std::size_t>(R) * R * R));
    for (int x = 0; x < R; ++x)
      for (int y = 0; y < R; ++y)
        for (int z = 0; z < R; ++z) {
          const float o = a.occupancy(x, y, z);
          CHECK((o == 0.0f || o == 1.0f));
          if (o == 0.0f) CHECK(a.color(0, x, y, z) == 0.0f);
        }
  }
}

TEST_CASE("OBJ writer output reloads with the same geometry") {
  auvtest::TempDir dir("objw");
  ObjWriteSpec spec;
  spec.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(1, 1, 0.5)};
  spec.uvs = {Vec2(0, 0), Vec2(1, 0), Vec2(0, 1), Vec2(1, 1)};
  spec.triangles = {Tri{0, 1, 2}, Tri{1, 3, 2}};
  spec.face_material = {0, 1};
  spec.material_names = {"a", "b"};
  spec.texture_files = {"a.png", "b.png"};
  write_png(dir / "a.png", Image(2, 2, 3, 0.5f));
  write_png(dir / "b.png", Image(2, 2, 3, 1.0f));
  write_obj(dir / "x.obj", spec);
  const TexturedMesh m = load_textured_mesh(dir / "x.obj");
  REQUIRE(m.vertices.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK((m.vertices[i] - spec.vertices[i]).norm() < 1e-9);
  CHECK(m.triangles == spec.triangles);
  CHECK(m.material_ids == std::vector<int>{0, 1});
  CHECK(m.texture_for_face(1)->at(0, 0, 0) == 1.0f);
}

TEST_CASE("PNG round trip is exact after 8-bit quantization") {
  auvtest::TempDir dir("png");
  Rng rng(8);
  Image img(5, 3, 3);
  for (float& v : img.data) v = static_cast<float>(rng.uniform());
  write_png(dir / "a.png", img);
  const Image back = read_png(dir / "a.png");
  REQUIRE(back.width == 5);
  REQUIRE(back.channels == 3);
  for (std::size_t i = 0; i < img.data.size(); ++i) CHECK(back.data[i] == quantize_srgb8(img.data[i]));
  for (float v : {0.0f, 0.01f, 0.5f, 1.0f}) CHECK(srgb_to_linear(linear_to_srgb(v)) == doctest::Approx(v).epsilon(1e-6));
}
