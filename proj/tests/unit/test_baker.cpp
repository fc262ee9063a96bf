#include <doctest.h>

#include <cmath>
#include <cstring>
#include <iostream>
#include <sstream>

#include "auv/baker.hpp"
#include "auv/errors.hpp"
#include "auv/rng.hpp"
#include "tempdir.hpp"

using namespace auv;

namespace {

PointMapping mapping_of(const std::vector<Vec2>& uv, const std::vector<int>& route, int K) {
  const int n = static_cast<int>(uv.size());
  PointMapping m{Tensor<float>({n, 2}), Tensor<float>({n, K})};
  for (int i = 0; i < n; ++i) {
    m.uv.at(i, 0) = static_cast<float>(uv[i].x());
    m.uv.at(i, 1) = static_cast<float>(uv[i].y());
    for (int k = 0; k < K; ++k) m.masks.at(i, k) = k == route[i] ? 0.9f : 0.1f / static_cast<float>(K);
  }
  return m;
}

Tensor<float> colors_of(const std::vector<Vec3>& c) {
  Tensor<float> t({static_cast<int>(c.size()), 3});
  for (int i = 0; i < static_cast<int>(c.size()); ++i)
    for (int ch = 0; ch < 3; ++ch) t.at(i, ch) = static_cast<float>(c[i][ch]);
  return t;
}

Vec3 ramp(double x, double y) { return Vec3(0.2 + 0.6 * x / 63.0, 0.3 + 0.5 * y / 63.0, 0.5 + 0.2 * (x + y) / 126.0); }

Image ramp_image(int S) {
  Image img(S, S, 3);
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<float>(ramp(x, y)[c]);
  return img;
}

std::vector<std::uint8_t> disk_validity(int S, double cx, double cy, double r) {
  std::vector<std::uint8_t> v(static_cast<std::size_t>(S) * S, 1);
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x)
      if (std::hypot(x - cx, y - cy) <= r) v[static_cast<std::size_t>(y) * S + x] = 0;
  return v;
}

TexturedExport quad_export(int K) {
  TexturedExport ex;
  ex.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 1, 0), Vec3(0, 1, 0)};
  ex.triangles = {Tri{0, 1, 2}, Tri{0, 2, 3}};
  ex.uvs = {Vec2(0.1, 0.1), Vec2(0.9, 0.1), Vec2(0.9, 0.9), Vec2(0.1, 0.9)};
  ex.face_texture = {0, K - 1};
  ex.resolution = 8;
  Rng rng(3);
  for (int k = 0; k < K; ++k) {
    Image t(8, 8, 3);
    for (float& v : t.data) v = static_cast<float>(rng.uniform());
    ex.textures.push_back(t);
  }
  return ex;
}

}  // namespace

TEST_CASE("uv to texel uses the clamped 0.55 window") {
  CHECK(uv_to_texel(0.0, 256) == 128);
  CHECK(uv_to_texel(-0.55, 256) == 0);
  CHECK(uv_to_texel(0.55, 256) == 255);
  CHECK(uv_to_texel(-3.0, 256) == 0);
  CHECK(uv_to_texel(3.0, 256) == 255);
  for (int i = 0; i < 64; ++i) CHECK(uv_to_texel(texel_to_uv(i, 64), 64) == i);
  const Vec2 a = uv_to_atlas(-0.55, -0.55);
  CHECK(a.x() == doctest::Approx(0.0));
  CHECK(a.y() == doctest::Approx(1.0));
}

TEST_CASE("one sample at the origin fills texel (128,128) and nothing else") {
  const Vec3 c(0.1, 0.7, 0.4);
  const auto tex = bake_samples(mapping_of({Vec2(0, 0)}, {0}, 1), colors_of({c}), 256);
  REQUIRE(tex.size() == 1);
  CHECK(tex[0].valid_count() == 1);
  CHECK(tex[0].valid(128, 128));
  for (int ch = 0; ch < 3; ++ch) CHECK(tex[0].color.at(128, 128, ch) == doctest::Approx(c[ch]).epsilon(1e-6));
}

TEST_CASE("samples sharing a texel average their colors") {
  const auto tex =
      bake_samples(mapping_of({Vec2(0.001, 0.001), Vec2(0.002, 0.002)}, {0, 0}, 1),
                   colors_of({Vec3(0.2, 0.2, 0.2), Vec3(0.4, 0.4, 0.4)}), 256);
  CHECK(tex[0].valid_count() == 1);
  CHECK(tex[0].count[128 * 256 + 128] == 2);
  CHECK(tex[0].color.at(128, 128, 0) == doctest::Approx(0.3).epsilon(1e-6));
}

TEST_CASE("a generator that receives no samples is all invalid and warned about") {
  std::ostringstream captured;
  std::streambuf* old = std::cerr.rdbuf(captured.rdbuf());
  const auto tex = bake_samples(mapping_of({Vec2(0, 0), Vec2(0.1, 0)}, {0, 0}, 2),
                                colors_of({Vec3(1, 0, 0), Vec3(0, 1, 0)}), 16);
  std::cerr.rdbuf(old);
  REQUIRE(tex.size() == 2);
  CHECK(tex[0].valid_count() == 2);
  CHECK(tex[1].valid_count() == 0);
  CHECK(captured.str().find("generator 1") != std::string::npos);
}

TEST_CASE("samples route to their argmax generator") {
  const auto tex = bake_samples(mapping_of({Vec2(0, 0), Vec2(0.2, 0.2), Vec2(-0.2, 0.1)}, {1, 0, 1}, 2),
                                colors_of({Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)}), 32);
  CHECK(tex[0].valid_count() == 1);
  CHECK(tex[1].valid_count() == 2);
  for (const TextureImage& t : tex)
    for (std::size_t i = 0; i < t.count.size(); ++i) CHECK((t.validity()[i] != 0) == (t.count[i] >= 1));
}

TEST_CASE("a planar patch with identity UV bakes back its source texture") {
  auto source = [](double u, double v) {
    return Vec3(0.5 + 0.3 * std::sin(6 * u), 0.5 + 0.3 * std::cos(5 * v), 0.4 + 0.2 * u * v);
  };
  Rng rng(9);
  const int n = 200000;
  std::vector<Vec2> uv(n);
  std::vector<Vec3> col(n);
  for (int i = 0; i < n; ++i) {
    uv[i] = Vec2(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
    col[i] = source(uv[i].x(), uv[i].y());
  }
  const int R = 64;
  const auto tex = bake_samples(mapping_of(uv, std::vector<int>(n, 0), 1), colors_of(col), R);
  double se = 0;
  int cnt = 0;
  for (int y = 0; y < R; ++y)
    for (int x = 0; x < R; ++x) {
      if (!tex[0].valid(x, y)) continue;
      const Vec3 ref = source(texel_to_uv(x, R), texel_to_uv(y, R));
      for (int c = 0; c < 3; ++c) se += std::pow(tex[0].color.at(x, y, c) - ref[c], 2);
      cnt += 3;
    }
  REQUIRE(cnt > 0);
  CHECK(10 * std::log10(cnt / se) > 35.0);
}

TEST_CASE("baking then sampling at the sample UVs reproduces colors within a texel") {
  const double gx = 0.8, gy = -0.5;  // per-unit-UV color slopes
  auto color = [&](const Vec2& q) { return Vec3(0.5 + gx * q.x() * 0.5, 0.5 + gy * q.y() * 0.5, 0.3); };
  Rng rng(12);
  const int n = 5000, R = 128;
  std::vector<Vec2> uv(n);
  std::vector<Vec3> col(n);
  for (int i = 0; i < n; ++i) {
    uv[i] = Vec2(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
    col[i] = color(uv[i]);
  }
  const auto tex = bake_samples(mapping_of(uv, std::vector<int>(n, 0), 1), colors_of(col), R);
  const double texel = 2 * kUvWindow / R;
  const double bound = 0.5 * std::max(std::abs(gx), std::abs(gy)) * texel + 1e-6;
  for (int i = 0; i < n; ++i) {
    const int x = uv_to_texel(uv[i].x(), R), y = uv_to_texel(uv[i].y(), R);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(tex[0].color.at(x, y, c) - col[i][c]) <= bound);
  }
}

TEST_CASE("inpainting an all-valid image is the identity") {
  Rng rng(4);
  Image img(17, 13, 3);
  for (float& v : img.data) v = static_cast<float>(rng.uniform());
  const Image out = inpaint_fmm(img, std::vector<std::uint8_t>(17 * 13, 1));
  CHECK(out == img);
}

TEST_CASE("inpainting never touches valid texels") {
  Rng rng(5);
  Image img(40, 40, 3);
  for (float& v : img.data) v = static_cast<float>(rng.uniform());
  std::vector<std::uint8_t> valid(40 * 40);
  for (auto& v : valid) v = rng.uniform() < 0.6 ? 1 : 0;
  const Image out = inpaint_fmm(img, valid);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x) {
      if (!valid[y * 40 + x]) continue;
      for (int c = 0; c < 3; ++c) {
        const std::size_t i = (static_cast<std::size_t>(y) * 40 + x) * 3 + c;
        CHECK(std::memcmp(&out.data[i], &img.data[i], sizeof(float)) == 0);
      }
    }
  for (float v : out.data) CHECK(std::isfinite(v));
}

TEST_CASE("a single hole in a constant region takes that color") {
  Image img(9, 9, 3);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x) {
      img.at(x, y, 0) = 0.25f;
      img.at(x, y, 1) = 0.5f;
      img.at(x, y, 2) = 0.75f;
    }
  std::vector<std::uint8_t> valid(81, 1);
  valid[4 * 9 + 4] = 0;
  img.at(4, 4, 0) = img.at(4, 4, 1) = img.at(4, 4, 2) = 0.0f;
  const Image out = inpaint_fmm(img, valid);
  CHECK(std::abs(out.at(4, 4, 0) - 0.25) <= 1e-6);
  CHECK(std::abs(out.at(4, 4, 1) - 0.5) <= 1e-6);
  CHECK(std::abs(out.at(4, 4, 2) - 0.75) <= 1e-6);
}

TEST_CASE("a disk hole in a linear ramp is filled within 5% of the ramp") {
  const int S = 64;
  Image img = ramp_image(S);
  const auto valid = disk_validity(S, 31.5, 31.5, 10.0);
  for (int i = 0; i < S * S; ++i)
    if (!valid[i])
      for (int c = 0; c < 3; ++c) img.data[static_cast<std::size_t>(i) * 3 + c] = 0.0f;
  const Image out = inpaint_fmm(img, valid);
  double worst = 0;
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      if (valid[y * S + x]) continue;
      const Vec3 r = ramp(x, y);
      for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(out.at(x, y, c) - r[c]) / r[c]);
    }
  CHECK(worst < 0.05);
}

TEST_CASE("inpainting a fully invalid image is a data error") {
  Image img(4, 4, 3);
  CHECK_THROWS_AS(inpaint_fmm(img, std::vector<std::uint8_t>(16, 0)), DataError);
  CHECK_THROWS_AS(inpaint_fmm(img, std::vector<std::uint8_t>(15, 1)), Error);
}

TEST_CASE("face votes pick the majority route and count seams") {
  Rng rng(21);
  const int V = 200, F = 500, K = 2;
  std::vector<int> route(V);
  for (int& r : route) r = static_cast<int>(rng.below(K));
  std::vector<Tri> tris(F);
  for (Tri& t : tris)
    for (int& v : t) v = static_cast<int>(rng.below(V));
  int seams = -1;
  const auto faces = vote_face_textures(tris, route, K, &seams);
  int recount = 0;
  for (int f = 0; f < F; ++f) {
    int ones = 0;
    for (int v : tris[f]) ones += route[v];
    if (ones != 0 && ones != 3) ++recount;
    CHECK(faces[f] == (ones >= 2 ? 1 : 0));
  }
  CHECK(seams == recount);

  std::vector<int> front(V, 0);
  const auto all0 = vote_face_textures(tris, front, K, &seams);
  CHECK(seams == 0);
  for (int f : all0) CHECK(f == 0);
}

TEST_CASE("three-way votes break ties toward the lower texture") {
  int seams = 0;
  const auto f = vote_face_textures({Tri{0, 1, 2}}, {2, 1, 0}, 3, &seams);
  CHECK(f[0] == 0);
  CHECK(seams == 1);
}

TEST_CASE("export round trip reproduces texel colors after 8-bit quantization") {
  const TexturedExport ex = quad_export(2);
  auvtest::TempDir dir("export");
  write_export(dir.path(), "quad", ex);
  for (const char* f : {"quad.obj", "quad.mtl", "quad_tex0.png", "quad_tex1.png", "quad.json"})
    CHECK(std::filesystem::exists(dir / f));
  const TexturedExport back = load_export(dir.path(), "quad");
  CHECK(back.vertices == ex.vertices);
  CHECK(back.triangles == ex.triangles);
  CHECK(back.face_texture == ex.face_texture);
  CHECK(back.resolution == 8);
  for (std::size_t i = 0; i < ex.uvs.size(); ++i) CHECK((back.uvs[i] - ex.uvs[i]).norm() < 1e-8);
  REQUIRE(back.texture_count() == 2);
  for (int k = 0; k < 2; ++k) {
    const Image& t = back.textures[k];
    REQUIRE(t.width == 8);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        float s[3];
        sample_uv(t, (x + 0.5) / 8.0, 1.0 - (y + 0.5) / 8.0, s);
        for (int c = 0; c < 3; ++c) {
          CHECK(t.at(x, y, c) == quantize_srgb8(ex.textures[k].at(x, y, c)));
          CHECK(s[c] == t.at(x, y, c));
        }
      }
  }
}

TEST_CASE("export validation rejects bad face indices and UVs") {
  TexturedExport ex = quad_export(1);
  ex.face_texture[1] = 1;
  CHECK_THROWS_AS(ex.validate(), DataError);
  ex = quad_export(1);
  ex.uvs[0] = Vec2(1.5, 0.2);
  CHECK_THROWS_AS(ex.validate(), DataError);
  auvtest::TempDir dir("export_missing");
  CHECK_THROWS_AS(load_export(dir.path(), "nothing"), IoError);
}

TEST_CASE("texture transfer swaps rasters and nothing else") {
  const TexturedExport a = quad_export(2);
  TexturedExport b = quad_export(2);
  for (Image& t : b.textures)
    for (float& v : t.data) v = 1.0f - v;

  const TexturedExport same = transfer_texture(a, a.textures);
  CHECK(same.textures == a.textures);
  CHECK(same.geometry_hash() == a.geometry_hash());
  CHECK(same.seam_faces == a.seam_faces);

  const TexturedExport ab = transfer_texture(a, b.textures);
  CHECK(ab.textures == b.textures);
  CHECK(ab.geometry_hash() == a.geometry_hash());
  const TexturedExport back = transfer_texture(ab, a.textures);
  CHECK(back.textures == a.textures);
  CHECK(back.geometry_hash() == a.geometry_hash());

  CHECK_THROWS_AS(transfer_texture(a, {a.textures[0]}), ConfigError);
}

TEST_CASE("make_export with a single generator puts every face on texture 0") {
  ModelConfig c;
  c.code_dim = 4;
  c.generators = {GeneratorSpec{3, 8}};
  c.basis_depth = 2;
  c.uv_width = c.mask_width = 8;
  c.uv_depth = c.mask_depth = 2;
  c.encoder_channels = 2;
  c.input_resolution = 16;
  c.category = "car";
  AuvModel<float> model(c);
  TexturedMesh mesh;
  mesh.vertices = {Vec3(-1, -1, -1), Vec3(1, -1, -1), Vec3(1, 1, -1), Vec3(-1, 1, -1), Vec3(0, 0, 1)};
  mesh.triangles = {Tri{0, 2, 1}, Tri{0, 3, 2}, Tri{0, 1, 4}, Tri{1, 2, 4}, Tri{2, 3, 4}, Tri{3, 0, 4}};
  ShapeData shape;
  shape.grid = Tensor<float>({4, 16, 16, 16});
  const TexturedExport ex = make_export(model, mesh, shape, {Image(8, 8, 3, 0.5f)});
  CHECK(ex.seam_faces == 0);
  for (int f : ex.face_texture) CHECK(f == 0);
  for (const Vec2& t : ex.uvs) {
    CHECK(t.x() >= 0.0);
    CHECK(t.x() <= 1.0);
    CHECK(t.y() >= 0.0);
    CHECK(t.y() <= 1.0);
  }
  CHECK_THROWS_AS(make_export(model, mesh, shape, {}), ConfigError);
}
