#include "auv/synthdata.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numbers>

#include "auv/checkpoint.hpp"
#include "auv/errors.hpp"
#include "auv/rng.hpp"

namespace auv {
namespace {

constexpr double kPi = std::numbers::pi;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

Vec3 lerp(const Vec3& a, const Vec3& b, double t) { return a + (b - a) * t; }

Vec3 random_color(Rng& rng, double lo, double hi) {
  return Vec3(rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi));
}

// Canonical face layout in unit image coordinates (x right, y down).
struct FaceLayout {
  Vec2 hair_center{0.5, 0.44};
  Vec2 hair_radii{0.40, 0.42};
  Vec2 face_center{0.5, 0.56};
  Vec2 face_radii{0.28, 0.33};
  Vec2 left_eye{0.385, 0.50};
  Vec2 right_eye{0.615, 0.50};
  double eye_radius = 0.06;
  Vec2 mouth_center{0.5, 0.71};
  Vec2 mouth_radii{0.11, 0.045};
};

// Soft coverage of an axis-aligned ellipse; `soft` is the edge width in pixels.
double ellipse_alpha(const Vec2& p, const Vec2& c, const Vec2& r, int size, double soft) {
  const double q = std::hypot((p.x() - c.x()) / r.x(), (p.y() - c.y()) / r.y());
  const double dist_px = (q - 1.0) * std::min(r.x(), r.y()) * size;
  return sigmoid(-dist_px / soft);
}

}  // namespace

ToyImage make_face_image(std::uint64_t seed, int size, double layout_jitter) {
  if (size < 16 || size > 512) throw Error(ErrorKind::InvalidArgument, "make_face_image: size must be in [16, 512]");
  if (!(layout_jitter >= 0.0 && layout_jitter <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "make_face_image: layout_jitter must be in [0, 1]");
  }
  Rng rng(seed, 0xFACE);
  FaceLayout L;
  if (layout_jitter > 0.0) {
    Rng jr(seed, 0x1A70);
    auto j = [&](double amp) { return jr.uniform(-amp, amp) * layout_jitter; };
    L.hair_radii = L.hair_radii.cwiseProduct(Vec2(1 + j(0.08), 1 + j(0.08)));
    L.face_center += Vec2(j(0.02), j(0.02));
    L.face_radii = L.face_radii.cwiseProduct(Vec2(1 + j(0.1), 1 + j(0.1)));
    const Vec2 eye_shift(j(0.03), j(0.03));
    const double eye_spread = j(0.03);
    L.left_eye += eye_shift - Vec2(eye_spread, 0);
    L.right_eye += eye_shift + Vec2(eye_spread, 0);
    L.eye_radius *= 1 + j(0.2);
    L.mouth_center += Vec2(j(0.02), j(0.03));
    L.mouth_radii = L.mouth_radii.cwiseProduct(Vec2(1 + j(0.2), 1 + j(0.2)));
  }
  const Vec3 bg = random_color(rng, 0.15, 0.85);
  const Vec3 hair = hair_palette(static_cast<int>(rng.below(kHairPaletteSize))) +
                    Vec3(rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03));
  const double tone = rng.uniform(0.25, 0.95);
  const Vec3 skin = Vec3(tone, tone * rng.uniform(0.62, 0.8), tone * rng.uniform(0.45, 0.65));
  const Vec3 eyes = Vec3(rng.uniform(0.0, 0.25), rng.uniform(0.05, 0.45), rng.uniform(0.15, 0.7));
  const Vec3 mouth = Vec3(rng.uniform(0.55, 0.9), rng.uniform(0.05, 0.2), rng.uniform(0.08, 0.25));

  ToyImage out;
  out.seed = seed;
  out.background = bg;
  out.eye_color = eyes;
  out.mouth_color = mouth;
  out.image = Image(size, size, 3);
  const double soft = 0.7;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const Vec2 p((x + 0.5) / size, (y + 0.5) / size);
      Vec3 c = bg;
      c = lerp(c, hair, ellipse_alpha(p, L.hair_center, L.hair_radii, size, soft));
      c = lerp(c, skin, ellipse_alpha(p, L.face_center, L.face_radii, size, soft));
      const Vec2 er(L.eye_radius, L.eye_radius);
      c = lerp(c, eyes, ellipse_alpha(p, L.left_eye, er, size, soft));
      c = lerp(c, eyes, ellipse_alpha(p, L.right_eye, er, size, soft));
      c = lerp(c, mouth, ellipse_alpha(p, L.mouth_center, L.mouth_radii, size, soft));
      for (int k = 0; k < 3; ++k) out.image.at(x, y, k) = static_cast<float>(std::clamp(c[k], 0.0, 1.0));
    }
  }
  auto to_px = [size](const Vec2& u) { return Vec2(u.x() * size - 0.5, u.y() * size - 0.5); };
  out.canonical_landmarks = {to_px(L.left_eye), to_px(L.right_eye), to_px(L.mouth_center)};
  out.landmarks = out.canonical_landmarks;
  return out;
}

Mat3 homography_from_corners(const std::array<Vec2, 4>& src, const std::array<Vec2, 4>& dst) {
  Eigen::Matrix<double, 8, 8> A;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const double x = src[static_cast<std::size_t>(i)].x(), y = src[static_cast<std::size_t>(i)].y();
    const double u = dst[static_cast<std::size_t>(i)].x(), v = dst[static_cast<std::size_t>(i)].y();
    A.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    A.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b(2 * i) = u;
    b(2 * i + 1) = v;
  }
  const Eigen::Matrix<double, 8, 1> h = A.fullPivLu().solve(b);
  Mat3 H;
  H << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  if (!H.allFinite() || std::abs(H.determinant()) <= 1e-6) {
    throw NumericalError("homography_from_corners: degenerate correspondence");
  }
  return H;
}

Mat3 random_homography(std::uint64_t seed, double max_corner_shift, int size) {
  if (!(max_corner_shift >= 0.0 && max_corner_shift <= 0.25)) {
    throw Error(ErrorKind::InvalidArgument, "random_homography: max_corner_shift must be in [0, 0.25]");
  }
  Rng rng(seed, 0x4803);
  const double s = size - 1.0;
  const std::array<Vec2, 4> src = {Vec2(0, 0), Vec2(s, 0), Vec2(s, s), Vec2(0, s)};
  std::array<Vec2, 4> dst = src;
  const double amp = max_corner_shift * s;
  for (Vec2& d : dst) d += Vec2(rng.uniform(-amp, amp), rng.uniform(-amp, amp));
  return homography_from_corners(src, dst);
}

Vec2 apply_homography(const Mat3& h, const Vec2& p) {
  const Eigen::Vector3d q = h * Eigen::Vector3d(p.x(), p.y(), 1.0);
  return Vec2(q.x() / q.z(), q.y() / q.z());
}

ToyImage warp_image(const ToyImage& img, const Mat3& h) {
  if (!h.allFinite() || std::abs(h.determinant()) <= 1e-12) {
    throw NumericalError("warp_image: homography is not invertible");
  }
  const Mat3 inv = h.inverse();
  ToyImage out = img;
  const int W = img.image.width, H = img.image.height, C = img.image.channels;
  float px[4];
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const Vec2 s = apply_homography(inv, Vec2(x, y));
      const bool inside = s.allFinite() && s.x() >= -0.5 && s.x() <= W - 0.5 && s.y() >= -0.5 && s.y() <= H - 0.5;
      if (inside) {
        sample_bilinear(img.image, s.x(), s.y(), px);
        for (int c = 0; c < C; ++c) out.image.at(x, y, c) = px[c];
      } else {
        for (int c = 0; c < C; ++c) out.image.at(x, y, c) = static_cast<float>(img.background[std::min(c, 2)]);
      }
    }
  }
  out.homography = h * img.homography;
  for (std::size_t i = 0; i < out.landmarks.size(); ++i) {
    out.landmarks[i] = apply_homography(out.homography, img.canonical_landmarks[i]);
  }
  return out;
}

Vec3 hair_palette(int index) {
  // Natural shades plus a few dyed ones; no blue/green so eye patches stay
  // distinguishable from hair.
  static const double kPalette[kHairPaletteSize][3] = {
      {0.02, 0.02, 0.02}, {0.05, 0.03, 0.02}, {0.09, 0.05, 0.03}, {0.14, 0.08, 0.04}, {0.20, 0.11, 0.05},
      {0.27, 0.15, 0.07}, {0.35, 0.20, 0.09}, {0.45, 0.28, 0.12}, {0.55, 0.38, 0.18}, {0.66, 0.50, 0.25},
      {0.78, 0.63, 0.35}, {0.88, 0.76, 0.48}, {0.93, 0.85, 0.62}, {0.40, 0.10, 0.03}, {0.55, 0.15, 0.04},
      {0.70, 0.22, 0.06}, {0.30, 0.30, 0.30}, {0.45, 0.45, 0.45}, {0.60, 0.60, 0.60}, {0.75, 0.75, 0.74},
      {0.90, 0.90, 0.88}, {0.60, 0.10, 0.30}, {0.80, 0.30, 0.50}, {0.45, 0.12, 0.45}, {0.25, 0.05, 0.25},
      {0.12, 0.06, 0.06}, {0.32, 0.22, 0.18}, {0.50, 0.32, 0.22}, {0.65, 0.42, 0.30}, {0.20, 0.16, 0.12},
      {0.85, 0.55, 0.20}, {0.50, 0.05, 0.10},
  };
  const auto& c = kPalette[((index % kHairPaletteSize) + kHairPaletteSize) % kHairPaletteSize];
  return Vec3(c[0], c[1], c[2]);
}

namespace {

struct HeadParams {
  Vec3 radii;
  double nose_amp;
  Vec3 nose_dir;
  double hairline_front;
  double eye_theta[2], eye_phi[2];
  double mouth_theta, mouth_phi;
  double eye_radius;
  Vec3 skin, hair, eyes, mouth;
  int hair_index;
};

constexpr double kNeckTheta = 0.80 * kPi;

Vec3 sphere_dir(double theta, double phi) {
  return Vec3(std::sin(theta) * std::sin(phi), std::cos(theta), std::sin(theta) * std::cos(phi));
}

Vec3 head_position(const HeadParams& hp, double theta, double phi) {
  const Vec3 d = sphere_dir(theta, phi);
  Vec3 p(hp.radii.x() * d.x(), hp.radii.y() * d.y(), hp.radii.z() * d.z());
  const double neck = smoothstep((theta - 0.66 * kPi) / (0.16 * kPi));
  p.x() *= 1.0 - 0.45 * neck;
  p.z() *= 1.0 - 0.45 * neck;
  p.y() *= 1.0 + 0.2 * neck;
  const double ang = std::acos(std::clamp(d.dot(hp.nose_dir), -1.0, 1.0));
  p *= 1.0 + hp.nose_amp * std::exp(-(ang / 0.13) * (ang / 0.13));
  return p;
}

int head_label(const HeadParams& hp, double theta, double phi) {
  if (theta > kNeckTheta) return kNeck;
  const double w = std::pow(0.5 * (1.0 - std::cos(phi)), 0.7);
  const double hairline = hp.hairline_front + (kNeckTheta - hp.hairline_front) * w;
  return theta < hairline ? kScalp : kFace;
}

double angular_distance(double t0, double p0, double t1, double p1) {
  return std::acos(std::clamp(sphere_dir(t0, p0).dot(sphere_dir(t1, p1)), -1.0, 1.0));
}

Vec3 head_color(const HeadParams& hp, double theta, double phi) {
  const int label = head_label(hp, theta, phi);
  Vec3 c = label == kScalp ? hp.hair : (label == kNeck ? Vec3(hp.skin * 0.85) : hp.skin);
  const double soft = 0.006 * kPi;
  for (int e = 0; e < 2; ++e) {
    const double d = angular_distance(theta, phi, hp.eye_theta[e], hp.eye_phi[e]);
    c = lerp(c, hp.eyes, sigmoid((hp.eye_radius - d) / soft));
  }
  // Mouth: ellipse in (phi, theta) around its centre.
  const double q = std::hypot((phi - hp.mouth_phi) / (0.10 * kPi), (theta - hp.mouth_theta) / (0.03 * kPi));
  c = lerp(c, hp.mouth, sigmoid((1.0 - q) * 0.03 * kPi / soft));
  return c;
}

}  // namespace

SyntheticHead make_head_mesh(std::uint64_t seed, const HeadOptions& opt) {
  if (opt.longitude_segments < 8 || opt.latitude_segments < 4) {
    throw Error(ErrorKind::InvalidArgument, "make_head_mesh: tessellation too coarse");
  }
  Rng rng(seed, 0x4EAD);
  HeadParams hp{};
  hp.radii = Vec3(rng.uniform(0.80, 0.95), rng.uniform(1.00, 1.15), rng.uniform(0.90, 1.05));
  hp.nose_amp = rng.uniform(0.06, 0.12);
  hp.nose_dir = sphere_dir(0.53 * kPi, 0.0);
  hp.hairline_front = (0.30 + rng.uniform(-0.03, 0.03)) * kPi;
  const double eye_theta = (0.47 + rng.uniform(-0.025, 0.025)) * kPi;
  const double eye_phi = (0.16 + rng.uniform(-0.02, 0.02)) * kPi;
  for (int e = 0; e < 2; ++e) {
    hp.eye_theta[e] = eye_theta + rng.uniform(-0.005, 0.005) * kPi;
    hp.eye_phi[e] = (e == 0 ? -1.0 : 1.0) * (eye_phi + rng.uniform(-0.005, 0.005) * kPi);
  }
  hp.mouth_theta = (0.645 + rng.uniform(-0.02, 0.02)) * kPi;
  hp.mouth_phi = rng.uniform(-0.01, 0.01) * kPi;
  hp.eye_radius = 0.045 * kPi;
  const double tone = rng.uniform(0.35, 0.9);
  hp.skin = Vec3(tone, tone * rng.uniform(0.62, 0.78), tone * rng.uniform(0.45, 0.6));
  hp.hair_index = static_cast<int>(rng.below(kHairPaletteSize));
  hp.hair = hair_palette(hp.hair_index);
  static const double kEyes[4][3] = {{0.10, 0.35, 0.90}, {0.10, 0.75, 0.30}, {0.05, 0.65, 0.75}, {0.30, 0.20, 0.85}};
  const auto& ec = kEyes[rng.below(4)];
  hp.eyes = Vec3(ec[0], ec[1], ec[2]) + Vec3(rng.uniform(-0.04, 0.04), rng.uniform(-0.04, 0.04), rng.uniform(-0.04, 0.04));
  hp.mouth = Vec3(rng.uniform(0.6, 0.85), rng.uniform(0.08, 0.18), rng.uniform(0.1, 0.2));

  const int nl = opt.longitude_segments, nt = opt.latitude_segments;
  SyntheticHead head;
  head.seed = seed;
  head.skin_color = hp.skin;
  head.hair_color = hp.hair;
  head.eye_color = hp.eyes;
  head.hair_palette_index = hp.hair_index;
  TexturedMesh& m = head.mesh;

  auto theta_of = [nt](int j) { return kPi * j / nt; };
  auto phi_of = [nl](int i) { return 2.0 * kPi * (static_cast<double>(i) / nl - 0.5); };
  auto vid = [nl, nt](int i, int j) {
    if (j == 0) return 0;
    if (j == nt) return 1 + (nt - 1) * nl;
    return 1 + (j - 1) * nl + ((i % nl) + nl) % nl;
  };
  auto uvid = [nl](int i, int j) { return j * (nl + 1) + i; };

  m.vertices.resize(static_cast<std::size_t>(2 + (nt - 1) * nl));
  head.vertex_labels.resize(m.vertices.size());
  m.vertices[0] = head_position(hp, 0.0, 0.0);
  head.vertex_labels[0] = head_label(hp, 0.0, 0.0);
  for (int j = 1; j < nt; ++j)
    for (int i = 0; i < nl; ++i) {
      const auto v = static_cast<std::size_t>(vid(i, j));
      m.vertices[v] = head_position(hp, theta_of(j), phi_of(i));
      head.vertex_labels[v] = head_label(hp, theta_of(j), phi_of(i));
    }
  m.vertices.back() = head_position(hp, kPi, 0.0);
  head.vertex_labels.back() = head_label(hp, kPi, 0.0);

  for (int j = 0; j <= nt; ++j)
    for (int i = 0; i <= nl; ++i) m.uvs.emplace_back(static_cast<double>(i) / nl, 1.0 - static_cast<double>(j) / nt);

  for (int j = 0; j < nt; ++j)
    for (int i = 0; i < nl; ++i) {
      const int a = vid(i, j), b = vid(i + 1, j), c = vid(i, j + 1), d = vid(i + 1, j + 1);
      const int ta = uvid(i, j), tb = uvid(i + 1, j), tc = uvid(i, j + 1), td = uvid(i + 1, j + 1);
      if (j != 0) {
        m.triangles.push_back({a, c, b});
        m.uv_triangles.push_back({ta, tc, tb});
      }
      if (j != nt - 1) {
        m.triangles.push_back({b, c, d});
        m.uv_triangles.push_back({tb, tc, td});
      }
    }
  m.material_ids.assign(m.triangles.size(), 0);
  m.material_names = {"head"};

  Image tex(opt.texture_width, opt.texture_height, 3);
  for (int y = 0; y < tex.height; ++y)
    for (int x = 0; x < tex.width; ++x) {
      const double u = (x + 0.5) / tex.width;
      const double v = 1.0 - (y + 0.5) / tex.height;
      const Vec3 c = head_color(hp, kPi * (1.0 - v), 2.0 * kPi * (u - 0.5));
      for (int k = 0; k < 3; ++k) tex.at(x, y, k) = static_cast<float>(std::clamp(c[k], 0.0, 1.0));
    }
  m.material_textures = {tex};
  m.texture = std::move(tex);

  // Landmarks: the mesh point at the given parameter, via the triangle of the
  // parameter grid that contains it.
  auto on_mesh = [&](double theta, double phi) {
    const double fj = theta / kPi * nt;
    const double fi = (phi / (2.0 * kPi) + 0.5) * nl;
    const int j = std::clamp(static_cast<int>(std::floor(fj)), 0, nt - 1);
    const int i = std::clamp(static_cast<int>(std::floor(fi)), 0, nl - 1);
    const double s = fi - i, t = fj - j;
    const Vec3& A = m.vertices[static_cast<std::size_t>(vid(i, j))];
    const Vec3& B = m.vertices[static_cast<std::size_t>(vid(i + 1, j))];
    const Vec3& C = m.vertices[static_cast<std::size_t>(vid(i, j + 1))];
    const Vec3& D = m.vertices[static_cast<std::size_t>(vid(i + 1, j + 1))];
    if (s + t <= 1.0) return Vec3((1.0 - s - t) * A + s * B + t * C);
    return Vec3((s + t - 1.0) * D + (1.0 - t) * B + (1.0 - s) * C);
  };
  head.landmarks = {on_mesh(hp.eye_theta[0], hp.eye_phi[0]), on_mesh(hp.eye_theta[1], hp.eye_phi[1]),
                    on_mesh(hp.mouth_theta, hp.mouth_phi)};
  const Vec3 tip = head_position(hp, 0.53 * kPi, 0.0);
  head.nose_direction = tip.normalized();
  return head;
}

namespace {

using Json = nlohmann::json;

Json vec_json(const Eigen::VectorXd& v) {
  Json j = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

template <int D>
Eigen::Matrix<double, D, 1> json_vec(const Json& j) {
  if (!j.is_array() || j.size() != D) throw DataError("sidecar: expected a " + std::to_string(D) + "-vector");
  Eigen::Matrix<double, D, 1> v;
  for (int i = 0; i < D; ++i) v[i] = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw DataError("'" + path.string() + "': " + e.what());
  }
}

}  // namespace

void save_toy_image(const std::filesystem::path& dir, const std::string& name, const ToyImage& img) {
  std::filesystem::create_directories(dir);
  write_png(dir / (name + ".png"), img.image);
  Json j;
  j["seed"] = img.seed;
  j["size"] = img.image.width;
  Json h = Json::array();
  for (int r = 0; r < 3; ++r) h.push_back(vec_json(img.homography.row(r).transpose()));
  j["homography"] = h;
  Json lm = Json::array(), cl = Json::array();
  for (std::size_t l = 0; l < img.landmarks.size(); ++l) {
    lm.push_back(vec_json(img.landmarks[l]));
    cl.push_back(vec_json(img.canonical_landmarks[l]));
  }
  j["landmarks"] = lm;
  j["canonical_landmarks"] = cl;
  j["background"] = vec_json(img.background);
  j["eye_color"] = vec_json(img.eye_color);
  j["mouth_color"] = vec_json(img.mouth_color);
  write_text_atomic(dir / (name + ".json"), j.dump(2) + "\n");
}

ToyImage load_toy_image(const std::filesystem::path& dir, const std::string& name) {
  const Json j = read_json(dir / (name + ".json"));
  ToyImage img;
  try {
    img.image = read_png(dir / (name + ".png"));
    img.seed = j.at("seed").get<std::uint64_t>();
    for (int r = 0; r < 3; ++r) img.homography.row(r) = json_vec<3>(j.at("homography").at(r)).transpose();
    for (std::size_t l = 0; l < img.landmarks.size(); ++l) {
      img.landmarks[l] = json_vec<2>(j.at("landmarks").at(l));
      img.canonical_landmarks[l] = json_vec<2>(j.at("canonical_landmarks").at(l));
    }
    img.background = json_vec<3>(j.at("background"));
    if (j.contains("eye_color")) img.eye_color = json_vec<3>(j.at("eye_color"));
    if (j.contains("mouth_color")) img.mouth_color = json_vec<3>(j.at("mouth_color"));
  } catch (const Json::exception& e) {
    throw DataError("toy sidecar '" + name + "': " + e.what());
  }
  if (img.image.channels != 3 || img.image.width != img.image.height) {
    throw DataError("toy image '" + name + "' must be square RGB");
  }
  return img;
}

std::vector<ToyImage> load_toy_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("'" + dir.string() + "' is not a directory");
  std::vector<std::string> names;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".json" && std::filesystem::exists(std::filesystem::path(e.path()).replace_extension(".png")))
      names.push_back(e.path().stem().string());
  std::sort(names.begin(), names.end());
  std::vector<ToyImage> out;
  for (const std::string& n : names) out.push_back(load_toy_image(dir, n));
  return out;
}

void save_head(const std::filesystem::path& dir, const std::string& name, const SyntheticHead& head) {
  std::filesystem::create_directories(dir);
  const TexturedMesh& m = head.mesh;
  const std::string png = name + ".png";
  write_png(dir / png, m.material_textures.at(0));
  ObjWriteSpec spec;
  spec.vertices = m.vertices;
  spec.uvs = m.uvs;
  spec.triangles = m.triangles;
  spec.uv_triangles = m.uv_triangles;
  spec.face_material = m.material_ids;
  spec.material_names = m.material_names;
  spec.texture_files = {png};
  write_obj(dir / (name + ".obj"), spec);
  Json j;
  j["seed"] = head.seed;
  Json lm = Json::array();
  for (const Vec3& l : head.landmarks) lm.push_back(vec_json(l));
  j["landmarks"] = lm;
  j["landmark_names"] = {"left_eye", "right_eye", "mouth"};
  j["label_names"] = {"face", "scalp", "neck"};
  j["vertex_labels"] = head.vertex_labels;
  j["eye_color"] = vec_json(head.eye_color);
  j["skin_color"] = vec_json(head.skin_color);
  j["hair_color"] = vec_json(head.hair_color);
  j["hair_palette_index"] = head.hair_palette_index;
  write_text_atomic(dir / (name + ".json"), j.dump() + "\n");
}

HeadSidecar load_head_sidecar(const std::filesystem::path& json_path) {
  const Json j = read_json(json_path);
  HeadSidecar s;
  try {
    for (std::size_t l = 0; l < s.landmarks.size(); ++l) s.landmarks[l] = json_vec<3>(j.at("landmarks").at(l));
    s.vertex_labels = j.at("vertex_labels").get<std::vector<int>>();
    s.eye_color = json_vec<3>(j.at("eye_color"));
    s.skin_color = json_vec<3>(j.at("skin_color"));
    s.hair_color = json_vec<3>(j.at("hair_color"));
  } catch (const Json::exception& e) {
    throw DataError("head sidecar '" + json_path.string() + "': " + e.what());
  }
  return s;
}

}  // namespace auv
