#include "auv/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "auv/dataset.hpp"
#include "auv/errors.hpp"

namespace auv {

LandmarkStats landmark_stats(const std::vector<std::vector<Vec2>>& uv,
                             const std::vector<std::vector<Eigen::VectorXd>>& input) {
  if (uv.empty() || uv.size() != input.size()) throw DataError("landmark_stats: need matching, non-empty item lists");
  const std::size_t L = uv.front().size();
  for (std::size_t i = 0; i < uv.size(); ++i)
    if (uv[i].size() != L || input[i].size() != L) throw DataError("landmark_stats: ragged landmark lists");
  const double n = static_cast<double>(uv.size());
  LandmarkStats s;
  for (std::size_t l = 0; l < L; ++l) {
    Vec2 mean = Vec2::Zero();
    Eigen::VectorXd imean = Eigen::VectorXd::Zero(input.front()[l].size());
    for (std::size_t i = 0; i < uv.size(); ++i) {
      mean += uv[i][l];
      imean += input[i][l];
    }
    mean /= n;
    imean /= n;
    double v = 0, vi = 0;
    for (std::size_t i = 0; i < uv.size(); ++i) {
      v += (uv[i][l] - mean).squaredNorm();
      vi += (input[i][l] - imean).squaredNorm();
    }
    s.uv_mean.push_back(mean);
    s.uv_std.push_back(std::sqrt(v / n));
    s.input_std.push_back(std::sqrt(vi / n));
  }
  return s;
}

LandmarkStats toy_landmark_stats(AuvModel<float>& model, const std::vector<ToyImage>& images) {
  std::vector<std::vector<Vec2>> uv;
  std::vector<std::vector<Eigen::VectorXd>> in;
  for (const ToyImage& im : images) {
    const int S = im.image.width;
    const int L = static_cast<int>(im.landmarks.size());
    Tensor<float> p({L, 2});
    std::vector<Eigen::VectorXd> row;
    for (int l = 0; l < L; ++l) {
      Eigen::VectorXd u(2);
      u << pixel_to_unit(im.landmarks[static_cast<std::size_t>(l)].x(), S),
          pixel_to_unit(im.landmarks[static_cast<std::size_t>(l)].y(), S);
      p.at(l, 0) = static_cast<float>(u[0]);
      p.at(l, 1) = static_cast<float>(u[1]);
      row.push_back(u);
    }
    const PointMapping m = map_points(model, toy_encoder_input(im), p, Tensor<float>({L, 3}));
    std::vector<Vec2> q;
    for (int l = 0; l < L; ++l) q.emplace_back(m.uv.at(l, 0), m.uv.at(l, 1));
    uv.push_back(std::move(q));
    in.push_back(std::move(row));
  }
  return landmark_stats(uv, in);
}

PointMapping map_landmarks(AuvModel<float>& model, const ShapeData& shape, const std::vector<Vec3>& landmarks) {
  const int L = static_cast<int>(landmarks.size());
  Tensor<float> p({L, 3}), n({L, 3});
  for (int l = 0; l < L; ++l) {
    const Vec3& x = landmarks[static_cast<std::size_t>(l)];
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < shape.size(); ++i) {
      const double d = (Vec3(shape.points.at(i, 0), shape.points.at(i, 1), shape.points.at(i, 2)) - x).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    for (int c = 0; c < 3; ++c) {
      p.at(l, c) = static_cast<float>(x[c]);
      n.at(l, c) = shape.normals.at(best, c);
    }
  }
  return map_points(model, shape.grid, p, n);
}

LandmarkStats shape_landmark_stats(AuvModel<float>& model, const std::vector<ShapeData>& shapes,
                                   const std::vector<std::vector<Vec3>>& landmarks) {
  if (shapes.size() != landmarks.size()) throw DataError("shape_landmark_stats: one landmark list per shape");
  std::vector<std::vector<Vec2>> uv;
  std::vector<std::vector<Eigen::VectorXd>> in;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const PointMapping m = map_landmarks(model, shapes[i], landmarks[i]);
    std::vector<Vec2> q;
    std::vector<Eigen::VectorXd> row;
    for (std::size_t l = 0; l < landmarks[i].size(); ++l) {
      q.emplace_back(m.uv.at(static_cast<int>(l), 0), m.uv.at(static_cast<int>(l), 1));
      row.emplace_back(landmarks[i][l]);
    }
    uv.push_back(std::move(q));
    in.push_back(std::move(row));
  }
  return landmark_stats(uv, in);
}

LabelMap label_map_from_points(const PointMapping& mapping, const std::vector<int>& point_labels, int label_count,
                               int resolution) {
  const int N = mapping.uv.dim(0);
  const int K = mapping.masks.dim(1);
  if (static_cast<int>(point_labels.size()) != N) throw ShapeError("label map: one label per point required");
  const std::size_t texels = static_cast<std::size_t>(resolution) * resolution;
  std::vector<std::vector<int>> votes(static_cast<std::size_t>(K), std::vector<int>(texels * label_count, 0));
  for (int i = 0; i < N; ++i) {
    const int lab = point_labels[static_cast<std::size_t>(i)];
    if (lab < 0 || lab >= label_count) throw DataError("label map: label out of range");
    const std::size_t t = static_cast<std::size_t>(uv_to_texel(mapping.uv.at(i, 1), resolution)) * resolution +
                          static_cast<std::size_t>(uv_to_texel(mapping.uv.at(i, 0), resolution));
    ++votes[static_cast<std::size_t>(mapping.route(i))][t * label_count + lab];
  }
  LabelMap map;
  map.resolution = resolution;
  map.labels.assign(static_cast<std::size_t>(K), std::vector<int>(texels, -1));
  for (std::size_t k = 0; k < votes.size(); ++k)
    for (std::size_t t = 0; t < texels; ++t) {
      const auto first = votes[k].begin() + static_cast<std::ptrdiff_t>(t * label_count);
      const auto best = std::max_element(first, first + label_count);
      if (*best > 0) map.labels[k][t] = static_cast<int>(best - first);
    }
  return map;
}

namespace {

// Nearest labeled texel by expanding square rings; -1 when none exists.
int nearest_label(const LabelMap& map, int k, int x, int y) {
  const int R = map.resolution;
  int found = -1;
  long best = -1;
  for (int ring = 0; ring < R; ++ring) {
    if (found >= 0 && static_cast<long>(ring) * ring > best) break;
    for (int yy = y - ring; yy <= y + ring; ++yy)
      for (int xx = x - ring; xx <= x + ring; ++xx) {
        if (std::max(std::abs(xx - x), std::abs(yy - y)) != ring) continue;
        if (xx < 0 || yy < 0 || xx >= R || yy >= R) continue;
        const int lab = map.label(k, xx, yy);
        if (lab < 0) continue;
        const long d = static_cast<long>(xx - x) * (xx - x) + static_cast<long>(yy - y) * (yy - y);
        if (best < 0 || d < best) {
          best = d;
          found = lab;
        }
      }
  }
  return found;
}

}  // namespace

std::vector<int> segment_points(const PointMapping& mapping, const LabelMap& map) {
  const int N = mapping.uv.dim(0);
  const int K = mapping.masks.dim(1);
  if (static_cast<int>(map.labels.size()) != K) throw ConfigError("segmentation: label map texture count mismatch");
  std::vector<bool> has_labels(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    const auto& l = map.labels[static_cast<std::size_t>(k)];
    has_labels[static_cast<std::size_t>(k)] = std::any_of(l.begin(), l.end(), [](int v) { return v >= 0; });
  }
  if (std::none_of(has_labels.begin(), has_labels.end(), [](bool b) { return b; })) {
    throw DataError("segmentation: label map has no labeled texels");
  }
  const int R = map.resolution;
  std::map<std::tuple<int, int, int>, int> cache;
  std::vector<int> out(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) {
    const int x = uv_to_texel(mapping.uv.at(i, 0), R), y = uv_to_texel(mapping.uv.at(i, 1), R);
    const int route = mapping.route(i);
    int lab = map.label(route, x, y);
    if (lab < 0) {
      auto [it, fresh] = cache.try_emplace({route, x, y}, -1);
      if (fresh) {
        int v = has_labels[static_cast<std::size_t>(route)] ? nearest_label(map, route, x, y) : -1;
        for (int k = 0; v < 0 && k < K; ++k)
          if (has_labels[static_cast<std::size_t>(k)]) v = nearest_label(map, k, x, y);
        it->second = v;
      }
      lab = it->second;
    }
    out[static_cast<std::size_t>(i)] = lab;
  }
  return out;
}

std::vector<double> iou(const std::vector<int>& pred, const std::vector<int>& truth, int label_count) {
  if (pred.size() != truth.size()) throw ShapeError("iou: label vectors differ in length");
  std::vector<long> inter(static_cast<std::size_t>(label_count), 0), uni(static_cast<std::size_t>(label_count), 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int p = pred[i], t = truth[i];
    if (p < 0 || p >= label_count || t < 0 || t >= label_count) throw DataError("iou: label out of range");
    if (p == t) {
      ++inter[static_cast<std::size_t>(p)];
      ++uni[static_cast<std::size_t>(p)];
    } else {
      ++uni[static_cast<std::size_t>(p)];
      ++uni[static_cast<std::size_t>(t)];
    }
  }
  std::vector<double> out(static_cast<std::size_t>(label_count));
  for (std::size_t c = 0; c < out.size(); ++c)
    out[c] = uni[c] ? static_cast<double>(inter[c]) / static_cast<double>(uni[c]) : std::nan("");
  return out;
}

double mean_iou(const std::vector<int>& pred, const std::vector<int>& truth, int label_count) {
  double s = 0;
  int n = 0;
  for (double v : iou(pred, truth, label_count))
    if (!std::isnan(v)) {
      s += v;
      ++n;
    }
  return n ? s / n : std::nan("");
}

double psnr_masked(const Image& a, const Image& b, const std::vector<std::uint8_t>& mask) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels) throw ShapeError("psnr: size mismatch");
  const std::size_t px = static_cast<std::size_t>(a.width) * a.height;
  if (!mask.empty() && mask.size() != px) throw ShapeError("psnr: mask size mismatch");
  double se = 0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < px; ++p) {
    if (!mask.empty() && !mask[p]) continue;
    for (int c = 0; c < a.channels; ++c) {
      const double d = static_cast<double>(a.data[p * a.channels + c]) - b.data[p * a.channels + c];
      se += d * d;
    }
    n += static_cast<std::size_t>(a.channels);
  }
  if (n == 0) throw DataError("psnr: no pixels selected");
  if (se == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(static_cast<double>(n) / se);
}

double psnr(const Image& a, const Image& b) { return psnr_masked(a, b, {}); }

bool color_patch_centroid(const Image& texture, const Vec3& color, double tolerance, Vec2& centroid) {
  const int R = texture.width;
  Vec2 sum = Vec2::Zero();
  long n = 0;
  for (int y = 0; y < texture.height; ++y)
    for (int x = 0; x < R; ++x) {
      double d = 0;
      for (int c = 0; c < 3; ++c) d = std::max(d, std::abs(texture.at(x, y, c) - color[c]));
      if (d > tolerance) continue;
      sum += Vec2(texel_to_uv(x, R), texel_to_uv(y, texture.height));
      ++n;
    }
  if (n == 0) return false;
  centroid = sum / static_cast<double>(n);
  return true;
}

}  // namespace auv
