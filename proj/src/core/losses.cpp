#include "auv/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "auv/errors.hpp"

namespace auv {

void LossWeights::validate() const {
  for (double w : {color, normal, coord, smooth, prior}) {
    if (!std::isfinite(w) || w < 0.0) throw ConfigError("loss weights must be finite and non-negative");
  }
}

template <class T>
LossTerms<T> recon_losses(const Var<T>& pred, const Tensor<T>& target, bool colorless) {
  if (pred.shape() != target.shape() || target.rank() != 2 || (target.dim(1) != 3 && target.dim(1) != 9)) {
    throw ShapeError("recon_losses: incompatible shapes " + shape_str(pred.shape()) + " and " +
                     shape_str(target.shape()));
  }
  Tape<T>& tape = *pred.tape();
  LossTerms<T> out;
  auto group = [&](int begin) {
    Tensor<T> t({target.dim(0), 3});
    for (int i = 0; i < target.dim(0); ++i)
      for (int c = 0; c < 3; ++c) t.at(i, c) = target.at(i, begin + c);
    return ops::mse(ops::slice_cols(pred, begin, begin + 3), tape.constant(std::move(t)));
  };
  if (!colorless) out.color = group(0);
  if (target.dim(1) == 9) {
    out.normal = group(3);
    out.coord = group(6);
  }
  return out;
}

std::vector<int> choose_subset(int n, int m, Rng& rng) {
  if (n < 0 || m < 0 || m > n) throw Error(ErrorKind::InvalidArgument, "choose_subset: need 0 <= m <= n");
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < m; ++i) {
    const auto j = static_cast<std::size_t>(i) + rng.below(static_cast<std::uint64_t>(n - i));
    std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
  }
  idx.resize(static_cast<std::size_t>(m));
  return idx;
}

template <class T>
NeighborSet find_neighbors(const Tensor<T>& points, const std::vector<int>& subset, double sigma) {
  if (points.rank() != 2 || points.dim(1) < 1 || points.dim(1) > 3) {
    throw ShapeError("find_neighbors: expected points [N,d] with d <= 3, got " + shape_str(points.shape()));
  }
  if (!(sigma > 0.0)) throw Error(ErrorKind::InvalidArgument, "find_neighbors: sigma must be positive");
  const int N = points.dim(0), d = points.dim(1);
  NeighborSet ns;
  ns.subset_size = static_cast<int>(subset.size());
  ns.point_count = N;
  ns.sigma = sigma;

  auto cell_of = [&](int i, int axis) {
    return static_cast<std::int64_t>(std::floor(static_cast<double>(points.at(i, axis)) / sigma));
  };
  auto key = [](std::int64_t x, std::int64_t y, std::int64_t z) {
    return (static_cast<std::uint64_t>(x & 0x1FFFFF) << 42) | (static_cast<std::uint64_t>(y & 0x1FFFFF) << 21) |
           static_cast<std::uint64_t>(z & 0x1FFFFF);
  };
  std::unordered_map<std::uint64_t, std::vector<int>> grid;
  grid.reserve(static_cast<std::size_t>(N));
  for (int j = 0; j < N; ++j) {
    grid[key(cell_of(j, 0), d > 1 ? cell_of(j, 1) : 0, d > 2 ? cell_of(j, 2) : 0)].push_back(j);
  }
  std::vector<int> cand;
  for (int i : subset) {
    if (i < 0 || i >= N) throw Error(ErrorKind::InvalidArgument, "find_neighbors: subset index out of range");
    const std::int64_t cx = cell_of(i, 0), cy = d > 1 ? cell_of(i, 1) : 0, cz = d > 2 ? cell_of(i, 2) : 0;
    cand.clear();
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = (d > 1 ? -1 : 0); dy <= (d > 1 ? 1 : 0); ++dy)
        for (int dz = (d > 2 ? -1 : 0); dz <= (d > 2 ? 1 : 0); ++dz) {
          auto it = grid.find(key(cx + dx, cy + dy, cz + dz));
          if (it != grid.end()) cand.insert(cand.end(), it->second.begin(), it->second.end());
        }
    std::sort(cand.begin(), cand.end());
    for (int j : cand) {
      if (j == i) continue;
      double s = 0;
      for (int a = 0; a < d; ++a) {
        const double diff = static_cast<double>(points.at(i, a)) - static_cast<double>(points.at(j, a));
        s += diff * diff;
      }
      const double dist = std::sqrt(s);
      if (dist < sigma) {
        ns.first.push_back(i);
        ns.second.push_back(j);
        ns.distance.push_back(dist);
      }
    }
  }
  return ns;
}

template <class T>
Var<T> smoothness_loss(const Var<T>& uv, const NeighborSet& ns) {
  Tape<T>& tape = *uv.tape();
  if (uv.value().rank() != 2 || uv.dim(0) != ns.point_count) {
    throw ShapeError("smoothness_loss: uv " + shape_str(uv.shape()) + " does not match " +
                     std::to_string(ns.point_count) + " points");
  }
  if (ns.size() == 0 || ns.subset_size == 0) return tape.constant(Tensor<T>::scalar(T{0}));
  Tensor<T> dp({static_cast<int>(ns.size()), 1});
  for (std::size_t k = 0; k < ns.size(); ++k) dp[k] = static_cast<T>(ns.distance[k]);
  Var<T> dq = ops::row_norm(ops::sub(ops::gather_rows(uv, ns.first), ops::gather_rows(uv, ns.second)));
  Var<T> s = ops::sum(ops::abs(ops::sub(tape.constant(std::move(dp)), dq)));
  return ops::scale(s, static_cast<T>(1.0 / (static_cast<double>(ns.subset_size) * ns.point_count)));
}

Category category_from_string(const std::string& s) {
  if (s == "head") return Category::Head;
  if (s == "body") return Category::Body;
  if (s == "animal") return Category::Animal;
  if (s == "car") return Category::Car;
  if (s == "shapenet_car") return Category::ShapenetCar;
  if (s == "chair") return Category::Chair;
  if (s == "toy") return Category::Toy;
  throw ConfigError("unknown category '" + s + "' (expected head, body, animal, car, shapenet_car, chair or toy)");
}

std::string to_string(Category c) {
  switch (c) {
    case Category::Head: return "head";
    case Category::Body: return "body";
    case Category::Animal: return "animal";
    case Category::Car: return "car";
    case Category::ShapenetCar: return "shapenet_car";
    case Category::Chair: return "chair";
    case Category::Toy: return "toy";
  }
  return "?";
}

namespace {

template <class T>
void check_cloud(const char* op, const Tensor<T>& points, const Tensor<T>& normals) {
  if (points.rank() != 2 || points.dim(1) != 3 || normals.shape() != points.shape()) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(points.shape()) + " and " +
                     shape_str(normals.shape()));
  }
}

}  // namespace

template <class T>
PriorTargets chair_prior_targets(const Tensor<T>& points, const Tensor<T>& normals, ChairPriorDetail* detail) {
  check_cloud("chair_prior_targets", points, normals);
  const int N = points.dim(0);
  auto P = [&](int i, int a) { return static_cast<double>(points.at(i, a)); };
  auto Nm = [&](int i, int a) { return static_cast<double>(normals.at(i, a)); };
  ChairPriorDetail det;
  det.p_max_y = -std::numeric_limits<double>::infinity();
  double seat = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < N; ++i) {
    det.p_max_y = std::max(det.p_max_y, P(i, 1));
    if (P(i, 0) > 0.0 && P(i, 0) < 0.1 && P(i, 2) > -0.05 && P(i, 2) < 0.05) {
      seat = std::max(seat, P(i, 1));
      det.seat_found = true;
    }
  }
  det.p_seat_y = det.seat_found ? seat : 0.0;
  PriorTargets t{Tensor<double>({N, 2}), Tensor<double>({N, 4})};
  for (int i = 0; i < N; ++i) {
    const double py2 = P(i, 1) - det.p_max_y - 0.05;
    const double m1 = P(i, 0) * Nm(i, 0) + py2 * Nm(i, 1) + P(i, 2) * Nm(i, 2) < 0.0 ? 1.0 : 0.0;
    const double m2 = P(i, 1) > det.p_seat_y - 0.2 ? 1.0 : 0.0;
    t.masks.at(i, 0) = m1 * m2;
    t.masks.at(i, 1) = (1.0 - m1) * m2;
    t.masks.at(i, 2) = m1 * (1.0 - m2);
    t.masks.at(i, 3) = (1.0 - m1) * (1.0 - m2);
    const double r2 = P(i, 0) * P(i, 0) + P(i, 2) * P(i, 2);
    const double dy = P(i, 1) - det.p_seat_y;
    const double d = std::sqrt(r2 + 4.0 * dy * dy) / std::max(std::sqrt(r2), 1e-6);
    t.uv.at(i, 0) = P(i, 0) * d;
    t.uv.at(i, 1) = P(i, 2) * d;
  }
  if (detail) *detail = det;
  return t;
}

template <class T>
PriorTargets prior_targets(Category category, const Tensor<T>& points, const Tensor<T>& normals) {
  if (category == Category::Chair) return chair_prior_targets(points, normals);
  if (category == Category::Toy) throw ConfigError("prior_targets: the toy category has no 3D prior");
  check_cloud("prior_targets", points, normals);
  const int N = points.dim(0);
  PriorTargets t{Tensor<double>({N, 2}), Tensor<double>({N, 1})};
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (int i = 0; i < N; ++i) {
    const double px = points.at(i, 0), py = points.at(i, 1), pz = points.at(i, 2);
    const double nx = normals.at(i, 0), ny = normals.at(i, 1), nz = normals.at(i, 2);
    double u = px, v = py;
    bool n = false;
    switch (category) {
      case Category::Head: n = nz > -0.5; break;
      case Category::Body: n = (ny + nz) * inv_sqrt2 > -0.5; break;
      case Category::Animal: u = py; v = pz; n = nx > 0.0; break;
      case Category::Car: v = pz; n = ny > -0.5; break;
      case Category::ShapenetCar: v = pz; n = py > 0.0 || ny > -0.5; break;
      default: break;
    }
    t.uv.at(i, 0) = u;
    t.uv.at(i, 1) = v;
    t.masks.at(i, 0) = n ? 1.0 : 0.0;
  }
  return t;
}

template <class T>
Var<T> prior_loss(const Var<T>& uv, const std::vector<Var<T>>& masks, const PriorTargets& targets) {
  Tape<T>& tape = *uv.tape();
  const int N = targets.uv.rank() == 2 ? targets.uv.dim(0) : -1;
  const int J = targets.masks.rank() == 2 ? targets.masks.dim(1) : -1;
  if (uv.shape() != Shape{N, 2} || (J != 1 && J != 4) || targets.masks.dim(0) != N ||
      static_cast<int>(masks.size()) < J) {
    throw ShapeError("prior_loss: uv " + shape_str(uv.shape()) + " / targets " + shape_str(targets.uv.shape()) +
                     " / mask targets " + shape_str(targets.masks.shape()) + " with " +
                     std::to_string(masks.size()) + " masks");
  }
  Var<T> tuv = tape.constant(targets.uv.cast<T>());
  Var<T> acc = ops::sum(ops::square(ops::sub(uv, tuv)));
  std::vector<Var<T>> used(masks.begin(), masks.begin() + J);
  for (const Var<T>& m : used) {
    if (m.shape() != Shape{N, 1}) throw ShapeError("prior_loss: mask shape " + shape_str(m.shape()));
  }
  Var<T> mcat = J == 1 ? used[0] : ops::concat_cols(used);
  acc = ops::add(acc, ops::sum(ops::square(ops::sub(mcat, tape.constant(targets.masks.cast<T>())))));
  return ops::scale(acc, static_cast<T>(1.0 / N));
}

template <class T>
Var<T> total_loss(Tape<T>& tape, const LossTerms<T>& terms, const LossWeights& w) {
  w.validate();
  std::optional<Var<T>> acc;
  auto add = [&](const std::optional<Var<T>>& term, double weight) {
    if (!term || weight == 0.0) return;
    Var<T> v = weight == 1.0 ? *term : ops::scale(*term, static_cast<T>(weight));
    acc = acc ? ops::add(*acc, v) : v;
  };
  add(terms.color, w.color);
  add(terms.normal, w.normal);
  add(terms.coord, w.coord);
  add(terms.smooth, w.smooth);
  add(terms.prior, w.prior);
  return acc ? *acc : tape.constant(Tensor<T>::scalar(T{0}));
}

#define AUV_INSTANTIATE_LOSSES(T)                                                                     \
  template LossTerms<T> recon_losses<T>(const Var<T>&, const Tensor<T>&, bool);                       \
  template NeighborSet find_neighbors<T>(const Tensor<T>&, const std::vector<int>&, double);          \
  template Var<T> smoothness_loss<T>(const Var<T>&, const NeighborSet&);                              \
  template PriorTargets prior_targets<T>(Category, const Tensor<T>&, const Tensor<T>&);               \
  template PriorTargets chair_prior_targets<T>(const Tensor<T>&, const Tensor<T>&, ChairPriorDetail*); \
  template Var<T> prior_loss<T>(const Var<T>&, const std::vector<Var<T>>&, const PriorTargets&);      \
  template Var<T> total_loss<T>(Tape<T>&, const LossTerms<T>&, const LossWeights&);

AUV_INSTANTIATE_LOSSES(float)
AUV_INSTANTIATE_LOSSES(double)

}  // namespace auv
