#pragma once

#include <optional>
#include <string>
#include <vector>

#include "auv/ops.hpp"
#include "auv/rng.hpp"

namespace auv {

// Weights of the five objective terms: color, normal, coordinate (cycle),
// smoothness, prior.
struct LossWeights {
  double color = 1.0;
  double normal = 0.5;
  double coord = 100.0;
  double smooth = 100.0;
  double prior = 1.0;

  // Throws ConfigError unless every weight is finite and >= 0.
  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

template <class T>
struct LossTerms {
  std::optional<Var<T>> color;  // absent for colorless shapes
  std::optional<Var<T>> normal;
  std::optional<Var<T>> coord;
  std::optional<Var<T>> smooth;
  std::optional<Var<T>> prior;
};

// pred: [N, C]; target: [N, C] with column groups color (0..3), normal (3..6)
// and coordinate (6..9). C = 3 yields only the color term. Each term is the
// mean over points and channels of its group. colorless drops the color term.
template <class T>
LossTerms<T> recon_losses(const Var<T>& pred, const Tensor<T>& target, bool colorless = false);

// Ordered (i, j) pairs with i in the subset, j over all points, j != i and
// |p_i - p_j| < sigma, together with the 3D distance of each pair.
struct NeighborSet {
  std::vector<int> first;
  std::vector<int> second;
  std::vector<double> distance;
  int subset_size = 0;  // M
  int point_count = 0;  // N
  double sigma = 0.02;

  std::size_t size() const { return first.size(); }
};

// Uniform selection of m distinct indices from [0, n), in draw order.
std::vector<int> choose_subset(int n, int m, Rng& rng);

// points: [N, d]. Uses a uniform grid of cell size sigma; the result equals
// the brute-force double loop, pair order included.
template <class T>
NeighborSet find_neighbors(const Tensor<T>& points, const std::vector<int>& subset, double sigma = 0.02);

// (1 / (M*N)) * sum over pairs of | D_p - |q_i - q_j| |. Self pairs are left
// out of the set since their term is identically zero.
template <class T>
Var<T> smoothness_loss(const Var<T>& uv, const NeighborSet& neighbors);

enum class Category { Head, Body, Animal, Car, ShapenetCar, Chair, Toy };

Category category_from_string(const std::string& s);
std::string to_string(Category c);

// Constant targets of the prior term for one shape: uv [N,2] and masks [N,J]
// where J = 1 (two-way masker, target of the first mask) or 4 (chair,
// targets s_a, s_b, s_c, s_d).
struct PriorTargets {
  Tensor<double> uv;
  Tensor<double> masks;
};

template <class T>
PriorTargets prior_targets(Category category, const Tensor<T>& points, const Tensor<T>& normals);

// Chair-specific quantities, exposed for testing.
struct ChairPriorDetail {
  double p_max_y = 0;
  double p_seat_y = 0;
  bool seat_found = false;
};
template <class T>
PriorTargets chair_prior_targets(const Tensor<T>& points, const Tensor<T>& normals, ChairPriorDetail* detail = nullptr);

// mean over points of |q - t|^2 + sum_j (m_j - s_j)^2.
template <class T>
Var<T> prior_loss(const Var<T>& uv, const std::vector<Var<T>>& masks, const PriorTargets& targets);

// Weighted sum; absent terms and zero weights contribute nothing.
template <class T>
Var<T> total_loss(Tape<T>& tape, const LossTerms<T>& terms, const LossWeights& weights);

}  // namespace auv
