#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "auv/losses.hpp"
#include "auv/networks.hpp"
#include "auv/ops.hpp"
#include "auv/rng.hpp"

// Central-difference gradient checks in double precision, shared by the unit
// tests and the acceptance binary.
namespace auvtest {

using auv::Parameter;
using auv::Rng;
using auv::Shape;
using auv::Tape;
using auv::Tensor;
using auv::Var;
namespace ops = auv::ops;

inline Tensor<double> random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Values pushed at least `gap` away from zero, so |x| and leaky_relu have no
// kink within reach of the finite-difference step.
inline Tensor<double> away_from_zero(Rng& rng, Shape shape, double gap = 0.05) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) {
    const double m = rng.uniform(gap, 1.0);
    v = rng.uniform() < 0.5 ? -m : m;
  }
  return t;
}

// Contracts any output with fixed pseudo-random weights into a scalar.
inline Var<double> weighted_sum(const Var<double>& out, std::uint64_t seed) {
  Rng rng(seed, 77);
  Tensor<double> w = random_tensor(rng, out.shape());
  Tape<double>& t = *out.tape();
  return ops::sum(ops::mul(out, t.constant(std::move(w))));
}

using Build = std::function<Var<double>(Tape<double>&)>;

struct CheckResult {
  double error = 0;      // ||g - g_fd|| / max(||g||, ||g_fd||, floor)
  double grad_norm = 0;  // ||g_fd||
  int coordinates = 0;
};

// `build` attaches `params` to the tape and returns a scalar. At most
// `max_coords` coordinates per parameter are probed (chosen with `rng`).
inline CheckResult check_gradient(const std::vector<Parameter<double>*>& params, const Build& build, Rng& rng,
                                  int max_coords = 1 << 30, double h = 1e-5, double floor = 1e-8) {
  {
    Tape<double> tape;
    tape.backward(build(tape));
  }
  std::vector<double> analytic, numeric;
  for (Parameter<double>* p : params) {
    const int n = static_cast<int>(p->value.size());
    std::vector<int> coords;
    if (n <= max_coords) {
      for (int i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (int i = 0; i < max_coords; ++i) coords.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(n))));
    }
    for (int i : coords) analytic.push_back(p->grad[static_cast<std::size_t>(i)]);
    for (int i : coords) {
      double& x = p->value[static_cast<std::size_t>(i)];
      const double x0 = x;
      x = x0 + h;
      double fp, fm;
      {
        Tape<double> tape;
        fp = build(tape).value().item();
      }
      x = x0 - h;
      {
        Tape<double> tape;
        fm = build(tape).value().item();
      }
      x = x0;
      numeric.push_back((fp - fm) / (2 * h));
    }
  }
  double diff = 0, na = 0, nn = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  CheckResult r;
  r.error = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), floor});
  r.grad_norm = std::sqrt(nn);
  r.coordinates = static_cast<int>(analytic.size());
  return r;
}

// One randomized instance: leaf tensors plus a graph over them.
struct Case {
  std::vector<Tensor<double>> inputs;
  std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)> graph;
};

struct Suite {
  std::string name;
  std::function<Case(Rng&, std::uint64_t)> make;  // (rng, case seed)
};

struct SuiteResult {
  std::string name;
  int cases = 0;
  double max_error = 0;
  double min_grad_norm = 1e300;
};

inline CheckResult check_case(Case c, Rng& rng) {
  std::vector<Parameter<double>> leaves;
  leaves.reserve(c.inputs.size());
  for (std::size_t i = 0; i < c.inputs.size(); ++i) leaves.emplace_back("x" + std::to_string(i), std::move(c.inputs[i]));
  std::vector<Parameter<double>*> ptrs;
  for (auto& l : leaves) ptrs.push_back(&l);
  return check_gradient(
      ptrs,
      [&](Tape<double>& t) {
        std::vector<Var<double>> v;
        for (auto& l : leaves) v.push_back(t.param(l));
        return c.graph(t, v);
      },
      rng);
}

inline SuiteResult run_suite(const Suite& s, int cases, std::uint64_t seed) {
  SuiteResult r;
  r.name = s.name;
  Rng rng(seed, std::hash<std::string>{}(s.name));
  for (int i = 0; i < cases; ++i) {
    const std::uint64_t case_seed = seed * 1000003ULL + static_cast<std::uint64_t>(i);
    const CheckResult c = check_case(s.make(rng, case_seed), rng);
    r.max_error = std::max(r.max_error, c.error);
    r.min_grad_norm = std::min(r.min_grad_norm, c.grad_norm);
    ++r.cases;
  }
  return r;
}

inline int dim_in(Rng& rng, int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); }

// UV points whose texel coordinates keep clear of texel centres and of the
// clamped border, where bilinear lookup has kinks.
inline Tensor<double> smooth_uv(Rng& rng, int n, int size) {
  Tensor<double> q({n, 2});
  for (auto& v : q.values()) {
    const int cell = static_cast<int>(rng.below(static_cast<std::uint64_t>(size - 1)));
    const double frac = rng.uniform(0.02, 0.98);
    v = (cell + frac + 0.5) / size - 0.5;
  }
  return q;
}

inline std::vector<Suite> op_suites() {
  using C = Case;
  using VV = std::vector<Var<double>>;
  std::vector<Suite> s;
  s.push_back({"matmul", [](Rng& r, std::uint64_t k) {
                 const int m = dim_in(r, 1, 5), n = dim_in(r, 1, 5), p = dim_in(r, 1, 5);
                 return C{{random_tensor(r, {m, n}), random_tensor(r, {n, p})},
                          [k](Tape<double>&, const VV& v) { return weighted_sum(ops::matmul(v[0], v[1]), k); }};
               }});
  s.push_back({"transpose", [](Rng& r, std::uint64_t k) {
                 return C{{random_tensor(r, {dim_in(r, 1, 5), dim_in(r, 1, 5)})},
                          [k](Tape<double>&, const VV& v) { return weighted_sum(ops::transpose(v[0]), k); }};
               }});
  auto binary = [](std::string name, Var<double> (*f)(const Var<double>&, const Var<double>&)) {
    return Suite{name, [f](Rng& r, std::uint64_t k) {
                   const Shape sh{dim_in(r, 1, 4), dim_in(r, 1, 4)};
                   return C{{random_tensor(r, sh), random_tensor(r, sh)},
                            [f, k](Tape<double>&, const VV& v) { return weighted_sum(f(v[0], v[1]), k); }};
                 }};
  };
  s.push_back(binary("add", &ops::add<double>));
  s.push_back(binary("sub", &ops::sub<double>));
  s.push_back(binary("mul", &ops::mul<double>));
  s.push_back({"scale", [](Rng& r, std::uint64_t k) {
                 const double a = r.uniform(-3, 3);
                 return C{{random_tensor(r, {dim_in(r, 1, 4), dim_in(r, 1, 4)})},
                          [a, k](Tape<double>&, const VV& v) { return weighted_sum(ops::scale(v[0], a), k); }};
               }});
  s.push_back({"add_scalar", [](Rng& r, std::uint64_t k) {
                 const double a = r.uniform(-3, 3);
                 return C{{random_tensor(r, {dim_in(r, 1, 4), dim_in(r, 1, 4)})},
                          [a, k](Tape<double>&, const VV& v) { return weighted_sum(ops::add_scalar(v[0], a), k); }};
               }});
  s.push_back({"one_minus", [](Rng& r, std::uint64_t k) {
                 return C{{random_tensor(r, {dim_in(r, 1, 4), dim_in(r, 1, 4)})},
                          [k](Tape<double>&, const VV& v) { return weighted_sum(ops::one_minus(v[0]), k); }};
               }});
  s.push_back({"add_row", [](Rng& r, std::uint64_t k) {
                 const int m = dim_in(r, 1, 5), n = dim_in(r, 1, 5);
                 const Shape row = r.uniform() < 0.5 ? Shape{n} : Shape{1, n};
                 return C{{random_tensor(r, {m, n}), random_tensor(r, row)},
                          [k](Tape<double>&, const VV& v) { return weighted_sum(ops::add_row(v[0], v[1]), k); }};
               }});
  s.push_back({"mul_col", [](Rng& r, std::uint64_t k) {
                 const int m = dim_in(r, 1, 5), n = dim_in(r, 1, 5);
                 return C{{random_tensor(r, {m, n}), random_tensor(r, {m, 1})},
                          [k](Tape<double>&, const VV& v) { return weighted_sum(ops::mul_col(v[0], v[1]), k); }};
               }});
  s.push_back({"leaky_relu", [](Rng& r, std::uint64_t k) {
                 return C{{away_from_zero(r, {dim_in(r, 1, 5), dim_in(r, 1, 5)})}, [k](Tape<double>&, const VV& v) {
                            return weighted_sum(ops::leaky_relu(v[0], auv::kLeakySlope), k);
                          }};
               }});
  auto unary = [](std::string name, Var<double> (*f)(const Var<double>&), bool kink) {
    return Suite{name, [f, kink](Rng& r, std::uint64_t k) {
                   const Shape sh{dim_in(r, 1, 5), dim_in(r, 1, 5)};
                   return C{{kink ? away_from_zero(r, sh) : random_tensor(r, sh, -3, 3)},
                            [f, k](Tape<double>&, const VV& v) { return weighted_sum(f(v[0]), k); }};
                 }};
  };
  s.push_back(unary("sigmoid", &ops::sigmoid<double>, false));
  s.push_back(unary("tanh", &ops::tanh<double>, false));
  s.push_back(unary("square", &ops::square<double>, false));
  s.push_back(unary("abs", &ops::abs<double>, true));
  s.push_back({"sum", [](Rng& r, std::uint64_t) {
                 return C{{random_tensor(r, {dim_in(r, 1, 5), dim_in(r, 1, 5)})},
                          [](Tape<double>&, const VV& v) { return ops::scale(ops::sum(ops::square(v[0])), 0.5); }};
               }});
  s.push_back({"mean", [](Rng& r, std::uint64_t) {
                 return C{{random_tensor(r, {dim_in(r, 1, 5), dim_in(r, 1, 5)})},
                          [](Tape<double>&, const VV& v) { return ops::mean(ops::square(v[0])); }};
               }});
  s.push_back({"mse", [](Rng& r, std::uint64_t) {
                 const Shape sh{dim_in(r, 1, 5), dim_in(r, 1, 5)};
                 return C{{random_tensor(r, sh), random_tensor(r, sh)},
                          [](Tape<double>&, const VV& v) { return ops::mse(v[0], v[1]); }};
               }});
  s.push_back({"row_sum", [](Rng& r, std::uint64_t k) {
                 return C{{random_tensor(r, {dim_in(r, 1, 5), dim_in(r, 1, 5)})},
                          [k](Tape<double>&, const VV& v) { return weighted_sum(ops::row_sum(v[0]), k); }};
               }});
  s.push_back({"row_norm", [](Rng& r, std::uint64_t k) {
                 // Rows stay away from the origin, where the norm is not differentiable.
                 Tensor<double> a = away_from_zero(r, {dim_in(r, 1, 5), dim_in(r, 1, 4)}, 0.2);
                 return C{{std::move(a)}, [k](Tape<double>&, const VV& v) { return weighted_sum(ops::row_norm(v[0]), k); }};
               }});
  s.push_back({"concat_cols", [](Rng& r, std::uint64_t k) {
                 const int m = dim_in(r, 1, 4), parts = dim_in(r, 1, 3);
                 std::vector<Tensor<double>> in;
                 for (int i = 0; i < parts; ++i) in.push_back(random_tensor(r, {m, dim_in(r, 1, 3)}));
                 return C{std::move(in), [k](Tape<double>&, const VV& v) { return weighted_sum(ops::concat_cols(v), k); }};
               }});
  s.push_back({"slice_cols", [](Rng& r, std::uint64_t k) {
                 const int m = dim_in(r, 1, 4), n = dim_in(r, 1, 6);
                 const int b = dim_in(r, 0, n - 1), e = dim_in(r, b + 1, n);
                 return C{{random_tensor(r, {m, n})},
                          [b, e, k](Tape<double>&, const VV& v) { return weighted_sum(ops::slice_cols(v[0], b, e), k); }};
               }});
  s.push_back({"gather_rows", [](Rng& r, std::uint64_t k) {
                 const int m = dim_in(r, 1, 5), n = dim_in(r, 1, 4), g = dim_in(r, 1, 8);
                 std::vector<int> rows;
                 for (int i = 0; i < g; ++i) rows.push_back(dim_in(r, 0, m - 1));
                 return C{{random_tensor(r, {m, n})},
                          [rows, k](Tape<double>&, const VV& v) { return weighted_sum(ops::gather_rows(v[0], rows), k); }};
               }});
  s.push_back({"reshape", [](Rng& r, std::uint64_t k) {
                 const int m = dim_in(r, 1, 4), n = dim_in(r, 1, 4);
                 return C{{random_tensor(r, {m, n})},
                          [m, n, k](Tape<double>&, const VV& v) { return weighted_sum(ops::reshape(v[0], {n, m}), k); }};
               }});
  s.push_back({"grid_sample", [](Rng& r, std::uint64_t k) {
                 const int size = dim_in(r, 2, 6), c = dim_in(r, 1, 4), p = dim_in(r, 1, 6);
                 return C{{random_tensor(r, {size * size, c}), smooth_uv(r, p, size)},
                          [size, k](Tape<double>&, const VV& v) { return weighted_sum(ops::grid_sample(v[0], v[1], size), k); }};
               }});
  s.push_back({"conv2d", [](Rng& r, std::uint64_t k) {
                 const int cin = dim_in(r, 1, 3), cout = dim_in(r, 1, 3), ks = dim_in(r, 1, 4);
                 const int stride = dim_in(r, 1, 2), pad = dim_in(r, 0, 1);
                 const int h = dim_in(r, std::max(ks, 3), 7), w = dim_in(r, std::max(ks, 3), 7);
                 return C{{random_tensor(r, {cin, h, w}), random_tensor(r, {cout, cin, ks, ks}), random_tensor(r, {cout})},
                          [stride, pad, k](Tape<double>&, const VV& v) {
                            return weighted_sum(ops::conv2d(v[0], v[1], v[2], stride, pad), k);
                          }};
               }});
  s.push_back({"conv3d", [](Rng& r, std::uint64_t k) {
                 const int cin = dim_in(r, 1, 2), cout = dim_in(r, 1, 2), ks = dim_in(r, 1, 3);
                 const int stride = dim_in(r, 1, 2), pad = dim_in(r, 0, 1);
                 const int n = dim_in(r, std::max(ks, 3), 5);
                 return C{{random_tensor(r, {cin, n, n, n}), random_tensor(r, {cout, cin, ks, ks, ks}), random_tensor(r, {cout})},
                          [stride, pad, k](Tape<double>&, const VV& v) {
                            return weighted_sum(ops::conv3d(v[0], v[1], v[2], stride, pad), k);
                          }};
               }});
  return s;
}

// Random points in a small box so that many pairs fall within sigma.
inline Tensor<double> clustered_points(Rng& r, int n, double extent) { return random_tensor(r, {n, 3}, 0.0, extent); }

inline Tensor<double> unit_normals(Rng& r, int n) {
  Tensor<double> t({n, 3});
  for (int i = 0; i < n; ++i) {
    double x = r.normal(), y = r.normal(), z = r.normal();
    const double l = std::sqrt(x * x + y * y + z * z);
    t.at(i, 0) = x / l;
    t.at(i, 1) = y / l;
    t.at(i, 2) = z / l;
  }
  return t;
}

// Chair points spread over a seat-and-back layout so the target construction
// exercises every branch.
inline Tensor<double> chair_points(Rng& r, int n) {
  Tensor<double> p({n, 3});
  for (int i = 0; i < n; ++i) {
    p.at(i, 0) = r.uniform(-0.4, 0.4);
    p.at(i, 1) = r.uniform(-0.5, 0.5);
    p.at(i, 2) = r.uniform(-0.4, 0.4);
  }
  return p;
}

// UVs for which every neighbor pair keeps |D_p - D_q| clear of its kink and
// D_q clear of the origin, where |q_i - q_j| curves sharply.
inline Tensor<double> smooth_loss_uv(Rng& r, const Tensor<double>& p, const auv::NeighborSet& nb) {
  const int n = p.dim(0);
  for (;;) {
    Tensor<double> q = random_tensor(r, {n, 2}, 0.0, 0.08);
    bool ok = true;
    for (std::size_t e = 0; e < nb.size() && ok; ++e) {
      const int i = nb.first[e], j = nb.second[e];
      const double dq = std::hypot(q.at(i, 0) - q.at(j, 0), q.at(i, 1) - q.at(j, 1));
      ok = dq > 2e-3 && std::abs(dq - nb.distance[e]) > 1e-4;
    }
    if (ok) return q;
  }
}

inline std::vector<Suite> loss_suites() {
  using C = Case;
  using VV = std::vector<Var<double>>;
  std::vector<Suite> s;
  auto recon = [](std::string name, int term) {
    return Suite{name, [term](Rng& r, std::uint64_t) {
                   const int n = dim_in(r, 1, 6);
                   Tensor<double> target = random_tensor(r, {n, 9});
                   return C{{random_tensor(r, {n, 9})}, [term, target](Tape<double>&, const VV& v) {
                              const auto terms = auv::recon_losses(v[0], target);
                              return term == 0 ? *terms.color : term == 1 ? *terms.normal : *terms.coord;
                            }};
                 }};
  };
  s.push_back(recon("color term", 0));
  s.push_back(recon("normal term", 1));
  s.push_back(recon("coordinate term", 2));
  s.push_back({"smoothness", [](Rng& r, std::uint64_t) {
                 const int n = dim_in(r, 4, 24), m = dim_in(r, 1, n);
                 Tensor<double> p;
                 auv::NeighborSet nb;
                 while (nb.size() == 0) {
                   p = clustered_points(r, n, 0.03);
                   nb = auv::find_neighbors(p, auv::choose_subset(n, m, r), 0.02);
                 }
                 return C{{smooth_loss_uv(r, p, nb)}, [nb](Tape<double>&, const VV& v) { return auv::smoothness_loss(v[0], nb); }};
               }});
  s.push_back({"head prior", [](Rng& r, std::uint64_t) {
                 const int n = dim_in(r, 1, 8);
                 const auto targets = auv::prior_targets(auv::Category::Head, random_tensor(r, {n, 3}, -0.5, 0.5), unit_normals(r, n));
                 return C{{random_tensor(r, {n, 2}), random_tensor(r, {n, 1}, 0.0, 1.0)},
                          [targets, n](Tape<double>& t, const VV& v) {
                            return auv::prior_loss(v[0], VV{v[1], ops::one_minus(v[1])}, targets);
                          }};
               }});
  s.push_back({"chair prior", [](Rng& r, std::uint64_t) {
                 const int n = dim_in(r, 8, 24);
                 const auto targets = auv::chair_prior_targets(chair_points(r, n), unit_normals(r, n));
                 std::vector<Tensor<double>> in{random_tensor(r, {n, 2})};
                 for (int j = 0; j < 4; ++j) in.push_back(random_tensor(r, {n, 1}, 0.0, 1.0));
                 return C{std::move(in), [targets](Tape<double>&, const VV& v) {
                            return auv::prior_loss(v[0], VV{v[1], v[2], v[3], v[4]}, targets);
                          }};
               }});
  s.push_back({"weighted total", [](Rng& r, std::uint64_t) {
                 const int n = dim_in(r, 2, 8);
                 Tensor<double> target = random_tensor(r, {n, 9});
                 auv::LossWeights w{r.uniform(0, 2), r.uniform(0, 2), r.uniform(0, 100), r.uniform(0, 100), r.uniform(0, 2)};
                 const Tensor<double> p = clustered_points(r, n, 0.03);
                 auv::NeighborSet nb = auv::find_neighbors(p, auv::choose_subset(n, n, r), 0.02);
                 const auto targets = auv::prior_targets(auv::Category::Head, p, unit_normals(r, n));
                 return C{{random_tensor(r, {n, 9}), smooth_loss_uv(r, p, nb), random_tensor(r, {n, 1}, 0.0, 1.0)},
                          [target, w, nb, targets](Tape<double>& t, const VV& v) {
                            auto terms = auv::recon_losses(v[0], target);
                            terms.smooth = auv::smoothness_loss(v[1], nb);
                            terms.prior = auv::prior_loss(v[1], VV{v[2], ops::one_minus(v[2])}, targets);
                            return auv::total_loss(t, terms, w);
                          }};
               }});
  s.push_back({"chair mask composition", [](Rng& r, std::uint64_t k) {
                 const int n = dim_in(r, 1, 6);
                 const Tensor<double> ngt = unit_normals(r, n);
                 return C{{random_tensor(r, {n, 1}, 0.05, 0.95), random_tensor(r, {n, 3}, -2, 2)},
                          [ngt, k](Tape<double>& t, const VV& v) {
                            const auto m = auv::chair_mask_compose(v[0], v[1], t.constant(ngt));
                            return weighted_sum(ops::concat_cols(m), k);
                          }};
               }});
  s.push_back({"basis combination", [](Rng& r, std::uint64_t k) {
                 const int n = dim_in(r, 1, 5), nk = dim_in(r, 1, 6), c = dim_in(r, 1, 9);
                 return C{{random_tensor(r, {n, nk}), random_tensor(r, {c, nk})},
                          [k](Tape<double>&, const VV& v) { return weighted_sum(auv::combine_basis(v[0], v[1]), k); }};
               }});
  s.push_back({"masked blend", [](Rng& r, std::uint64_t k) {
                 const int n = dim_in(r, 1, 5), c = dim_in(r, 1, 9), K = dim_in(r, 1, 4);
                 std::vector<Tensor<double>> in;
                 for (int i = 0; i < K; ++i) in.push_back(random_tensor(r, {n, c}));
                 for (int i = 0; i < K; ++i) in.push_back(random_tensor(r, {n, 1}, 0.0, 1.0));
                 return C{std::move(in), [K, k](Tape<double>&, const VV& v) {
                            return weighted_sum(auv::blend_masked(VV(v.begin(), v.begin() + K), VV(v.begin() + K, v.end())), k);
                          }};
               }});
  return s;
}

}  // namespace auvtest
