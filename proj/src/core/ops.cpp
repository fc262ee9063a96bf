#include "auv/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>

namespace auv::ops {
namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapC = Eigen::Map<const RowMat<T>>;
template <class T>
using Map = Eigen::Map<RowMat<T>>;

template <class T>
Tape<T>& tape_of(const char* op, std::initializer_list<const Var<T>*> vars) {
  Tape<T>* t = nullptr;
  for (const Var<T>* v : vars) {
    if (!v->valid()) throw Error(ErrorKind::InvalidArgument, std::string(op) + ": operand not attached to a tape");
    if (t && v->tape() != t) throw Error(ErrorKind::InvalidArgument, std::string(op) + ": operands on different tapes");
    t = v->tape();
  }
  return *t;
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

void require_rank(const char* op, const Shape& s, int rank) {
  if (static_cast<int>(s.size()) != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(s));
  }
}

}  // namespace

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = tape_of("matmul", {&a, &b});
  const Tensor<T>& A = a.value();
  const Tensor<T>& B = b.value();
  if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0)) shape_fail("matmul", A.shape(), B.shape());
  const int m = A.dim(0), k = A.dim(1), n = B.dim(1);
  Tensor<T> out({m, n});
  Map<T>(out.data(), m, n).noalias() = MapC<T>(A.data(), m, k) * MapC<T>(B.data(), k, n);
  const int ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {ia, ib}, [ia, ib, m, k, n](Tape<T>& t, const Tensor<T>& g) {
    MapC<T> G(g.data(), m, n);
    if (T* ga = t.grad_ptr(ia)) {
      Map<T>(ga, m, k).noalias() += G * MapC<T>(t.value(ib).data(), k, n).transpose();
    }
    if (T* gb = t.grad_ptr(ib)) {
      Map<T>(gb, k, n).noalias() += MapC<T>(t.value(ia).data(), m, k).transpose() * G;
    }
  });
}

template <class T>
Var<T> transpose(const Var<T>& a) {
  Tape<T>& tape = tape_of("transpose", {&a});
  const Tensor<T>& A = a.value();
  require_rank("transpose", A.shape(), 2);
  const int m = A.dim(0), n = A.dim(1);
  Tensor<T> out({n, m});
  Map<T>(out.data(), n, m) = MapC<T>(A.data(), m, n).transpose();
  const int ia = a.id();
  return tape.record(std::move(out), {ia}, [ia, m, n](Tape<T>& t, const Tensor<T>& g) {
    Map<T>(t.grad_ptr(ia), m, n) += MapC<T>(g.data(), n, m).transpose();
  });
}

namespace {
template <class T, class F>
Var<T> binary_same(const char* op, const Var<T>& a, const Var<T>& b, F f, T sa, T sb_for_sub, bool is_mul) {
  Tape<T>& tape = tape_of(op, {&a, &b});
  const Tensor<T>& A = a.value();
  const Tensor<T>& B = b.value();
  if (A.shape() != B.shape()) shape_fail(op, A.shape(), B.shape());
  Tensor<T> out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = f(A[i], B[i]);
  const int ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {ia, ib}, [ia, ib, sa, sb_for_sub, is_mul](Tape<T>& t, const Tensor<T>& g) {
    if (is_mul) {
      const Tensor<T>& av = t.value(ia);
      const Tensor<T>& bv = t.value(ib);
      if (T* ga = t.grad_ptr(ia))
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      if (T* gb = t.grad_ptr(ib))
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      return;
    }
    if (T* ga = t.grad_ptr(ia))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += sa * g[i];
    if (T* gb = t.grad_ptr(ib))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += sb_for_sub * g[i];
  });
}
}  // namespace

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return binary_same<T>("add", a, b, [](T x, T y) { return x + y; }, T{1}, T{1}, false);
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return binary_same<T>("sub", a, b, [](T x, T y) { return x - y; }, T{1}, T{-1}, false);
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return binary_same<T>("mul", a, b, [](T x, T y) { return x * y; }, T{0}, T{0}, true);
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  Tape<T>& tape = tape_of("scale", {&a});
  Tensor<T> out(a.shape());
  const Tensor<T>& A = a.value();
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] * s;
  const int ia = a.id();
  return tape.record(std::move(out), {ia}, [ia, s](Tape<T>& t, const Tensor<T>& g) {
    T* ga = t.grad_ptr(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
  });
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T s) {
  Tape<T>& tape = tape_of("add_scalar", {&a});
  Tensor<T> out(a.shape());
  const Tensor<T>& A = a.value();
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] + s;
  const int ia = a.id();
  return tape.record(std::move(out), {ia}, [ia](Tape<T>& t, const Tensor<T>& g) {
    T* ga = t.grad_ptr(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

template <class T>
Var<T> one_minus(const Var<T>& a) {
  return add_scalar(scale(a, T{-1}), T{1});
}

template <class T>
Var<T> add_row(const Var<T>& a, const Var<T>& row) {
  Tape<T>& tape = tape_of("add_row", {&a, &row});
  const Tensor<T>& A = a.value();
  const Tensor<T>& R = row.value();
  if (A.rank() != 2 || R.size() != static_cast<std::size_t>(A.dim(1)) ||
      (R.rank() == 2 && R.dim(0) != 1) || R.rank() > 2) {
    shape_fail("add_row", A.shape(), R.shape());
  }
  const int m = A.dim(0), n = A.dim(1);
  Tensor<T> out(A.shape());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(i, j) = A.at(i, j) + R[static_cast<std::size_t>(j)];
  const int ia = a.id(), ir = row.id();
  return tape.record(std::move(out), {ia, ir}, [ia, ir, m, n](Tape<T>& t, const Tensor<T>& g) {
    if (T* ga = t.grad_ptr(ia))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (T* gr = t.grad_ptr(ir))
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) gr[j] += g[static_cast<std::size_t>(i) * n + j];
  });
}

template <class T>
Var<T> mul_col(const Var<T>& a, const Var<T>& col) {
  Tape<T>& tape = tape_of("mul_col", {&a, &col});
  const Tensor<T>& A = a.value();
  const Tensor<T>& C = col.value();
  if (A.rank() != 2 || C.rank() != 2 || C.dim(1) != 1 || C.dim(0) != A.dim(0)) {
    shape_fail("mul_col", A.shape(), C.shape());
  }
  const int m = A.dim(0), n = A.dim(1);
  Tensor<T> out(A.shape());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(i, j) = A.at(i, j) * C[static_cast<std::size_t>(i)];
  const int ia = a.id(), ic = col.id();
  return tape.record(std::move(out), {ia, ic}, [ia, ic, m, n](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& av = t.value(ia);
    const Tensor<T>& cv = t.value(ic);
    if (T* ga = t.grad_ptr(ia))
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const std::size_t k = static_cast<std::size_t>(i) * n + j;
          ga[k] += g[k] * cv[static_cast<std::size_t>(i)];
        }
    if (T* gc = t.grad_ptr(ic))
      for (int i = 0; i < m; ++i) {
        T acc{0};
        for (int j = 0; j < n; ++j) {
          const std::size_t k = static_cast<std::size_t>(i) * n + j;
          acc += g[k] * av[k];
        }
        gc[i] += acc;
      }
  });
}

template <class T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  Tape<T>& tape = tape_of("leaky_relu", {&a});
  const Tensor<T>& x = a.value();
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : slope * x[i];
  const int ia = a.id();
  return tape.record(std::move(y), {ia}, [ia, slope](Tape<T>& t, const Tensor<T>& g) {
    T* ga = t.grad_ptr(ia);
    const Tensor<T>& xv = t.value(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += xv[i] > T{0} ? g[i] : slope * g[i];
  });
}

namespace {
template <class T>
T sigmoid_scalar(T x) {
  // Split by sign so exp never overflows.
  if (x >= T{0}) {
    const T e = std::exp(-x);
    return T{1} / (T{1} + e);
  }
  const T e = std::exp(x);
  return e / (T{1} + e);
}
}  // namespace

template <class T>
Var<T> sigmoid(const Var<T>& a) {
  Tape<T>& tape = tape_of("sigmoid", {&a});
  const Tensor<T>& x = a.value();
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid_scalar(x[i]);
  const int ia = a.id();
  return tape.record(std::move(y), {ia}, [ia](Tape<T>& t, const Tensor<T>& g) {
    T* ga = t.grad_ptr(ia);
    const Tensor<T>& xv = t.value(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T s = sigmoid_scalar(xv[i]);
      ga[i] += g[i] * s * (T{1} - s);
    }
  });
}

template <class T>
Var<T> tanh(const Var<T>& a) {
  Tape<T>& tape = tape_of("tanh", {&a});
  const Tensor<T>& x = a.value();
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
  const int ia = a.id();
  return tape.record(std::move(y), {ia}, [ia](Tape<T>& t, const Tensor<T>& g) {
    T* ga = t.grad_ptr(ia);
    const Tensor<T>& xv = t.value(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T th = std::tanh(xv[i]);
      ga[i] += g[i] * (T{1} - th * th);
    }
  });
}

template <class T>
Var<T> square(const Var<T>& a) {
  Tape<T>& tape = tape_of("square", {&a});
  const Tensor<T>& x = a.value();
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * x[i];
  const int ia = a.id();
  return tape.record(std::move(y), {ia}, [ia](Tape<T>& t, const Tensor<T>& g) {
    T* ga = t.grad_ptr(ia);
    const Tensor<T>& xv = t.value(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += T{2} * xv[i] * g[i];
  });
}

template <class T>
Var<T> abs(const Var<T>& a) {
  Tape<T>& tape = tape_of("abs", {&a});
  const Tensor<T>& x = a.value();
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::abs(x[i]);
  const int ia = a.id();
  return tape.record(std::move(y), {ia}, [ia](Tape<T>& t, const Tensor<T>& g) {
    T* ga = t.grad_ptr(ia);
    const Tensor<T>& xv = t.value(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T s = xv[i] > T{0} ? T{1} : (xv[i] < T{0} ? T{-1} : T{0});
      ga[i] += s * g[i];
    }
  });
}

template <class T>
Var<T> sum(const Var<T>& a) {
  Tape<T>& tape = tape_of("sum", {&a});
  const Tensor<T>& x = a.value();
  T acc{0};
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i];
  const int ia = a.id();
  return tape.record(Tensor<T>::scalar(acc), {ia}, [ia](Tape<T>& t, const Tensor<T>& g) {
    T* ga = t.grad_ptr(ia);
    const std::size_t n = t.value(ia).size();
    for (std::size_t i = 0; i < n; ++i) ga[i] += g[0];
  });
}

template <class T>
Var<T> mean(const Var<T>& a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean: empty tensor " + shape_str(a.shape()));
  return scale(sum(a), T{1} / static_cast<T>(n));
}

template <class T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
  Tape<T>& tape = tape_of("mse", {&a, &b});
  const Tensor<T>& A = a.value();
  const Tensor<T>& B = b.value();
  if (A.shape() != B.shape()) shape_fail("mse", A.shape(), B.shape());
  if (A.empty()) throw ShapeError("mse: empty operands " + shape_str(A.shape()));
  T acc{0};
  for (std::size_t i = 0; i < A.size(); ++i) {
    const T d = A[i] - B[i];
    acc += d * d;
  }
  const T inv_n = T{1} / static_cast<T>(A.size());
  const int ia = a.id(), ib = b.id();
  return tape.record(Tensor<T>::scalar(acc * inv_n), {ia, ib}, [ia, ib, inv_n](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& av = t.value(ia);
    const Tensor<T>& bv = t.value(ib);
    const T c = T{2} * inv_n * g[0];
    if (T* ga = t.grad_ptr(ia))
      for (std::size_t i = 0; i < av.size(); ++i) ga[i] += c * (av[i] - bv[i]);
    if (T* gb = t.grad_ptr(ib))
      for (std::size_t i = 0; i < av.size(); ++i) gb[i] -= c * (av[i] - bv[i]);
  });
}

template <class T>
Var<T> row_sum(const Var<T>& a) {
  Tape<T>& tape = tape_of("row_sum", {&a});
  const Tensor<T>& A = a.value();
  require_rank("row_sum", A.shape(), 2);
  const int m = A.dim(0), n = A.dim(1);
  Tensor<T> out({m, 1});
  for (int i = 0; i < m; ++i) {
    T acc{0};
    for (int j = 0; j < n; ++j) acc += A.at(i, j);
    out[static_cast<std::size_t>(i)] = acc;
  }
  const int ia = a.id();
  return tape.record(std::move(out), {ia}, [ia, m, n](Tape<T>& t, const Tensor<T>& g) {
    T* ga = t.grad_ptr(ia);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) ga[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(i)];
  });
}

template <class T>
Var<T> row_norm(const Var<T>& a) {
  Tape<T>& tape = tape_of("row_norm", {&a});
  const Tensor<T>& A = a.value();
  require_rank("row_norm", A.shape(), 2);
  const int m = A.dim(0), n = A.dim(1);
  Tensor<T> out({m, 1});
  for (int i = 0; i < m; ++i) {
    T acc{0};
    for (int j = 0; j < n; ++j) acc += A.at(i, j) * A.at(i, j);
    out[static_cast<std::size_t>(i)] = std::sqrt(acc);
  }
  const int ia = a.id();
  return tape.record(std::move(out), {ia}, [ia, m, n](Tape<T>& t, const Tensor<T>& g) {
    T* ga = t.grad_ptr(ia);
    const Tensor<T>& av = t.value(ia);
    for (int i = 0; i < m; ++i) {
      T acc{0};
      for (int j = 0; j < n; ++j) acc += av.at(i, j) * av.at(i, j);
      const T norm = std::sqrt(acc);
      if (norm <= T{0}) continue;
      const T c = g[static_cast<std::size_t>(i)] / norm;
      for (int j = 0; j < n; ++j) {
        const std::size_t k = static_cast<std::size_t>(i) * n + j;
        ga[k] += c * av[k];
      }
    }
  });
}

template <class T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  Tape<T>& tape = *parts.front().tape();
  const int m = parts.front().value().rank() == 2 ? parts.front().dim(0) : -1;
  int total = 0;
  std::vector<int> ids, widths;
  for (const auto& p : parts) {
    tape_of("concat_cols", {&p});
    if (p.tape() != &tape) throw Error(ErrorKind::InvalidArgument, "concat_cols: operands on different tapes");
    if (p.value().rank() != 2 || p.dim(0) != m) shape_fail("concat_cols", parts.front().shape(), p.shape());
    ids.push_back(p.id());
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  Tensor<T> out({m, total});
  int off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor<T>& P = parts[k].value();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < widths[k]; ++j) out.at(i, off + j) = P.at(i, j);
    off += widths[k];
  }
  return tape.record(std::move(out), ids, [ids, widths, m, total](Tape<T>& t, const Tensor<T>& g) {
    int o = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (T* gp = t.grad_ptr(ids[k])) {
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < widths[k]; ++j)
            gp[static_cast<std::size_t>(i) * widths[k] + j] += g[static_cast<std::size_t>(i) * total + o + j];
      }
      o += widths[k];
    }
  });
}

template <class T>
Var<T> slice_cols(const Var<T>& a, int begin, int end) {
  Tape<T>& tape = tape_of("slice_cols", {&a});
  const Tensor<T>& A = a.value();
  require_rank("slice_cols", A.shape(), 2);
  const int m = A.dim(0), n = A.dim(1);
  if (begin < 0 || end > n || begin >= end) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for " +
                     shape_str(A.shape()));
  }
  const int w = end - begin;
  Tensor<T> out({m, w});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < w; ++j) out.at(i, j) = A.at(i, begin + j);
  const int ia = a.id();
  return tape.record(std::move(out), {ia}, [ia, m, n, w, begin](Tape<T>& t, const Tensor<T>& g) {
    T* ga = t.grad_ptr(ia);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j) ga[static_cast<std::size_t>(i) * n + begin + j] += g[static_cast<std::size_t>(i) * w + j];
  });
}

template <class T>
Var<T> gather_rows(const Var<T>& a, const std::vector<int>& rows) {
  Tape<T>& tape = tape_of("gather_rows", {&a});
  const Tensor<T>& A = a.value();
  require_rank("gather_rows", A.shape(), 2);
  const int m = A.dim(0), n = A.dim(1);
  const int r = static_cast<int>(rows.size());
  Tensor<T> out({r, n});
  for (int i = 0; i < r; ++i) {
    const int src = rows[static_cast<std::size_t>(i)];
    if (src < 0 || src >= m) {
      throw ShapeError("gather_rows: row " + std::to_string(src) + " out of range for " + shape_str(A.shape()));
    }
    for (int j = 0; j < n; ++j) out.at(i, j) = A.at(src, j);
  }
  const int ia = a.id();
  return tape.record(std::move(out), {ia}, [ia, rows, n](Tape<T>& t, const Tensor<T>& g) {
    T* ga = t.grad_ptr(ia);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (int j = 0; j < n; ++j) ga[static_cast<std::size_t>(rows[i]) * n + j] += g[i * n + j];
  });
}

template <class T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  Tape<T>& tape = tape_of("reshape", {&a});
  Tensor<T> out = a.value().reshaped(std::move(shape));
  const int ia = a.id();
  return tape.record(std::move(out), {ia}, [ia](Tape<T>& t, const Tensor<T>& g) {
    T* ga = t.grad_ptr(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

template <class T>
Var<T> grid_sample(const Var<T>& table, const Var<T>& uv, int size) {
  Tape<T>& tape = tape_of("grid_sample", {&table, &uv});
  const Tensor<T>& G = table.value();
  const Tensor<T>& Q = uv.value();
  if (size < 1 || G.rank() != 2 || G.dim(0) != size * size || Q.rank() != 2 || Q.dim(1) != 2) {
    shape_fail("grid_sample", G.shape(), Q.shape());
  }
  const int P = Q.dim(0), C = G.dim(1);
  struct Tap {
    int r00, r01, r10, r11;
    T fx, fy;
    bool in_x, in_y;
  };
  std::vector<Tap> taps(static_cast<std::size_t>(P));
  Tensor<T> out({P, C});
  const T hi = static_cast<T>(size - 1);
  for (int p = 0; p < P; ++p) {
    T x = (Q.at(p, 0) + T(0.5)) * size - T(0.5);
    T y = (Q.at(p, 1) + T(0.5)) * size - T(0.5);
    Tap tp{};
    tp.in_x = x > T{0} && x < hi;
    tp.in_y = y > T{0} && y < hi;
    x = std::clamp(x, T{0}, hi);
    y = std::clamp(y, T{0}, hi);
    const int x0 = std::min(static_cast<int>(x), size - 1), y0 = std::min(static_cast<int>(y), size - 1);
    const int x1 = std::min(x0 + 1, size - 1), y1 = std::min(y0 + 1, size - 1);
    tp.fx = x - x0;
    tp.fy = y - y0;
    tp.r00 = y0 * size + x0;
    tp.r01 = y0 * size + x1;
    tp.r10 = y1 * size + x0;
    tp.r11 = y1 * size + x1;
    taps[static_cast<std::size_t>(p)] = tp;
    const T w00 = (1 - tp.fx) * (1 - tp.fy), w01 = tp.fx * (1 - tp.fy), w10 = (1 - tp.fx) * tp.fy, w11 = tp.fx * tp.fy;
    for (int c = 0; c < C; ++c) {
      out.at(p, c) = w00 * G.at(tp.r00, c) + w01 * G.at(tp.r01, c) + w10 * G.at(tp.r10, c) + w11 * G.at(tp.r11, c);
    }
  }
  const int it = table.id(), iq = uv.id();
  return tape.record(std::move(out), {it, iq}, [it, iq, P, C, size, taps = std::move(taps)](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& G = t.value(it);
    T* gt = t.grad_ptr(it);
    T* gq = t.grad_ptr(iq);
    for (int p = 0; p < P; ++p) {
      const Tap& tp = taps[static_cast<std::size_t>(p)];
      const T* gp = g.data() + static_cast<std::size_t>(p) * C;
      if (gt) {
        const T w00 = (1 - tp.fx) * (1 - tp.fy), w01 = tp.fx * (1 - tp.fy), w10 = (1 - tp.fx) * tp.fy,
                w11 = tp.fx * tp.fy;
        for (int c = 0; c < C; ++c) {
          gt[static_cast<std::size_t>(tp.r00) * C + c] += w00 * gp[c];
          gt[static_cast<std::size_t>(tp.r01) * C + c] += w01 * gp[c];
          gt[static_cast<std::size_t>(tp.r10) * C + c] += w10 * gp[c];
          gt[static_cast<std::size_t>(tp.r11) * C + c] += w11 * gp[c];
        }
      }
      if (gq) {
        T du = 0, dv = 0;
        for (int c = 0; c < C; ++c) {
          const T a = G.at(tp.r00, c), b = G.at(tp.r01, c), d = G.at(tp.r10, c), e = G.at(tp.r11, c);
          du += gp[c] * ((1 - tp.fy) * (b - a) + tp.fy * (e - d));
          dv += gp[c] * ((1 - tp.fx) * (d - a) + tp.fx * (e - b));
        }
        if (tp.in_x) gq[2 * static_cast<std::size_t>(p)] += du * size;
        if (tp.in_y) gq[2 * static_cast<std::size_t>(p) + 1] += dv * size;
      }
    }
  });
}

namespace {

struct ConvGeom {
  int cin, cout;
  std::array<int, 3> in;      // D, H, W
  std::array<int, 3> kernel;  // kd, kh, kw
  std::array<int, 3> stride;
  std::array<int, 3> pad;
  std::array<int, 3> out;

  int patch() const { return cin * kernel[0] * kernel[1] * kernel[2]; }
  int positions() const { return out[0] * out[1] * out[2]; }
};

// cols[p, c*kk + k] = x[c, z, y, x] at the receptive position, 0 in padding.
template <class T>
void im2col(const T* x, const ConvGeom& g, T* cols) {
  const int K = g.patch();
  int p = 0;
  for (int oz = 0; oz < g.out[0]; ++oz)
    for (int oy = 0; oy < g.out[1]; ++oy)
      for (int ox = 0; ox < g.out[2]; ++ox, ++p) {
        T* row = cols + static_cast<std::size_t>(p) * K;
        int col = 0;
        for (int c = 0; c < g.cin; ++c)
          for (int kz = 0; kz < g.kernel[0]; ++kz) {
            const int iz = oz * g.stride[0] - g.pad[0] + kz;
            for (int ky = 0; ky < g.kernel[1]; ++ky) {
              const int iy = oy * g.stride[1] - g.pad[1] + ky;
              for (int kx = 0; kx < g.kernel[2]; ++kx, ++col) {
                const int ix = ox * g.stride[2] - g.pad[2] + kx;
                const bool inside = iz >= 0 && iz < g.in[0] && iy >= 0 && iy < g.in[1] && ix >= 0 && ix < g.in[2];
                row[col] = inside ? x[((static_cast<std::size_t>(c) * g.in[0] + iz) * g.in[1] + iy) * g.in[2] + ix] : T{0};
              }
            }
          }
      }
}

template <class T>
void col2im_add(const T* cols, const ConvGeom& g, T* x) {
  const int K = g.patch();
  int p = 0;
  for (int oz = 0; oz < g.out[0]; ++oz)
    for (int oy = 0; oy < g.out[1]; ++oy)
      for (int ox = 0; ox < g.out[2]; ++ox, ++p) {
        const T* row = cols + static_cast<std::size_t>(p) * K;
        int col = 0;
        for (int c = 0; c < g.cin; ++c)
          for (int kz = 0; kz < g.kernel[0]; ++kz) {
            const int iz = oz * g.stride[0] - g.pad[0] + kz;
            for (int ky = 0; ky < g.kernel[1]; ++ky) {
              const int iy = oy * g.stride[1] - g.pad[1] + ky;
              for (int kx = 0; kx < g.kernel[2]; ++kx, ++col) {
                const int ix = ox * g.stride[2] - g.pad[2] + kx;
                if (iz >= 0 && iz < g.in[0] && iy >= 0 && iy < g.in[1] && ix >= 0 && ix < g.in[2]) {
                  x[((static_cast<std::size_t>(c) * g.in[0] + iz) * g.in[1] + iy) * g.in[2] + ix] += row[col];
                }
              }
            }
          }
      }
}

template <class T>
Var<T> conv_impl(const char* op, const Var<T>& x, const Var<T>& w, const Var<T>& b, ConvGeom geom, Shape out_shape) {
  Tape<T>& tape = *x.tape();
  const int P = geom.positions(), K = geom.patch(), Co = geom.cout;
  std::vector<T> cols(static_cast<std::size_t>(P) * K);
  im2col(x.value().data(), geom, cols.data());
  Tensor<T> out(std::move(out_shape));
  Map<T> O(out.data(), Co, P);
  O.noalias() = MapC<T>(w.value().data(), Co, K) * MapC<T>(cols.data(), P, K).transpose();
  const Tensor<T>& bv = b.value();
  for (int c = 0; c < Co; ++c) O.row(c).array() += bv[static_cast<std::size_t>(c)];
  (void)op;
  const int ix = x.id(), iw = w.id(), ib = b.id();
  return tape.record(std::move(out), {ix, iw, ib},
                     [ix, iw, ib, geom, cols = std::move(cols)](Tape<T>& t, const Tensor<T>& g) {
                       const int P = geom.positions(), K = geom.patch(), Co = geom.cout;
                       MapC<T> G(g.data(), Co, P);
                       if (T* gw = t.grad_ptr(iw)) {
                         Map<T>(gw, Co, K).noalias() += G * MapC<T>(cols.data(), P, K);
                       }
                       if (T* gb = t.grad_ptr(ib)) {
                         for (int c = 0; c < Co; ++c) {
                           T acc{0};
                           for (int p = 0; p < P; ++p) acc += G(c, p);
                           gb[c] += acc;
                         }
                       }
                       if (T* gx = t.grad_ptr(ix)) {
                         RowMat<T> dcols = G.transpose() * MapC<T>(t.value(iw).data(), Co, K);
                         col2im_add(dcols.data(), geom, gx);
                       }
                     });
}

int conv_out(int in, int k, int s, int p) { return (in + 2 * p - k) / s + 1; }

}  // namespace

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad) {
  tape_of("conv2d", {&x, &w, &b});
  const Tensor<T>& X = x.value();
  const Tensor<T>& W = w.value();
  if (X.rank() != 3 || W.rank() != 4 || W.dim(1) != X.dim(0) || W.dim(2) != W.dim(3)) {
    shape_fail("conv2d", X.shape(), W.shape());
  }
  if (b.value().size() != static_cast<std::size_t>(W.dim(0))) shape_fail("conv2d", W.shape(), b.shape());
  if (stride < 1 || pad < 0) throw ShapeError("conv2d: stride must be >= 1 and pad >= 0");
  ConvGeom g{};
  g.cin = X.dim(0);
  g.cout = W.dim(0);
  g.in = {1, X.dim(1), X.dim(2)};
  g.kernel = {1, W.dim(2), W.dim(3)};
  g.stride = {1, stride, stride};
  g.pad = {0, pad, pad};
  g.out = {1, conv_out(X.dim(1), W.dim(2), stride, pad), conv_out(X.dim(2), W.dim(3), stride, pad)};
  if (g.out[1] < 1 || g.out[2] < 1) shape_fail("conv2d", X.shape(), W.shape());
  return conv_impl("conv2d", x, w, b, g, Shape{g.cout, g.out[1], g.out[2]});
}

template <class T>
Var<T> conv3d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad) {
  tape_of("conv3d", {&x, &w, &b});
  const Tensor<T>& X = x.value();
  const Tensor<T>& W = w.value();
  if (X.rank() != 4 || W.rank() != 5 || W.dim(1) != X.dim(0) || W.dim(2) != W.dim(3) || W.dim(3) != W.dim(4)) {
    shape_fail("conv3d", X.shape(), W.shape());
  }
  if (b.value().size() != static_cast<std::size_t>(W.dim(0))) shape_fail("conv3d", W.shape(), b.shape());
  if (stride < 1 || pad < 0) throw ShapeError("conv3d: stride must be >= 1 and pad >= 0");
  ConvGeom g{};
  g.cin = X.dim(0);
  g.cout = W.dim(0);
  g.in = {X.dim(1), X.dim(2), X.dim(3)};
  g.kernel = {W.dim(2), W.dim(3), W.dim(4)};
  g.stride = {stride, stride, stride};
  g.pad = {pad, pad, pad};
  for (int a = 0; a < 3; ++a) g.out[a] = conv_out(g.in[a], g.kernel[a], stride, pad);
  if (g.out[0] < 1 || g.out[1] < 1 || g.out[2] < 1) shape_fail("conv3d", X.shape(), W.shape());
  return conv_impl("conv3d", x, w, b, g, Shape{g.cout, g.out[0], g.out[1], g.out[2]});
}

#define AUV_INSTANTIATE_OPS(T)                                                                    \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                           \
  template Var<T> transpose(const Var<T>&);                                                       \
  template Var<T> add(const Var<T>&, const Var<T>&);                                              \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                              \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                              \
  template Var<T> scale(const Var<T>&, T);                                                        \
  template Var<T> add_scalar(const Var<T>&, T);                                                   \
  template Var<T> one_minus(const Var<T>&);                                                       \
  template Var<T> add_row(const Var<T>&, const Var<T>&);                                          \
  template Var<T> mul_col(const Var<T>&, const Var<T>&);                                          \
  template Var<T> leaky_relu(const Var<T>&, T);                                                   \
  template Var<T> sigmoid(const Var<T>&);                                                         \
  template Var<T> tanh(const Var<T>&);                                                            \
  template Var<T> square(const Var<T>&);                                                          \
  template Var<T> abs(const Var<T>&);                                                             \
  template Var<T> sum(const Var<T>&);                                                             \
  template Var<T> mean(const Var<T>&);                                                            \
  template Var<T> mse(const Var<T>&, const Var<T>&);                                              \
  template Var<T> row_sum(const Var<T>&);                                                         \
  template Var<T> row_norm(const Var<T>&);                                                        \
  template Var<T> concat_cols(const std::vector<Var<T>>&);                                        \
  template Var<T> slice_cols(const Var<T>&, int, int);                                            \
  template Var<T> gather_rows(const Var<T>&, const std::vector<int>&);                            \
  template Var<T> reshape(const Var<T>&, Shape);                                                  \
  template Var<T> grid_sample(const Var<T>&, const Var<T>&, int);                                 \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);                  \
  template Var<T> conv3d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);

AUV_INSTANTIATE_OPS(float)
AUV_INSTANTIATE_OPS(double)

}  // namespace auv::ops
