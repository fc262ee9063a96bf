#pragma once

#include <vector>

#include "auv/tape.hpp"

// Differentiable operations. Every op validates operand shapes and throws
// ShapeError naming the op and the offending shapes. Results are recorded on
// the tape of the first operand; all operands must share that tape.
namespace auv::ops {

// [m,k] x [k,n] -> [m,n]
template <class T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
// [m,n] -> [n,m]
template <class T> Var<T> transpose(const Var<T>& a);

template <class T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> scale(const Var<T>& a, T s);
template <class T> Var<T> add_scalar(const Var<T>& a, T s);
// 1 - a
template <class T> Var<T> one_minus(const Var<T>& a);

// [m,n] + [n] (or [1,n]) broadcast over rows.
template <class T> Var<T> add_row(const Var<T>& a, const Var<T>& row);
// [m,n] * [m,1]: scales row i by c[i].
template <class T> Var<T> mul_col(const Var<T>& a, const Var<T>& col);

template <class T> Var<T> leaky_relu(const Var<T>& a, T slope);
template <class T> Var<T> sigmoid(const Var<T>& a);
template <class T> Var<T> tanh(const Var<T>& a);
template <class T> Var<T> square(const Var<T>& a);
template <class T> Var<T> abs(const Var<T>& a);

template <class T> Var<T> sum(const Var<T>& a);
template <class T> Var<T> mean(const Var<T>& a);
// Mean over all elements of (a - b)^2.
template <class T> Var<T> mse(const Var<T>& a, const Var<T>& b);
// Sum over the last axis of a rank-2 tensor: [m,n] -> [m,1].
template <class T> Var<T> row_sum(const Var<T>& a);
// Euclidean norm of each row: [m,n] -> [m,1]. Subgradient 0 at the origin.
template <class T> Var<T> row_norm(const Var<T>& a);

template <class T> Var<T> concat_cols(const std::vector<Var<T>>& parts);
// Columns [begin, end) of a rank-2 tensor.
template <class T> Var<T> slice_cols(const Var<T>& a, int begin, int end);
template <class T> Var<T> gather_rows(const Var<T>& a, const std::vector<int>& rows);
template <class T> Var<T> reshape(const Var<T>& a, Shape shape);

// Bilinear lookup in a size x size table of C-vectors ([size*size, C], row
// index y*size + x) at uv in [-0.5,0.5]^2 with texel centres at
// (i + 0.5)/size - 0.5; coordinates clamp at the border. uv: [P,2] -> [P,C].
template <class T> Var<T> grid_sample(const Var<T>& table, const Var<T>& uv, int size);

// Single-sample convolutions. x: [Cin,H,W], w: [Cout,Cin,k,k], b: [Cout].
template <class T> Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad);
// x: [Cin,D,H,W], w: [Cout,Cin,k,k,k], b: [Cout].
template <class T> Var<T> conv3d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad);

}  // namespace auv::ops
