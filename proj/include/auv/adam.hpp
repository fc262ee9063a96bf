#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "auv/tape.hpp"

namespace auv {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AdamState {
  AdamConfig config;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
  std::int64_t step = 0;
};

// One bias-corrected Adam update over `params`, reading each Parameter::grad.
// State buffers are created on the first call; later calls require the same
// parameter list (same count and shapes). Frozen parameters are skipped but
// keep their slot. Increments state.step by exactly one.
template <class T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state);

// Scales every gradient so the global L2 norm is at most max_norm. Returns the
// norm before clipping.
template <class T>
double clip_grad_norm(std::span<Parameter<T>* const> params, double max_norm);

extern template void adam_step<float>(std::span<Parameter<float>* const>, AdamState<float>&);
extern template void adam_step<double>(std::span<Parameter<double>* const>, AdamState<double>&);
extern template double clip_grad_norm<float>(std::span<Parameter<float>* const>, double);
extern template double clip_grad_norm<double>(std::span<Parameter<double>* const>, double);

}  // namespace auv
