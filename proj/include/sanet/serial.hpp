#pragma once

#include <span>

#include "sanet/dagrnn.hpp"
#include "sanet/layers.hpp"

// Single-threaded reference kernels. They are written for clarity rather
// than speed and exist so the parallel paths have something to be compared
// against in tests and benchmarks.
namespace sanet::serial {

// Direct seven-deep loop nest over (oi, oj, co, ki, kj, ci).
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Conv2dParams<T>& params);

// Directions in sequence; per-vertex arithmetic via the Tensor primitives.
template <typename T>
Tensor<T> dagrnn_forward(const Tensor<T>& x, std::span<const LatticeDag> dags,
                         const DagRnnParams<T>& params);

}  // namespace sanet::serial
