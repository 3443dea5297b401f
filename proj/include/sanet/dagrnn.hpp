#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "sanet/lattice.hpp"
#include "sanet/layers.hpp"
#include "sanet/rng.hpp"
#include "sanet/tensor.hpp"

namespace sanet {

class StaleCacheError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Parameters of the recurrence over one directed graph:
//   h(v) = φ(U·x(v) + W·Σ_{u ∈ pred(v)} h(u) + b)
// A single W is shared by all predecessor offsets.
template <typename T>
struct DirectionParams {
  Direction direction = Direction::SE;
  Tensor<T> U;  // (hidden, input)
  Tensor<T> W;  // (hidden, hidden)
  Tensor<T> V;  // (output, hidden)
  Tensor<T> b;  // (hidden)
};

// One DirectionParams per swept graph plus the shared output bias:
//   y(v) = σ(Σ_m V_m·h_m(v) + c)
template <typename T>
struct DagRnnParams {
  std::vector<DirectionParams<T>> directions;
  Tensor<T> c;  // (output)
  Activation hidden_activation = Activation::relu;
  Activation output_activation = Activation::identity;

  std::size_t input_dim() const { return directions.at(0).U.dim(1); }
  std::size_t hidden_dim() const { return directions.at(0).U.dim(0); }
  std::size_t output_dim() const { return c.dim(0); }

  // Throws ShapeError unless every direction agrees on all three dims.
  void validate() const;
  std::uint64_t fingerprint() const;
};

// Uniform in [−s, s], s = 1/√fan-in. W's fan-in counts every predecessor
// slot since it multiplies their sum. Biases start at zero.
template <typename T>
DagRnnParams<T> init_dagrnn_params(std::size_t input, std::size_t hidden, std::size_t output,
                                   Connectivity connectivity, Rng& rng,
                                   std::span<const Direction> directions = kAllDirections);

template <typename T>
struct DagRnnActivations {
  Shape input_shape;
  std::uint64_t input_fingerprint = 0;
  std::uint64_t params_fingerprint = 0;
  std::vector<Tensor<T>> hidden;    // per direction, (H, W, hidden)
  std::vector<Tensor<T>> pred_sum;  // per direction, Σ_{u ∈ pred(v)} h(u)
  Tensor<T> output;                 // (H, W, output)
};

template <typename T>
struct DagRnnGrads {
  Tensor<T> input;
  std::vector<DirectionParams<T>> directions;
  Tensor<T> c;
};

// `dags` must contain a graph for every direction in `params` with the
// input's spatial extents. Directions run concurrently under OpenMP.
template <typename T>
DagRnnActivations<T> dagrnn_forward(const Tensor<T>& x, std::span<const LatticeDag> dags,
                                    const DagRnnParams<T>& params);

// Reverse-topological accumulation of dh over successors, then per-vertex
// parameter gradients and the error sent back to the input map.
template <typename T>
DagRnnGrads<T> dagrnn_backward(const Tensor<T>& x, const DagRnnActivations<T>& acts,
                               std::span<const LatticeDag> dags, const DagRnnParams<T>& params,
                               const Tensor<T>& upstream);

template <typename T>
std::uint64_t fingerprint(const Tensor<T>& t, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace sanet
