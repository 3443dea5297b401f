#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sanet/tensor.hpp"

namespace sanet {

enum class Activation { identity, relu, tanh, sigmoid };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Kernels are (kH, kW, C_in, C_out); bias is (C_out). Zero padding.
template <typename T>
struct Conv2dParams {
  Tensor<T> kernels;
  Tensor<T> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

template <typename T>
struct Conv2dGrads {
  Tensor<T> input;
  Tensor<T> kernels;
  Tensor<T> bias;
};

/// Weights are (D_out, D_in); bias is (D_out).
template <typename T>
struct FcParams {
  Tensor<T> weights;
  Tensor<T> bias;
};

template <typename T>
struct FcGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

// Flat input offset of the winning element for every pooled cell.
struct PoolRecord {
  Shape input_shape;
  std::size_t window = 0;
  std::size_t stride = 0;
  std::vector<std::uint32_t> argmax;
};

template <typename T>
struct PoolResult {
  Tensor<T> output;
  PoolRecord record;
};

template <typename T>
struct SoftmaxResult {
  T loss;
  Tensor<T> probs;
};

// ⌊(extent + 2·pad − kernel)/stride⌋ + 1, or throws when that is below 1.
std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, std::size_t stride,
                               std::size_t pad);
Shape conv2d_output_shape(const Shape& input, const Shape& kernels, std::size_t stride,
                          std::size_t pad);
Shape maxpool_output_shape(const Shape& input, std::size_t window, std::size_t stride);

// Cross-correlation plus bias. Output rows are distributed over OpenMP
// threads; serial::conv2d_forward is the loop-nest reference.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Conv2dParams<T>& params);

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Conv2dParams<T>& params,
                               const Tensor<T>& upstream);

// Ties resolve to the first element in row-major window order.
template <typename T>
PoolResult<T> maxpool_forward(const Tensor<T>& input, std::size_t window, std::size_t stride);

template <typename T>
Tensor<T> maxpool_backward(const PoolRecord& record, const Tensor<T>& upstream);

// y = W·flatten(x) + b
template <typename T>
Tensor<T> fc_forward(const Tensor<T>& input, const FcParams<T>& params);

template <typename T>
FcGrads<T> fc_backward(const Tensor<T>& input, const FcParams<T>& params, const Tensor<T>& upstream);

template <typename T>
Tensor<T> activation_forward(const Tensor<T>& input, Activation kind);

template <typename T>
inline T activate(T v, Activation kind) {
  switch (kind) {
    case Activation::identity: return v;
    case Activation::relu: return v > T(0) || std::isnan(v) ? v : T(0);
    case Activation::tanh: return std::tanh(v);
    case Activation::sigmoid: return T(1) / (T(1) + std::exp(-v));
  }
  return v;
}

// Derivative expressed through the forward output; relu'(0) is 0.
template <typename T>
inline T activation_slope(T y, Activation kind) {
  switch (kind) {
    case Activation::identity: return T(1);
    case Activation::relu: return y > T(0) ? T(1) : T(0);
    case Activation::tanh: return T(1) - y * y;
    case Activation::sigmoid: return y * (T(1) - y);
  }
  return T(0);
}

template <typename T>
Tensor<T> activation_backward(const Tensor<T>& output, const Tensor<T>& upstream, Activation kind);

template <typename T>
SoftmaxResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::size_t label);

template <typename T>
Tensor<T> softmax_cross_entropy_backward(const Tensor<T>& probs, std::size_t label);

// a's channels first.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
std::pair<Tensor<T>, Tensor<T>> concat_channels_backward(const Tensor<T>& upstream,
                                                         std::size_t channels_a);

}  // namespace sanet
