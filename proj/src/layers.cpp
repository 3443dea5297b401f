#include "sanet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sanet {

const char* to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "unknown";
}

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, std::size_t stride,
                               std::size_t pad) {
  if (stride == 0) throw ShapeError("stride must be positive");
  const std::size_t padded = extent + 2 * pad;
  if (kernel == 0 || kernel > padded) {
    throw ShapeError("kernel " + std::to_string(kernel) + " exceeds padded extent " +
                     std::to_string(padded));
  }
  return (padded - kernel) / stride + 1;
}

Shape conv2d_output_shape(const Shape& input, const Shape& kernels, std::size_t stride,
                          std::size_t pad) {
  if (input.rank() != 3 || kernels.rank() != 4) {
    throw ShapeError("conv2d expects (H, W, C) input and (kH, kW, Cin, Cout) kernels, got " +
                     input.str() + " and " + kernels.str());
  }
  if (input[2] != kernels[2]) {
    throw ShapeError("conv2d channel mismatch: input " + input.str() + " kernels " + kernels.str());
  }
  return Shape{conv_output_extent(input[0], kernels[0], stride, pad),
               conv_output_extent(input[1], kernels[1], stride, pad), kernels[3]};
}

Shape maxpool_output_shape(const Shape& input, std::size_t window, std::size_t stride) {
  if (input.rank() != 3) throw ShapeError("maxpool expects (H, W, C) input, got " + input.str());
  if (window == 0 || window > input[0] || window > input[1]) {
    throw ShapeError("pool window " + std::to_string(window) + " larger than input " + input.str());
  }
  return Shape{conv_output_extent(input[0], window, stride, 0),
               conv_output_extent(input[1], window, stride, 0), input[2]};
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Conv2dParams<T>& p) {
  const Shape out_shape = conv2d_output_shape(input.shape(), p.kernels.shape(), p.stride, p.padding);
  if (p.bias.shape() != Shape{p.kernels.dim(3)}) {
    throw ShapeError("conv2d bias " + p.bias.shape().str() + " does not match kernels " +
                     p.kernels.shape().str());
  }
  const auto H = static_cast<long>(input.dim(0)), W = static_cast<long>(input.dim(1));
  const std::size_t cin = input.dim(2), cout = p.kernels.dim(3);
  const std::size_t kh = p.kernels.dim(0), kw = p.kernels.dim(1);
  const long oh = static_cast<long>(out_shape[0]);
  const std::size_t ow = out_shape[1];
  const auto pad = static_cast<long>(p.padding), stride = static_cast<long>(p.stride);
  Tensor<T> out(out_shape);
  const T* x = input.raw();
  const T* k = p.kernels.raw();
  T* y = out.raw();

#pragma omp parallel for schedule(static) if (oh * static_cast<long>(ow * cout * kh * kw * cin) > 200000)
  for (long oi = 0; oi < oh; ++oi) {
    for (std::size_t oj = 0; oj < ow; ++oj) {
      T* cell = y + (static_cast<std::size_t>(oi) * ow + oj) * cout;
      for (std::size_t co = 0; co < cout; ++co) cell[co] = p.bias[co];
      for (std::size_t ki = 0; ki < kh; ++ki) {
        const long ii = oi * stride + static_cast<long>(ki) - pad;
        if (ii < 0 || ii >= H) continue;
        for (std::size_t kj = 0; kj < kw; ++kj) {
          const long jj = static_cast<long>(oj) * stride + static_cast<long>(kj) - pad;
          if (jj < 0 || jj >= W) continue;
          const T* px = x + (static_cast<std::size_t>(ii) * W + jj) * cin;
          const T* pk = k + (ki * kw + kj) * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const T xv = px[ci];
            const T* row = pk + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) cell[co] += xv * row[co];
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Conv2dParams<T>& p,
                               const Tensor<T>& upstream) {
  const Shape out_shape = conv2d_output_shape(input.shape(), p.kernels.shape(), p.stride, p.padding);
  if (upstream.shape() != out_shape) {
    throw ShapeError("conv2d upstream gradient " + upstream.shape().str() +
                     " does not match output " + out_shape.str());
  }
  const auto H = static_cast<long>(input.dim(0)), W = static_cast<long>(input.dim(1));
  const std::size_t cin = input.dim(2), cout = p.kernels.dim(3);
  const std::size_t kh = p.kernels.dim(0), kw = p.kernels.dim(1);
  const std::size_t oh = out_shape[0], ow = out_shape[1];
  const auto pad = static_cast<long>(p.padding), stride = static_cast<long>(p.stride);

  Conv2dGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(p.kernels.shape()), Tensor<T>(p.bias.shape())};
  const T* x = input.raw();
  const T* k = p.kernels.raw();
  const T* dy = upstream.raw();
  T* dx = g.input.raw();
  T* dk = g.kernels.raw();

  for (std::size_t oi = 0; oi < oh; ++oi) {
    for (std::size_t oj = 0; oj < ow; ++oj) {
      const T* gcell = dy + (oi * ow + oj) * cout;
      for (std::size_t co = 0; co < cout; ++co) g.bias[co] += gcell[co];
      for (std::size_t ki = 0; ki < kh; ++ki) {
        const long ii = static_cast<long>(oi) * stride + static_cast<long>(ki) - pad;
        if (ii < 0 || ii >= H) continue;
        for (std::size_t kj = 0; kj < kw; ++kj) {
          const long jj = static_cast<long>(oj) * stride + static_cast<long>(kj) - pad;
          if (jj < 0 || jj >= W) continue;
          const std::size_t xoff = (static_cast<std::size_t>(ii) * W + jj) * cin;
          const std::size_t koff = (ki * kw + kj) * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const T xv = x[xoff + ci];
            const T* krow = k + koff + ci * cout;
            T* dkrow = dk + koff + ci * cout;
            T acc = T(0);
            for (std::size_t co = 0; co < cout; ++co) {
              dkrow[co] += xv * gcell[co];
              acc += krow[co] * gcell[co];
            }
            dx[xoff + ci] += acc;
          }
        }
      }
    }
  }
  return g;
}

template <typename T>
PoolResult<T> maxpool_forward(const Tensor<T>& input, std::size_t window, std::size_t stride) {
  const Shape out_shape = maxpool_output_shape(input.shape(), window, stride);
  const std::size_t W = input.dim(1), C = input.dim(2);
  const std::size_t oh = out_shape[0], ow = out_shape[1];
  PoolResult<T> r{Tensor<T>(out_shape), PoolRecord{input.shape(), window, stride, {}}};
  r.record.argmax.resize(out_shape.numel());
  for (std::size_t oi = 0; oi < oh; ++oi) {
    for (std::size_t oj = 0; oj < ow; ++oj) {
      for (std::size_t c = 0; c < C; ++c) {
        std::size_t best = (oi * stride * W + oj * stride) * C + c;
        for (std::size_t wi = 0; wi < window; ++wi) {
          for (std::size_t wj = 0; wj < window; ++wj) {
            const std::size_t idx = ((oi * stride + wi) * W + oj * stride + wj) * C + c;
            if (!std::isnan(input[best]) && (input[idx] > input[best] || std::isnan(input[idx]))) best = idx;
          }
        }
        const std::size_t o = (oi * ow + oj) * C + c;
        r.output[o] = input[best];
        r.record.argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool_backward(const PoolRecord& record, const Tensor<T>& upstream) {
  if (upstream.size() != record.argmax.size()) {
    throw ShapeError("maxpool upstream gradient " + upstream.shape().str() +
                     " does not match the pooling record");
  }
  Tensor<T> dx(record.input_shape);
  for (std::size_t o = 0; o < record.argmax.size(); ++o) dx[record.argmax[o]] += upstream[o];
  return dx;
}

template <typename T>
Tensor<T> fc_forward(const Tensor<T>& input, const FcParams<T>& p) {
  if (p.weights.rank() != 2 || p.weights.dim(1) != input.size() ||
      p.bias.shape() != Shape{p.weights.dim(0)}) {
    throw ShapeError("fully-connected dimension mismatch: input " + input.shape().str() +
                     " weights " + p.weights.shape().str() + " bias " + p.bias.shape().str());
  }
  Tensor<T> y = p.bias;
  gemv_acc(p.weights.raw(), p.weights.dim(0), p.weights.dim(1), input.raw(), y.raw());
  return y;
}

template <typename T>
FcGrads<T> fc_backward(const Tensor<T>& input, const FcParams<T>& p, const Tensor<T>& upstream) {
  const std::size_t out = p.weights.dim(0), in = p.weights.dim(1);
  if (in != input.size() || upstream.size() != out) {
    throw ShapeError("fully-connected backward mismatch: input " + input.shape().str() +
                     " upstream " + upstream.shape().str() + " weights " + p.weights.shape().str());
  }
  FcGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(p.weights.shape()), upstream.reshaped(p.bias.shape())};
  gemv_t_acc(p.weights.raw(), out, in, upstream.raw(), g.input.raw());
  outer_acc(g.weights.raw(), out, in, upstream.raw(), input.raw());
  return g;
}

template <typename T>
Tensor<T> activation_forward(const Tensor<T>& input, Activation kind) {
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = activate(input[i], kind);
  return out;
}

template <typename T>
Tensor<T> activation_backward(const Tensor<T>& output, const Tensor<T>& upstream, Activation kind) {
  if (output.shape() != upstream.shape()) {
    throw ShapeError("activation backward mismatch: " + output.shape().str() + " vs " +
                     upstream.shape().str());
  }
  Tensor<T> dx(output.shape());
  for (std::size_t i = 0; i < output.size(); ++i) dx[i] = upstream[i] * activation_slope(output[i], kind);
  return dx;
}

template <typename T>
SoftmaxResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::size_t label) {
  if (logits.size() < 2) throw ShapeError("softmax needs at least two logits");
  if (label >= logits.size()) {
    throw std::out_of_range("label " + std::to_string(label) + " out of range for " +
                            std::to_string(logits.size()) + " classes");
  }
  const T mx = *std::max_element(logits.data().begin(), logits.data().end());
  Tensor<T> probs(Shape{logits.size()});
  T z = T(0);
  for (std::size_t i = 0; i < logits.size(); ++i) z += std::exp(logits[i] - mx);
  for (std::size_t i = 0; i < logits.size(); ++i) probs[i] = std::exp(logits[i] - mx) / z;
  // log-sum-exp form keeps saturated losses accurate
  const T loss = std::log(z) - (logits[label] - mx);
  return {loss, std::move(probs)};
}

template <typename T>
Tensor<T> softmax_cross_entropy_backward(const Tensor<T>& probs, std::size_t label) {
  if (label >= probs.size()) throw std::out_of_range("label out of range");
  Tensor<T> g = probs;
  g[label] -= T(1);
  return g;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(1) != b.dim(1)) {
    throw ShapeError("concat_channels spatial mismatch: " + a.shape().str() + " vs " +
                     b.shape().str());
  }
  const std::size_t ca = a.dim(2), cb = b.dim(2), cells = a.dim(0) * a.dim(1);
  Tensor<T> out(a.shape().concat(b.shape(), 2));
  for (std::size_t v = 0; v < cells; ++v) {
    std::copy_n(a.raw() + v * ca, ca, out.raw() + v * (ca + cb));
    std::copy_n(b.raw() + v * cb, cb, out.raw() + v * (ca + cb) + ca);
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> concat_channels_backward(const Tensor<T>& upstream,
                                                         std::size_t channels_a) {
  if (upstream.rank() != 3 || channels_a == 0 || channels_a >= upstream.dim(2)) {
    throw ShapeError("cannot split " + upstream.shape().str() + " at channel " +
                     std::to_string(channels_a));
  }
  const std::size_t H = upstream.dim(0), W = upstream.dim(1), C = upstream.dim(2);
  const std::size_t cb = C - channels_a;
  Tensor<T> ga(Shape{H, W, channels_a});
  Tensor<T> gb(Shape{H, W, cb});
  for (std::size_t v = 0; v < H * W; ++v) {
    std::copy_n(upstream.raw() + v * C, channels_a, ga.raw() + v * channels_a);
    std::copy_n(upstream.raw() + v * C + channels_a, cb, gb.raw() + v * cb);
  }
  return {std::move(ga), std::move(gb)};
}

#define SANET_LAYERS(T)                                                                         \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Conv2dParams<T>&);                   \
  template Conv2dGrads<T> conv2d_backward(const Tensor<T>&, const Conv2dParams<T>&,              \
                                          const Tensor<T>&);                                     \
  template PoolResult<T> maxpool_forward(const Tensor<T>&, std::size_t, std::size_t);            \
  template Tensor<T> maxpool_backward(const PoolRecord&, const Tensor<T>&);                      \
  template Tensor<T> fc_forward(const Tensor<T>&, const FcParams<T>&);                           \
  template FcGrads<T> fc_backward(const Tensor<T>&, const FcParams<T>&, const Tensor<T>&);       \
  template Tensor<T> activation_forward(const Tensor<T>&, Activation);                           \
  template Tensor<T> activation_backward(const Tensor<T>&, const Tensor<T>&, Activation);        \
  template SoftmaxResult<T> softmax_cross_entropy(const Tensor<T>&, std::size_t);                \
  template Tensor<T> softmax_cross_entropy_backward(const Tensor<T>&, std::size_t);              \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                        \
  template std::pair<Tensor<T>, Tensor<T>> concat_channels_backward(const Tensor<T>&, std::size_t);

SANET_LAYERS(float)
SANET_LAYERS(double)

}  // namespace sanet
