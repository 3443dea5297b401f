#include "sanet/serial.hpp"

#include <string>

namespace sanet::serial {

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Conv2dParams<T>& p) {
  const Shape out_shape = conv2d_output_shape(input.shape(), p.kernels.shape(), p.stride, p.padding);
  const long H = static_cast<long>(input.dim(0)), W = static_cast<long>(input.dim(1));
  Tensor<T> out(out_shape);
  for (std::size_t oi = 0; oi < out_shape[0]; ++oi) {
    for (std::size_t oj = 0; oj < out_shape[1]; ++oj) {
      for (std::size_t co = 0; co < out_shape[2]; ++co) {
        T acc = p.bias[co];
        for (std::size_t ki = 0; ki < p.kernels.dim(0); ++ki) {
          for (std::size_t kj = 0; kj < p.kernels.dim(1); ++kj) {
            for (std::size_t ci = 0; ci < input.dim(2); ++ci) {
              const long ii = static_cast<long>(oi * p.stride + ki) - static_cast<long>(p.padding);
              const long jj = static_cast<long>(oj * p.stride + kj) - static_cast<long>(p.padding);
              if (ii < 0 || jj < 0 || ii >= H || jj >= W) continue;
              const std::size_t xi[] = {std::size_t(ii), std::size_t(jj), ci};
              const std::size_t ki4[] = {ki, kj, ci, co};
              acc += input.at(xi) * p.kernels.at(ki4);
            }
          }
        }
        const std::size_t oi3[] = {oi, oj, co};
        out.at(oi3) = acc;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> dagrnn_forward(const Tensor<T>& x, std::span<const LatticeDag> dags,
                         const DagRnnParams<T>& params) {
  params.validate();
  const std::size_t H = x.dim(0), W = x.dim(1), cin = x.dim(2);
  const std::size_t hid = params.hidden_dim(), out = params.output_dim();
  auto pixel = [&](std::size_t v) {
    return Tensor<T>(Shape{cin}, std::vector<T>(x.raw() + v * cin, x.raw() + (v + 1) * cin));
  };

  Tensor<T> y(Shape{H, W, out});
  std::vector<Tensor<T>> z(H * W, params.c);
  for (const auto& dp : params.directions) {
    const LatticeDag* dag = nullptr;
    for (const auto& g : dags) {
      if (g.direction == dp.direction) dag = &g;
    }
    if (dag == nullptr) {
      throw std::invalid_argument(std::string("direction set incomplete: no ") +
                                  to_string(dp.direction) + " lattice DAG supplied");
    }
    std::vector<Tensor<T>> h(H * W);
    for (VertexId v : dag->topo_order) {
      Tensor<T> sum(Shape{hid});
      for (VertexId u : dag->predecessors[v]) sum = add(sum, h[u]);
      const Tensor<T> pre = add(add(matvec(dp.U, pixel(v)), matvec(dp.W, sum)), dp.b);
      h[v] = activation_forward(pre, params.hidden_activation);
    }
    for (std::size_t v = 0; v < H * W; ++v) z[v] = add(z[v], matvec(dp.V, h[v]));
  }
  for (std::size_t v = 0; v < H * W; ++v) {
    const Tensor<T> yv = activation_forward(z[v], params.output_activation);
    std::copy_n(yv.raw(), out, y.raw() + v * out);
  }
  return y;
}

template Tensor<float> conv2d_forward(const Tensor<float>&, const Conv2dParams<float>&);
template Tensor<double> conv2d_forward(const Tensor<double>&, const Conv2dParams<double>&);
template Tensor<float> dagrnn_forward(const Tensor<float>&, std::span<const LatticeDag>,
                                      const DagRnnParams<float>&);
template Tensor<double> dagrnn_forward(const Tensor<double>&, std::span<const LatticeDag>,
                                       const DagRnnParams<double>&);

}  // namespace sanet::serial
