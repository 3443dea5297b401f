#include "sanet/dagrnn.hpp"

#include <cmath>
#include <cstring>
#include <string>

namespace sanet {

template <typename T>
std::uint64_t fingerprint(const Tensor<T>& t, std::uint64_t h) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(t.raw());
  const std::size_t n = t.size() * sizeof(T);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  for (std::size_t e : t.shape().extents()) {
    h ^= e;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
void DagRnnParams<T>::validate() const {
  if (directions.empty()) throw ShapeError("DAG-RNN needs at least one direction");
  const std::size_t in = input_dim(), hid = hidden_dim(), out = c.size();
  if (c.rank() != 1) throw ShapeError("output bias must be a vector, got " + c.shape().str());
  for (const auto& d : directions) {
    if (d.U.shape() != Shape{hid, in} || d.W.shape() != Shape{hid, hid} ||
        d.V.shape() != Shape{out, hid} || d.b.shape() != Shape{hid}) {
      throw ShapeError(std::string("DAG-RNN parameters for ") + to_string(d.direction) +
                       " disagree with (input, hidden, output) = (" + std::to_string(in) + ", " +
                       std::to_string(hid) + ", " + std::to_string(out) + ")");
    }
  }
}

template <typename T>
std::uint64_t DagRnnParams<T>::fingerprint() const {
  std::uint64_t h = sanet::fingerprint(c);
  for (const auto& d : directions) {
    h = sanet::fingerprint(d.U, h);
    h = sanet::fingerprint(d.W, h);
    h = sanet::fingerprint(d.V, h);
    h = sanet::fingerprint(d.b, h);
    h ^= static_cast<std::uint64_t>(d.direction) + 1;
  }
  h ^= static_cast<std::uint64_t>(hidden_activation) << 8;
  h ^= static_cast<std::uint64_t>(output_activation) << 16;
  return h;
}

namespace {

template <typename T>
Tensor<T> uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

const LatticeDag& dag_for(std::span<const LatticeDag> dags, Direction d, std::size_t H,
                          std::size_t W) {
  for (const auto& g : dags) {
    if (g.direction == d) {
      if (g.height != H || g.width != W) {
        throw ShapeError("lattice " + std::to_string(g.height) + "x" + std::to_string(g.width) +
                         " does not match input " + std::to_string(H) + "x" + std::to_string(W));
      }
      return g;
    }
  }
  throw std::invalid_argument(std::string("direction set incomplete: no ") + to_string(d) +
                              " lattice DAG supplied");
}

template <typename T>
void check_input(const Tensor<T>& x, const DagRnnParams<T>& params) {
  params.validate();
  if (x.rank() != 3 || x.dim(2) != params.input_dim()) {
    throw ShapeError("DAG-RNN input " + x.shape().str() + " does not have " +
                     std::to_string(params.input_dim()) + " channels");
  }
}

}  // namespace

template <typename T>
DagRnnParams<T> init_dagrnn_params(std::size_t input, std::size_t hidden, std::size_t output,
                                   Connectivity connectivity, Rng& rng,
                                   std::span<const Direction> directions) {
  const std::size_t preds = connectivity == Connectivity::eight ? 3 : 2;
  DagRnnParams<T> p;
  for (Direction d : directions) {
    DirectionParams<T> dp;
    dp.direction = d;
    dp.U = uniform_tensor<T>(Shape{hidden, input}, 1.0 / std::sqrt(double(input)), rng);
    dp.W = uniform_tensor<T>(Shape{hidden, hidden}, 1.0 / std::sqrt(double(hidden * preds)), rng);
    dp.V = uniform_tensor<T>(Shape{output, hidden},
                             1.0 / std::sqrt(double(hidden * directions.size())), rng);
    dp.b = Tensor<T>(Shape{hidden});
    p.directions.push_back(std::move(dp));
  }
  p.c = Tensor<T>(Shape{output});
  return p;
}

template <typename T>
DagRnnActivations<T> dagrnn_forward(const Tensor<T>& x, std::span<const LatticeDag> dags,
                                    const DagRnnParams<T>& params) {
  check_input(x, params);
  const std::size_t H = x.dim(0), Wd = x.dim(1), cin = x.dim(2);
  const std::size_t hid = params.hidden_dim(), out = params.output_dim();
  const std::size_t ndir = params.directions.size();

  std::vector<const LatticeDag*> graphs;
  for (const auto& d : params.directions) graphs.push_back(&dag_for(dags, d.direction, H, Wd));

  DagRnnActivations<T> acts;
  acts.input_shape = x.shape();
  acts.input_fingerprint = fingerprint(x);
  acts.params_fingerprint = params.fingerprint();
  acts.hidden.assign(ndir, Tensor<T>(Shape{H, Wd, hid}));
  acts.pred_sum.assign(ndir, Tensor<T>(Shape{H, Wd, hid}));

#pragma omp parallel for schedule(static, 1) if (H * Wd * hid * (cin + hid) > 20000)
  for (std::size_t m = 0; m < ndir; ++m) {
    const auto& dp = params.directions[m];
    const LatticeDag& dag = *graphs[m];
    T* h = acts.hidden[m].raw();
    T* s = acts.pred_sum[m].raw();
    std::vector<T> a(hid);
    for (VertexId v : dag.topo_order) {
      T* sv = s + v * hid;
      for (VertexId u : dag.predecessors[v]) {
        const T* hu = h + u * hid;
        for (std::size_t k = 0; k < hid; ++k) sv[k] += hu[k];
      }
      std::copy_n(dp.b.raw(), hid, a.data());
      gemv_acc(dp.U.raw(), hid, cin, x.raw() + v * cin, a.data());
      gemv_acc(dp.W.raw(), hid, hid, sv, a.data());
      T* hv = h + v * hid;
      for (std::size_t k = 0; k < hid; ++k) hv[k] = activate(a[k], params.hidden_activation);
    }
  }

  Tensor<T> z(Shape{H, Wd, out});
  for (std::size_t v = 0; v < H * Wd; ++v) {
    T* zv = z.raw() + v * out;
    std::copy_n(params.c.raw(), out, zv);
    for (std::size_t m = 0; m < ndir; ++m) {
      gemv_acc(params.directions[m].V.raw(), out, hid, acts.hidden[m].raw() + v * hid, zv);
    }
  }
  acts.output = activation_forward(z, params.output_activation);
  return acts;
}

template <typename T>
DagRnnGrads<T> dagrnn_backward(const Tensor<T>& x, const DagRnnActivations<T>& acts,
                               std::span<const LatticeDag> dags, const DagRnnParams<T>& params,
                               const Tensor<T>& upstream) {
  check_input(x, params);
  if (acts.input_shape != x.shape() || acts.hidden.size() != params.directions.size() ||
      acts.input_fingerprint != fingerprint(x) || acts.params_fingerprint != params.fingerprint()) {
    throw StaleCacheError("DAG-RNN activations were produced from different inputs or parameters");
  }
  if (upstream.shape() != acts.output.shape()) {
    throw ShapeError("DAG-RNN upstream gradient " + upstream.shape().str() + " does not match output " +
                     acts.output.shape().str());
  }
  const std::size_t H = x.dim(0), Wd = x.dim(1), cin = x.dim(2);
  const std::size_t hid = params.hidden_dim(), out = params.output_dim();
  const std::size_t ndir = params.directions.size();
  const std::size_t n = H * Wd;

  std::vector<const LatticeDag*> graphs;
  for (const auto& d : params.directions) graphs.push_back(&dag_for(dags, d.direction, H, Wd));

  // dz = dL/dy ∘ σ'
  const Tensor<T> dz = activation_backward(acts.output, upstream, params.output_activation);

  DagRnnGrads<T> g;
  g.c = Tensor<T>(Shape{out});
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t k = 0; k < out; ++k) g.c[k] += dz[v * out + k];
  }
  g.directions.resize(ndir);
  std::vector<Tensor<T>> grad_x(ndir);

#pragma omp parallel for schedule(static, 1) if (n * hid * (cin + hid) > 20000)
  for (std::size_t m = 0; m < ndir; ++m) {
    const auto& dp = params.directions[m];
    const LatticeDag& dag = *graphs[m];
    auto& gd = g.directions[m];
    gd.direction = dp.direction;
    gd.U = Tensor<T>(dp.U.shape());
    gd.W = Tensor<T>(dp.W.shape());
    gd.V = Tensor<T>(dp.V.shape());
    gd.b = Tensor<T>(dp.b.shape());
    grad_x[m] = Tensor<T>(x.shape());

    const T* h = acts.hidden[m].raw();
    const T* s = acts.pred_sum[m].raw();
    // delta(v) = dh(v) ∘ φ'(h(v))
    std::vector<T> delta(n * hid, T(0));
    std::vector<T> dh(hid), succ(hid);

    for (auto it = dag.topo_order.rbegin(); it != dag.topo_order.rend(); ++it) {
      const VertexId v = *it;
      const T* hv = h + v * hid;
      const T* dzv = dz.raw() + v * out;
      // direct term Vᵀ·dz(v)
      std::fill(dh.begin(), dh.end(), T(0));
      gemv_t_acc(dp.V.raw(), out, hid, dzv, dh.data());
      // successor term Wᵀ·Σ_k delta(k)
      if (!dag.successors[v].empty()) {
        std::fill(succ.begin(), succ.end(), T(0));
        for (VertexId k : dag.successors[v]) {
          const T* dk = delta.data() + k * hid;
          for (std::size_t q = 0; q < hid; ++q) succ[q] += dk[q];
        }
        gemv_t_acc(dp.W.raw(), hid, hid, succ.data(), dh.data());
      }
      T* dv = delta.data() + v * hid;
      for (std::size_t q = 0; q < hid; ++q) dv[q] = dh[q] * activation_slope(hv[q], params.hidden_activation);

      outer_acc(gd.V.raw(), out, hid, dzv, hv);
      outer_acc(gd.U.raw(), hid, cin, dv, x.raw() + v * cin);
      outer_acc(gd.W.raw(), hid, hid, dv, s + v * hid);
      for (std::size_t q = 0; q < hid; ++q) gd.b[q] += dv[q];
      gemv_t_acc(dp.U.raw(), hid, cin, dv, grad_x[m].raw() + v * cin);
    }
  }

  g.input = std::move(grad_x[0]);
  for (std::size_t m = 1; m < ndir; ++m) {
    for (std::size_t i = 0; i < g.input.size(); ++i) g.input[i] += grad_x[m][i];
  }
  return g;
}

#define SANET_DAGRNN(T)                                                                          \
  template struct DagRnnParams<T>;                                                               \
  template std::uint64_t fingerprint(const Tensor<T>&, std::uint64_t);                            \
  template DagRnnParams<T> init_dagrnn_params(std::size_t, std::size_t, std::size_t, Connectivity, \
                                              Rng&, std::span<const Direction>);                 \
  template DagRnnActivations<T> dagrnn_forward(const Tensor<T>&, std::span<const LatticeDag>,     \
                                               const DagRnnParams<T>&);                          \
  template DagRnnGrads<T> dagrnn_backward(const Tensor<T>&, const DagRnnActivations<T>&,          \
                                          std::span<const LatticeDag>, const DagRnnParams<T>&,    \
                                          const Tensor<T>&);

SANET_DAGRNN(float)
SANET_DAGRNN(double)

}  // namespace sanet
