#include "sanet/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace sanet {

Shape::Shape(std::initializer_list<std::size_t> extents) : Shape(std::vector<std::size_t>(extents)) {}

Shape::Shape(std::vector<std::size_t> extents) : extents_(std::move(extents)) {
  if (extents_.empty()) throw ShapeError("zero-dimensional shapes are not allowed");
  for (std::size_t e : extents_) {
    if (e == 0) throw ShapeError("shape extents must be positive: " + str());
  }
}

std::size_t Shape::numel() const {
  if (extents_.empty()) return 0;
  return std::accumulate(extents_.begin(), extents_.end(), std::size_t{1}, std::multiplies<>());
}

std::vector<std::size_t> Shape::strides() const {
  std::vector<std::size_t> s(extents_.size(), 1);
  for (std::size_t i = extents_.size(); i-- > 1;) s[i - 1] = s[i] * extents_[i];
  return s;
}

Shape Shape::concat(const Shape& other, std::size_t axis) const {
  if (rank() != other.rank() || axis >= rank()) {
    throw ShapeError("cannot concatenate " + str() + " and " + other.str() + " along axis " +
                     std::to_string(axis));
  }
  std::vector<std::size_t> out = extents_;
  for (std::size_t i = 0; i < rank(); ++i) {
    if (i == axis) {
      out[i] += other.extents_[i];
    } else if (extents_[i] != other.extents_[i]) {
      throw ShapeError("cannot concatenate " + str() + " and " + other.str() + " along axis " +
                       std::to_string(axis));
    }
  }
  return Shape(std::move(out));
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < extents_.size(); ++i) os << (i ? ", " : "") << extents_[i];
  os << ')';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_.numel(), fill) {
  if (shape_.rank() == 0) throw ShapeError("zero-dimensional tensors are not allowed");
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.rank() == 0) throw ShapeError("zero-dimensional tensors are not allowed");
  if (data_.size() != shape_.numel()) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_.str());
  }
}

template <typename T>
std::size_t Tensor<T>::offset(std::span<const std::size_t> index) const {
  if (index.size() != rank()) throw ShapeError("index rank does not match tensor " + shape_.str());
  std::size_t off = 0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= shape_[i]) throw std::out_of_range("index out of range for " + shape_.str());
    off = off * shape_[i] + index[i];
  }
  return off;
}

template <typename T>
T& Tensor<T>::at(std::span<const std::size_t> index) {
  return data_[offset(index)];
}

template <typename T>
const T& Tensor<T>::at(std::span<const std::size_t> index) const {
  return data_[offset(index)];
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape.numel() != size()) {
    throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  return Tensor<T>(std::move(shape), data_);
}

const char* to_string(LinalgKind kind) {
  switch (kind) {
    case LinalgKind::add: return "add";
    case LinalgKind::scale: return "scale";
    case LinalgKind::hadamard: return "hadamard";
    case LinalgKind::matvec: return "matvec";
    case LinalgKind::matmul: return "matmul";
  }
  return "unknown";
}

namespace {

[[noreturn]] void mismatch(const Shape& a, const Shape& b, LinalgKind kind) {
  throw ShapeError(std::string("shape mismatch in ") + to_string(kind) + ": " + a.str() + " vs " +
                   b.str());
}

}  // namespace

template <typename T>
Tensor<T> linalg(const Tensor<T>& a, const Tensor<T>& b, LinalgKind kind) {
  switch (kind) {
    case LinalgKind::add:
    case LinalgKind::hadamard: {
      if (a.shape() != b.shape()) mismatch(a.shape(), b.shape(), kind);
      Tensor<T> out(a.shape());
      for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = kind == LinalgKind::add ? a[i] + b[i] : a[i] * b[i];
      }
      return out;
    }
    case LinalgKind::scale: {
      if (b.size() != 1) mismatch(a.shape(), b.shape(), kind);
      Tensor<T> out(a.shape());
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[0];
      return out;
    }
    case LinalgKind::matvec: {
      if (a.rank() != 2 || b.rank() != 1 || a.dim(1) != b.dim(0)) mismatch(a.shape(), b.shape(), kind);
      Tensor<T> out(Shape{a.dim(0)});
      gemv_acc(a.raw(), a.dim(0), a.dim(1), b.raw(), out.raw());
      return out;
    }
    case LinalgKind::matmul: {
      if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) mismatch(a.shape(), b.shape(), kind);
      const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
      Tensor<T> out(Shape{n, m});
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const T aip = a(i, p);
          for (std::size_t j = 0; j < m; ++j) out(i, j) += aip * b(p, j);
        }
      }
      return out;
    }
  }
  throw std::invalid_argument("unknown linalg kind");
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return linalg(a, b, LinalgKind::add);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return linalg(a, Tensor<T>(Shape{1}, factor), LinalgKind::scale);
}

template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
  return linalg(a, b, LinalgKind::hadamard);
}

template <typename T>
Tensor<T> matvec(const Tensor<T>& m, const Tensor<T>& v) {
  return linalg(m, v, LinalgKind::matvec);
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  return linalg(a, b, LinalgKind::matmul);
}

template <typename T>
T sum_of_squares(const Tensor<T>& t) {
  T acc = T(0);
  for (T v : t.data()) acc += v * v;
  return acc;
}

#define SANET_INSTANTIATE(T)                                                 \
  template class Tensor<T>;                                                  \
  template Tensor<T> linalg(const Tensor<T>&, const Tensor<T>&, LinalgKind); \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> scale(const Tensor<T>&, T);                             \
  template Tensor<T> hadamard(const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> matvec(const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);             \
  template T sum_of_squares(const Tensor<T>&);

SANET_INSTANTIATE(float)
SANET_INSTANTIATE(double)

}  // namespace sanet
