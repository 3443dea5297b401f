#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sanet {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Ordered list of positive extents. Rank zero is not a valid shape.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> extents);
  explicit Shape(std::vector<std::size_t> extents);

  std::size_t rank() const { return extents_.size(); }
  std::size_t operator[](std::size_t axis) const { return extents_.at(axis); }
  const std::vector<std::size_t>& extents() const { return extents_; }
  std::size_t numel() const;
  std::vector<std::size_t> strides() const;

  // Sums `axis` and requires every other extent to agree.
  Shape concat(const Shape& other, std::size_t axis) const;

  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::vector<std::size_t> extents_;
};

// Dense row-major tensor. Feature maps use (H, W, C).
//
// A default-constructed tensor is an empty placeholder (rank 0, no data);
// every tensor built from a Shape has at least one element.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> data);

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape()); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.rank(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t dim(std::size_t axis) const { return shape_[axis]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* raw() { return data_.data(); }
  const T* raw() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::span<const std::size_t> index);
  const T& at(std::span<const std::size_t> index) const;

  // Rank-specific accessors for the hot paths; no bounds checking.
  T& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  T& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const T& operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  void fill(T value);
  Tensor reshaped(Shape shape) const;

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t offset(std::span<const std::size_t> index) const;

  Shape shape_;
  std::vector<T> data_;
};

enum class LinalgKind { add, scale, hadamard, matvec, matmul };

const char* to_string(LinalgKind kind);

// Pure element-wise and matrix primitives. `scale` reads its factor from
// b, which must hold exactly one element.
template <typename T>
Tensor<T> linalg(const Tensor<T>& a, const Tensor<T>& b, LinalgKind kind);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> matvec(const Tensor<T>& m, const Tensor<T>& v);
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// Raw kernels shared by the layer code: y += M·x and y += Mᵀ·x for a
// row-major rows×cols matrix, and M += u·vᵀ.
template <typename T>
inline void gemv_acc(const T* m, std::size_t rows, std::size_t cols, const T* x, T* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = m + r * cols;
    T acc = T(0);
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] += acc;
  }
}

template <typename T>
inline void gemv_t_acc(const T* m, std::size_t rows, std::size_t cols, const T* x, T* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = m + r * cols;
    const T xr = x[r];
    for (std::size_t c = 0; c < cols; ++c) y[c] += row[c] * xr;
  }
}

template <typename T>
inline void outer_acc(T* m, std::size_t rows, std::size_t cols, const T* u, const T* v) {
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = m + r * cols;
    const T ur = u[r];
    for (std::size_t c = 0; c < cols; ++c) row[c] += ur * v[c];
  }
}

template <typename T>
T sum_of_squares(const Tensor<T>& t);

}  // namespace sanet
