//
// Project molfedgan - Copyright 2026 The molfedgan Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <algorithm>
#include <array>
#include <initializer_list>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "molfedgan/errors.hpp"

namespace molfedgan {

/// Tensor extents with inline storage (rank <= kMaxRank).
class Shape {
 public:
  static constexpr std::size_t kMaxRank = 6;
  using value_type = std::size_t;
  using iterator = std::size_t *;
  using const_iterator = const std::size_t *;

  Shape() = default;

  Shape(std::initializer_list<std::size_t> dims) {
    check_rank(dims.size());
    std::copy(dims.begin(), dims.end(), dims_.begin());
    rank_ = dims.size();
  }

  /// `rank` axes, each of extent `fill`.
  explicit Shape(std::size_t rank, std::size_t fill = 0) {
    check_rank(rank);
    std::fill_n(dims_.begin(), rank, fill);
    rank_ = rank;
  }

  std::size_t size() const noexcept { return rank_; }
  bool empty() const noexcept { return rank_ == 0; }
  std::size_t &operator[](std::size_t i) noexcept { return dims_[i]; }
  std::size_t operator[](std::size_t i) const noexcept { return dims_[i]; }
  std::size_t at(std::size_t i) const {
    if (i >= rank_) throw ShapeMismatch("axis " + std::to_string(i) + " out of range");
    return dims_[i];
  }
  std::size_t back() const noexcept { return dims_[rank_ - 1]; }

  iterator begin() noexcept { return dims_.data(); }
  iterator end() noexcept { return dims_.data() + rank_; }
  const_iterator begin() const noexcept { return dims_.data(); }
  const_iterator end() const noexcept { return dims_.data() + rank_; }

  void push_back(std::size_t d) {
    check_rank(rank_ + 1);
    dims_[rank_++] = d;
  }

  friend bool operator==(const Shape &a, const Shape &b) noexcept {
    return a.rank_ == b.rank_ && std::equal(a.begin(), a.end(), b.begin());
  }

 private:
  static void check_rank(std::size_t rank) {
    if (rank > kMaxRank) {
      throw ShapeMismatch("rank " + std::to_string(rank) + " exceeds the supported maximum");
    }
  }

  std::array<std::size_t, kMaxRank> dims_{};
  std::size_t rank_ = 0;
};

inline std::size_t shape_size(const Shape &shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape &shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense row-major array. A rank-0 tensor holds a single scalar.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : Tensor(Shape{}) { }

  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), values_(shape_size(shape_), fill) { }

  Tensor(Shape shape, std::vector<T> values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != shape_size(shape_)) {
      throw ShapeMismatch("tensor of shape " + shape_str(shape_) + " given "
                          + std::to_string(values_.size()) + " values");
    }
  }

  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

  const Shape &shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return values_.size(); }

  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }
  T *data() noexcept { return values_.data(); }
  const T *data() const noexcept { return values_.data(); }

  T &operator[](std::size_t i) noexcept { return values_[i]; }
  T operator[](std::size_t i) const noexcept { return values_[i]; }

  T item() const {
    if (values_.size() != 1) {
      throw NonScalarOutput("item() on tensor of shape " + shape_str(shape_));
    }
    return values_[0];
  }

  /// Same values viewed under a different shape of equal size.
  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != values_.size()) {
      throw ShapeMismatch("cannot reshape " + shape_str(shape_) + " to "
                          + shape_str(shape));
    }
    return Tensor(std::move(shape), values_);
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(values_.begin(), values_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  void fill(T value) { std::fill(values_.begin(), values_.end(), value); }

  friend bool operator==(const Tensor &, const Tensor &) = default;

 private:
  Shape shape_;
  std::vector<T> values_;
};

template <typename T>
void require_same_shape(const Tensor<T> &a, const Tensor<T> &b,
                        const char *what) {
  if (a.shape() != b.shape()) {
    throw ShapeMismatch(std::string(what) + ": " + shape_str(a.shape())
                        + " vs " + shape_str(b.shape()));
  }
}

}  // namespace molfedgan
