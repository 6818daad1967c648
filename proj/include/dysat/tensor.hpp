#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "dysat/errors.hpp"

namespace dysat {

/// Dense row-major tensor. Real is double for tests and tooling; float is
/// available as a faster training mode.
template <class Real>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(numel(shape_), Real(0)) {}

  TensorT(std::vector<std::size_t> shape, std::vector<Real> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != numel(shape_)) {
      throw DimensionError("tensor data length does not match shape");
    }
  }

  static TensorT zeros(std::vector<std::size_t> shape) { return TensorT(std::move(shape)); }

  static TensorT full(std::vector<std::size_t> shape, Real v) {
    TensorT t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
  }

  static TensorT scalar(Real v) { return TensorT({1}, {v}); }

  /// 2-D tensor from nested initializer lists; test convenience.
  static TensorT matrix(std::initializer_list<std::initializer_list<Real>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    TensorT t({r, c});
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("ragged matrix literal");
      for (Real v : row) t.data_[i++] = v;
    }
    return t;
  }

  static TensorT vector(std::initializer_list<Real> vals) {
    return TensorT({vals.size()}, std::vector<Real>(vals));
  }

  static std::size_t numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }

  /// Rows/cols of a rank-2 tensor (rank-1 counts as a single row).
  std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return rank() == 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 0); }

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  Real& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  Real at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

  void fill(Real v) {
    for (auto& x : data_) x = v;
  }

  bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (Real v : data_) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  template <class Other>
  TensorT<Other> cast() const {
    TensorT<Other> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<Other>(data_[i]);
    return out;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<Real> data_;
};

using Tensor = TensorT<double>;

}  // namespace dysat
