#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "amplify/common.hpp"
#include "amplify/rng.hpp"

namespace amplify {

// Dense row-major tensor. Value semantics; shape is a plain vector of dims.
template <typename T>
struct Tensor {
  std::vector<i64> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<i64> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), T(0));
  }
  Tensor(std::vector<i64> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    AMPLIFY_CHECK(static_cast<i64>(data.size()) == numel_of(shape), "shape/data mismatch");
  }

  static i64 numel_of(const std::vector<i64>& s) {
    i64 n = 1;
    for (i64 d : s) n *= d;
    return n;
  }

  i64 numel() const { return static_cast<i64>(data.size()); }
  i64 dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape.size()); }

  // Rows/cols when viewed as a 2-D matrix collapsing leading dims.
  i64 rows2d() const {
    AMPLIFY_CHECK(!shape.empty(), "rows2d on scalar");
    return numel() / shape.back();
  }
  i64 cols2d() const { return shape.empty() ? 1 : shape.back(); }

  T& at(std::initializer_list<i64> idx) {
    i64 off = 0;
    auto it = idx.begin();
    for (size_t d = 0; d < shape.size(); ++d, ++it) off = off * shape[d] + *it;
    return data[static_cast<size_t>(off)];
  }
  T at(std::initializer_list<i64> idx) const {
    return const_cast<Tensor*>(this)->at(idx);
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  Tensor reshaped(std::vector<i64> s) const {
    AMPLIFY_CHECK(numel_of(s) == numel(), "reshape numel mismatch");
    return Tensor(std::move(s), data);
  }

  static Tensor zeros(std::vector<i64> s) { return Tensor(std::move(s)); }

  static Tensor full(std::vector<i64> s, T v) {
    Tensor t(std::move(s));
    t.fill(v);
    return t;
  }

  static Tensor randn(std::vector<i64> s, Rng& rng, T stddev) {
    Tensor t(std::move(s));
    for (auto& x : t.data) x = static_cast<T>(rng.normal() * static_cast<double>(stddev));
    return t;
  }
};

template <typename T>
using EigenMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<EigenMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const EigenMat<T>>;

template <typename T>
ConstMatMap<T> as_matrix(const Tensor<T>& t, i64 rows, i64 cols) {
  AMPLIFY_CHECK(rows * cols == t.numel(), "as_matrix numel mismatch");
  return ConstMatMap<T>(t.data.data(), rows, cols);
}

template <typename T>
MatMap<T> as_matrix(Tensor<T>& t, i64 rows, i64 cols) {
  AMPLIFY_CHECK(rows * cols == t.numel(), "as_matrix numel mismatch");
  return MatMap<T>(t.data.data(), rows, cols);
}

// c (+)= a @ b over raw pointers; all row-major.
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, i64 m, i64 k, i64 n, bool accumulate) {
  ConstMatMap<T> A(a, m, k), B(b, k, n);
  MatMap<T> C(c, m, n);
  if (accumulate) C.noalias() += A * B; else C.noalias() = A * B;
}

// c (+)= a @ b^T, a: [m,k], b: [n,k].
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, i64 m, i64 k, i64 n, bool accumulate) {
  ConstMatMap<T> A(a, m, k), B(b, n, k);
  MatMap<T> C(c, m, n);
  if (accumulate) C.noalias() += A * B.transpose(); else C.noalias() = A * B.transpose();
}

// c (+)= a^T @ b, a: [k,m], b: [k,n].
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, i64 m, i64 k, i64 n, bool accumulate) {
  ConstMatMap<T> A(a, k, m), B(b, k, n);
  MatMap<T> C(c, m, n);
  if (accumulate) C.noalias() += A.transpose() * B; else C.noalias() = A.transpose() * B;
}

}  // namespace amplify
