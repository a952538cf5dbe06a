#pragma once

// Tensor-shaped operations built from scalar tape nodes. Everything is
// templated on the scalar type so the same code runs in plain double
// (inference, certification) and in Var (training).

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "veritracer/autodiff.hpp"

namespace veritracer {

inline void check_dims(std::size_t got, std::size_t want, const std::string& op) {
  if (got != want)
    throw std::invalid_argument(op + ": dimension mismatch (got " +
                                std::to_string(got) + ", want " +
                                std::to_string(want) + ")");
}

// Row-major (rows x cols) matrix times vector.
template <typename S>
std::vector<S> matvec(const std::vector<S>& m, std::size_t rows, std::size_t cols,
                      const std::vector<S>& x) {
  if (m.size() != rows * cols)
    throw std::invalid_argument("matvec: matrix storage does not match rows*cols");
  check_dims(x.size(), cols, "matvec");
  std::vector<S> out;
  out.reserve(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    S acc = m[r * cols] * x[0];
    for (std::size_t c = 1; c < cols; ++c) acc = acc + m[r * cols + c] * x[c];
    out.push_back(acc);
  }
  return out;
}

template <typename S>
std::vector<S> add(const std::vector<S>& a, const std::vector<S>& b) {
  check_dims(b.size(), a.size(), "add");
  std::vector<S> out;
  out.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out.push_back(a[i] + b[i]);
  return out;
}

template <typename S>
std::vector<S> mul(const std::vector<S>& a, const std::vector<S>& b) {
  check_dims(b.size(), a.size(), "mul");
  std::vector<S> out;
  out.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out.push_back(a[i] * b[i]);
  return out;
}

template <typename S>
std::vector<S> relu(const std::vector<S>& a) {
  std::vector<S> out;
  out.reserve(a.size());
  for (const S& v : a) out.push_back(relu(v));
  return out;
}

template <typename S>
S sum(const std::vector<S>& a) {
  if (a.empty()) throw std::invalid_argument("sum: empty vector");
  S acc = a[0];
  for (std::size_t i = 1; i < a.size(); ++i) acc = acc + a[i];
  return acc;
}

template <typename S>
S dot(const std::vector<S>& a, const std::vector<S>& b) {
  check_dims(b.size(), a.size(), "dot");
  S acc = a[0] * b[0];
  for (std::size_t i = 1; i < a.size(); ++i) acc = acc + a[i] * b[i];
  return acc;
}

template <typename S>
S mse(const S& pred, double target) {
  S d = pred - target;
  return d * d;
}

// Mean l1 distance per feature dimension.
template <typename S>
S mean_l1(const std::vector<S>& a, const std::vector<S>& b) {
  check_dims(b.size(), a.size(), "mean_l1");
  S acc = vabs(a[0] - b[0]);
  for (std::size_t i = 1; i < a.size(); ++i) acc = acc + vabs(a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

// Stable permutation sorting indices descendingly by the *values* of keys.
// The permutation is detached from gradients; gradients flow through the
// permuted values only.
template <typename S>
std::vector<std::size_t> sort_permutation_desc(const std::vector<S>& keys) {
  std::vector<std::size_t> idx(keys.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scalar_value(keys[a]) > scalar_value(keys[b]);
  });
  return idx;
}

template <typename S>
std::vector<S> apply_permutation(const std::vector<S>& a,
                                 const std::vector<std::size_t>& perm) {
  check_dims(perm.size(), a.size(), "apply_permutation");
  std::vector<S> out;
  out.reserve(a.size());
  for (std::size_t i : perm) out.push_back(a[i]);
  return out;
}

template <typename S>
std::vector<S> select_by_mask(const std::vector<S>& a, const std::vector<bool>& mask) {
  check_dims(mask.size(), a.size(), "select_by_mask");
  std::vector<S> out;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (mask[i]) out.push_back(a[i]);
  return out;
}

inline std::vector<Var> lift(Tape& tape, const std::vector<double>& v) {
  std::vector<Var> out;
  out.reserve(v.size());
  for (double x : v) out.push_back(tape.leaf(x));
  return out;
}

inline std::vector<double> values_of(const std::vector<Var>& v) {
  std::vector<double> out;
  out.reserve(v.size());
  for (const Var& x : v) out.push_back(x.value());
  return out;
}

}  // namespace veritracer
