#pragma once

// Reverse-mode automatic differentiation on a scalar tape.
//
// A Var is a lightweight handle into its Tape. Every recorded node stores
// its forward value together with the local partial derivatives of up to
// two parents, so the backward pass is a single reverse sweep over the
// node array. Tensor-shaped operations (matmul, reductions, permutations)
// live in ops.hpp and are compositions of these scalar nodes; this keeps
// the piecewise-linear control flow of the greedy bound solver naturally
// differentiable along the branch actually taken.

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace veritracer {

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  Var() = default;
  Var(Tape* t, std::uint32_t i) : tape(t), id(i) {}

  double value() const;
  double grad() const;
};

class Tape {
 public:
  struct Node {
    double value;
    double grad;
    std::uint32_t parent1;
    std::uint32_t parent2;
    double partial1;
    double partial2;
  };

  static constexpr std::uint32_t kNoParent = 0xffffffffu;

  Tape() { nodes_.reserve(1 << 12); }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(double value) {
    nodes_.push_back({value, 0.0, kNoParent, kNoParent, 0.0, 0.0});
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  Var unary(const Var& a, double value, double partial) {
    check_owned(a);
    nodes_.push_back({value, 0.0, a.id, kNoParent, partial, 0.0});
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  Var binary(const Var& a, const Var& b, double value, double pa, double pb) {
    check_owned(a);
    check_owned(b);
    nodes_.push_back({value, 0.0, a.id, b.id, pa, pb});
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  double value(const Var& v) const {
    check_owned(v);
    return nodes_[v.id].value;
  }

  double grad(const Var& v) const {
    check_owned(v);
    return nodes_[v.id].grad;
  }

  // Accumulates d(root)/d(v) into every node's grad field, visiting nodes
  // in exact reverse recording order.
  void backward(const Var& root) {
    check_owned(root);
    for (Node& n : nodes_) n.grad = 0.0;
    nodes_[root.id].grad = 1.0;
    for (std::uint32_t i = root.id + 1; i-- > 0;) {
      const Node& n = nodes_[i];
      if (n.grad == 0.0) continue;
      if (n.parent1 != kNoParent) nodes_[n.parent1].grad += n.partial1 * n.grad;
      if (n.parent2 != kNoParent) nodes_[n.parent2].grad += n.partial2 * n.grad;
    }
  }

  // Invalidates all Vars issued from this tape.
  void clear() { nodes_.clear(); }

  std::size_t size() const { return nodes_.size(); }

 private:
  void check_owned(const Var& v) const {
    if (v.tape != this)
      throw std::invalid_argument("autodiff: Var used with a foreign tape");
    if (v.id >= nodes_.size())
      throw std::invalid_argument("autodiff: stale Var handle (tape cleared?)");
  }

  std::vector<Node> nodes_;
};

inline double Var::value() const { return tape->value(*this); }
inline double Var::grad() const { return tape->grad(*this); }

namespace detail {
inline Tape* common_tape(const Var& a, const Var& b) {
  if (a.tape != b.tape)
    throw std::invalid_argument("autodiff: operands recorded on different tapes");
  return a.tape;
}
}  // namespace detail

inline Var operator+(const Var& a, const Var& b) {
  return detail::common_tape(a, b)->binary(a, b, a.value() + b.value(), 1.0, 1.0);
}
inline Var operator-(const Var& a, const Var& b) {
  return detail::common_tape(a, b)->binary(a, b, a.value() - b.value(), 1.0, -1.0);
}
inline Var operator*(const Var& a, const Var& b) {
  return detail::common_tape(a, b)->binary(a, b, a.value() * b.value(), b.value(), a.value());
}
inline Var operator/(const Var& a, const Var& b) {
  const double bv = b.value();
  return detail::common_tape(a, b)->binary(a, b, a.value() / bv, 1.0 / bv,
                                           -a.value() / (bv * bv));
}
inline Var operator-(const Var& a) { return a.tape->unary(a, -a.value(), -1.0); }

inline Var operator+(const Var& a, double c) { return a.tape->unary(a, a.value() + c, 1.0); }
inline Var operator+(double c, const Var& a) { return a + c; }
inline Var operator-(const Var& a, double c) { return a.tape->unary(a, a.value() - c, 1.0); }
inline Var operator-(double c, const Var& a) { return a.tape->unary(a, c - a.value(), -1.0); }
inline Var operator*(const Var& a, double c) { return a.tape->unary(a, a.value() * c, c); }
inline Var operator*(double c, const Var& a) { return a * c; }
inline Var operator/(const Var& a, double c) { return a.tape->unary(a, a.value() / c, 1.0 / c); }
inline Var operator/(double c, const Var& a) {
  const double av = a.value();
  return a.tape->unary(a, c / av, -c / (av * av));
}

// ReLU uses subgradient 0 at the kink.
inline Var relu(const Var& a) {
  const double v = a.value();
  return a.tape->unary(a, v > 0.0 ? v : 0.0, v > 0.0 ? 1.0 : 0.0);
}

inline Var sigmoid(const Var& a) {
  const double s = 1.0 / (1.0 + std::exp(-a.value()));
  return a.tape->unary(a, s, s * (1.0 - s));
}

// Ties route the gradient through the first operand (the interior branch
// for clamp-style uses such as max(v, lo) / min(v, hi)).
inline Var vmax(const Var& a, const Var& b) {
  return a.value() >= b.value() ? a : b;
}
inline Var vmin(const Var& a, const Var& b) {
  return a.value() <= b.value() ? a : b;
}
inline Var vmax(const Var& a, double c) { return a.value() >= c ? a : a.tape->leaf(c); }
inline Var vmin(const Var& a, double c) { return a.value() <= c ? a : a.tape->leaf(c); }
inline Var vabs(const Var& a) {
  return a.tape->unary(a, std::fabs(a.value()), a.value() >= 0.0 ? 1.0 : -1.0);
}

// Scalar-type adaptors so bound computations can be instantiated for both
// plain double (certification) and Var (training).
inline double vmax(double a, double b) { return a >= b ? a : b; }
inline double vmin(double a, double b) { return a <= b ? a : b; }
inline double vabs(double a) { return std::fabs(a); }
inline double relu(double a) { return a > 0.0 ? a : 0.0; }
inline double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

inline double scalar_value(double a) { return a; }
inline double scalar_value(const Var& a) { return a.value(); }

}  // namespace veritracer
