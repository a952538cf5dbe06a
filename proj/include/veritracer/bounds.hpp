#pragma once

// Interval arithmetic and bound propagation where the *parameters* of the
// classifier are interval-valued and the input is fixed. Two propagators:
//
//  - ibp_forward: plain interval arithmetic through every layer.
//  - crown_bounds: the last linear layer stays symbolic (linear in its own
//    weights and bias), inputs to it are bounded by IBP through the earlier
//    layers, and the bilinear weight-times-activation terms are absorbed
//    into constant coefficients plus interval-endpoint slack in the offset.
//    Coefficients of all upstream parameters are zero; their influence is
//    fully absorbed into the offsets. For a one-layer classifier this
//    collapses to the exact symbolic form (alpha = (x; 1), beta = 0).
//
// Everything is templated on the scalar type: double for certification,
// Var for differentiating the bounds during training.

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "veritracer/model.hpp"
#include "veritracer/ops.hpp"

namespace veritracer {

enum class NormOrder { Linf, L2 };

// Defines the multiplicity set around a trained classifier: per-tensor
// radii delta_i = kappa * ||theta_i||_p, with weight matrices and bias
// vectors counted as separate tensors. The l2 ball is outer-bounded by its
// enclosing box, and results derived from it are flagged as such.
struct MultiplicitySpec {
  NormOrder p = NormOrder::Linf;
  double kappa = 0.0;
  // When set, every tensor uses this radius instead of kappa * norm.
  std::optional<double> explicit_delta;

  bool outer_approximated() const { return p == NormOrder::L2; }

  double tensor_norm(const std::vector<double>& t) const {
    if (p == NormOrder::Linf) {
      double m = 0.0;
      for (double v : t) m = std::max(m, std::fabs(v));
      return m;
    }
    double s = 0.0;
    for (double v : t) s += v * v;
    return std::sqrt(s);
  }

  // One radius per parameter tensor, in flattening order:
  // W0, b0, W1, b1, ...
  std::vector<double> tensor_deltas(const MlpParams& f) const {
    std::vector<double> d;
    d.reserve(2 * f.layers.size());
    for (const auto& l : f.layers) {
      if (explicit_delta) {
        d.push_back(*explicit_delta);
        d.push_back(*explicit_delta);
      } else {
        d.push_back(kappa * tensor_norm(l.weights));
        d.push_back(kappa * tensor_norm(l.bias));
      }
    }
    return d;
  }
};

template <typename S>
struct IntervalScalar {
  S lo;
  S hi;
};

// Parameter view of an MLP with generic scalar type (double weights or
// tape Vars), mirroring MlpParams layer structure and flattening order.
template <typename S>
struct MlpView {
  struct Layer {
    std::size_t out, in;
    std::vector<S> weights;
    std::vector<S> bias;
  };
  std::vector<Layer> layers;

  std::size_t flat_size() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
  }
};

inline MlpView<double> make_view(const MlpParams& p) {
  MlpView<double> v;
  for (const auto& l : p.layers) v.layers.push_back({l.out, l.in, l.weights, l.bias});
  return v;
}

inline MlpView<Var> lift_view(Tape& tape, const MlpParams& p) {
  MlpView<Var> v;
  for (const auto& l : p.layers)
    v.layers.push_back({l.out, l.in, lift(tape, l.weights), lift(tape, l.bias)});
  return v;
}

template <typename S>
S view_logit(const MlpView<S>& f, const std::vector<S>& x) {
  std::vector<S> h = x;
  for (std::size_t i = 0; i < f.layers.size(); ++i) {
    const auto& l = f.layers[i];
    h = add(matvec(l.weights, l.out, l.in, h), l.bias);
    if (i + 1 < f.layers.size()) h = relu(h);
  }
  check_dims(h.size(), 1, "view_logit");
  return h[0];
}

// Axis-aligned box around the parameters: midpoint theta_f, per-tensor
// radius delta_i.
template <typename S>
struct ParamBox {
  struct Layer {
    std::size_t out, in;
    std::vector<IntervalScalar<S>> weights;
    std::vector<IntervalScalar<S>> bias;
  };
  std::vector<Layer> layers;

  std::size_t flat_size() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
  }

  void flat_bounds(std::vector<S>& lo, std::vector<S>& hi) const {
    lo.clear();
    hi.clear();
    lo.reserve(flat_size());
    hi.reserve(flat_size());
    for (const auto& l : layers) {
      for (const auto& w : l.weights) { lo.push_back(w.lo); hi.push_back(w.hi); }
      for (const auto& b : l.bias) { lo.push_back(b.lo); hi.push_back(b.hi); }
    }
  }
};

template <typename S>
ParamBox<S> build_param_box(const MlpView<S>& f, const std::vector<double>& deltas) {
  if (deltas.size() != 2 * f.layers.size())
    throw std::invalid_argument("build_param_box: need one delta per tensor");
  ParamBox<S> box;
  for (std::size_t i = 0; i < f.layers.size(); ++i) {
    const auto& l = f.layers[i];
    typename ParamBox<S>::Layer bl;
    bl.out = l.out;
    bl.in = l.in;
    const double dw = deltas[2 * i], db = deltas[2 * i + 1];
    bl.weights.reserve(l.weights.size());
    for (const S& w : l.weights) bl.weights.push_back({w - dw, w + dw});
    bl.bias.reserve(l.bias.size());
    for (const S& b : l.bias) bl.bias.push_back({b - db, b + db});
    box.layers.push_back(std::move(bl));
  }
  return box;
}

inline ParamBox<double> build_param_box(const MlpParams& f, const MultiplicitySpec& spec) {
  return build_param_box(make_view(f), spec.tensor_deltas(f));
}

namespace detail {

// Interval times a point value; the branch is picked by value so gradients
// follow the active endpoint.
template <typename S>
IntervalScalar<S> mul_point(const IntervalScalar<S>& w, const S& x) {
  S a = w.lo * x, b = w.hi * x;
  return {vmin(a, b), vmax(a, b)};
}

template <typename S>
IntervalScalar<S> mul_interval(const IntervalScalar<S>& w, const IntervalScalar<S>& h) {
  S p1 = w.lo * h.lo, p2 = w.lo * h.hi, p3 = w.hi * h.lo, p4 = w.hi * h.hi;
  return {vmin(vmin(p1, p2), vmin(p3, p4)), vmax(vmax(p1, p2), vmax(p3, p4))};
}

// Pre-activation intervals of one layer: concrete input at depth 0,
// interval inputs afterwards.
template <typename S>
std::vector<IntervalScalar<S>> layer_intervals_point(
    const typename ParamBox<S>::Layer& l, const std::vector<S>& x) {
  check_dims(x.size(), l.in, "ibp layer");
  std::vector<IntervalScalar<S>> out;
  out.reserve(l.out);
  for (std::size_t r = 0; r < l.out; ++r) {
    IntervalScalar<S> acc = mul_point(l.weights[r * l.in], x[0]);
    for (std::size_t c = 1; c < l.in; ++c) {
      IntervalScalar<S> p = mul_point(l.weights[r * l.in + c], x[c]);
      acc = {acc.lo + p.lo, acc.hi + p.hi};
    }
    out.push_back({acc.lo + l.bias[r].lo, acc.hi + l.bias[r].hi});
  }
  return out;
}

template <typename S>
std::vector<IntervalScalar<S>> layer_intervals_interval(
    const typename ParamBox<S>::Layer& l, const std::vector<IntervalScalar<S>>& h) {
  check_dims(h.size(), l.in, "ibp layer");
  std::vector<IntervalScalar<S>> out;
  out.reserve(l.out);
  for (std::size_t r = 0; r < l.out; ++r) {
    IntervalScalar<S> acc = mul_interval(l.weights[r * l.in], h[0]);
    for (std::size_t c = 1; c < l.in; ++c) {
      IntervalScalar<S> p = mul_interval(l.weights[r * l.in + c], h[c]);
      acc = {acc.lo + p.lo, acc.hi + p.hi};
    }
    out.push_back({acc.lo + l.bias[r].lo, acc.hi + l.bias[r].hi});
  }
  return out;
}

// IBP through all layers up to (excluding) `stop`, applying ReLU after
// each propagated layer. Returns the interval input to layer `stop`.
template <typename S>
std::vector<IntervalScalar<S>> ibp_prefix(const ParamBox<S>& box, const std::vector<S>& x,
                                          std::size_t stop) {
  std::vector<IntervalScalar<S>> h;
  for (std::size_t i = 0; i < stop; ++i) {
    h = (i == 0) ? layer_intervals_point<S>(box.layers[0], x)
                 : layer_intervals_interval<S>(box.layers[i], h);
    for (auto& iv : h) iv = {relu(iv.lo), relu(iv.hi)};
  }
  return h;
}

}  // namespace detail

// Sound enclosure of the pre-sigmoid logit over the whole parameter box.
template <typename S>
IntervalScalar<S> ibp_forward(const ParamBox<S>& box, const std::vector<S>& x) {
  if (box.layers.empty()) throw std::invalid_argument("ibp_forward: empty model");
  const std::size_t last = box.layers.size() - 1;
  std::vector<IntervalScalar<S>> out;
  if (last == 0) {
    out = detail::layer_intervals_point<S>(box.layers[0], x);
  } else {
    auto h = detail::ibp_prefix(box, x, last);
    out = detail::layer_intervals_interval<S>(box.layers[last], h);
  }
  check_dims(out.size(), 1, "ibp_forward output");
  return out[0];
}

// Linear-in-parameters bounds over the flattened parameter vector:
// sigma(alpha_lo . theta + beta_lo) <= f_theta(x) <= sigma(alpha_hi . theta + beta_hi).
template <typename S>
struct LinBounds {
  std::vector<S> alpha_lo, alpha_hi;
  S beta_lo, beta_hi;
};

template <typename S>
S const_like(const S& ref, double c);
template <>
inline double const_like<double>(const double&, double c) { return c; }
template <>
inline Var const_like<Var>(const Var& ref, double c) { return ref.tape->leaf(c); }

template <typename S>
LinBounds<S> crown_ibp_bounds(const ParamBox<S>& box, const std::vector<S>& x) {
  if (box.layers.empty()) throw std::invalid_argument("crown_ibp_bounds: empty model");
  const std::size_t last = box.layers.size() - 1;
  const auto& ll = box.layers[last];
  if (ll.out != 1)
    throw std::invalid_argument("crown_ibp_bounds: classifier must have one output");

  // Input to the last layer: exact point at depth 1, IBP interval beyond.
  std::vector<IntervalScalar<S>> h;
  if (last == 0) {
    check_dims(x.size(), ll.in, "crown_ibp_bounds");
    h.reserve(x.size());
    for (const S& xi : x) h.push_back({xi, xi});
  } else {
    h = detail::ibp_prefix(box, x, last);
  }

  const S zero = const_like(ll.bias[0].lo, 0.0);
  const S one = const_like(ll.bias[0].lo, 1.0);

  LinBounds<S> lb;
  lb.alpha_lo.assign(box.flat_size(), zero);
  lb.alpha_hi.assign(box.flat_size(), zero);
  lb.beta_lo = zero;
  lb.beta_hi = zero;

  // Offset of the last layer's weights in the flattened vector.
  std::size_t offset = 0;
  for (std::size_t i = 0; i < last; ++i)
    offset += box.layers[i].weights.size() + box.layers[i].bias.size();

  // w_k * h_k <= h_lo_k * w_k + max(0, w_hi_k) * (h_hi_k - h_lo_k) and
  // w_k * h_k >= h_lo_k * w_k + min(0, w_lo_k) * (h_hi_k - h_lo_k),
  // exact (slack zero) whenever h is a point.
  for (std::size_t k = 0; k < ll.in; ++k) {
    lb.alpha_lo[offset + k] = h[k].lo;
    lb.alpha_hi[offset + k] = h[k].lo;
    S range = h[k].hi - h[k].lo;
    lb.beta_hi = lb.beta_hi + vmax(ll.weights[k].hi, 0.0) * range;
    lb.beta_lo = lb.beta_lo + vmin(ll.weights[k].lo, 0.0) * range;
  }
  // Bias enters exactly with coefficient one.
  lb.alpha_lo[offset + ll.in] = one;
  lb.alpha_hi[offset + ll.in] = one;
  return lb;
}

// Closed-form interval of the symbolic bounds over the box (sign-based
// endpoint selection for each coordinate).
template <typename S>
IntervalScalar<S> concretize(const LinBounds<S>& lin, const ParamBox<S>& box) {
  std::vector<S> lo, hi;
  box.flat_bounds(lo, hi);
  if (lin.alpha_lo.size() != lo.size() || lin.alpha_hi.size() != lo.size())
    throw std::invalid_argument("concretize: coefficient length != flattened box length");
  S vlo = lin.beta_lo;
  S vhi = lin.beta_hi;
  for (std::size_t i = 0; i < lo.size(); ++i) {
    vlo = vlo + vmin(lin.alpha_lo[i] * lo[i], lin.alpha_lo[i] * hi[i]);
    vhi = vhi + vmax(lin.alpha_hi[i] * lo[i], lin.alpha_hi[i] * hi[i]);
  }
  return {vlo, vhi};
}

}  // namespace veritracer
