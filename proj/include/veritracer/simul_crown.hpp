#pragma once

// Constrained bound tightening: restrict the parameter box to models that
// agree with f on x, then optimize the counterfactual-side linear bound
// subject to that single agreement constraint. Both cases of the problem
//
//   y_hat = 1:  max  mu.z + nu   s.t.  alpha.z + beta >= 0,  z in box
//   y_hat = 0:  min  mu.z + nu   s.t.  alpha.z + beta <= 0,  z in box
//
// are solved by a greedy O(n log n) exchange: start at the corner that
// maximizes the constraint slack, then trade slack for objective along
// indices sorted by objective-gain-per-slack ratio. The walk is recorded
// on the tape, so the optimum is differentiable in all coefficients.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "veritracer/bounds.hpp"

namespace veritracer {

template <typename S>
struct SimulProblem {
  std::vector<S> mu;
  S nu;
  std::vector<S> alpha;
  S beta;
  std::vector<S> lo, hi;
  int label = 1;  // y_hat
};

template <typename S>
struct GreedyResult {
  bool feasible = false;
  S value;
};

namespace detail {

template <typename S>
void validate_problem(const SimulProblem<S>& p) {
  const std::size_t n = p.mu.size();
  if (p.alpha.size() != n || p.lo.size() != n || p.hi.size() != n)
    throw std::invalid_argument("greedy_solve: coefficient/box length mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isnan(scalar_value(p.mu[i])) || std::isnan(scalar_value(p.alpha[i])))
      throw std::invalid_argument("greedy_solve: NaN coefficient");
  }
  if (std::isnan(scalar_value(p.nu)) || std::isnan(scalar_value(p.beta)))
    throw std::invalid_argument("greedy_solve: NaN coefficient");
}

// Maximization case (y_hat = 1); the y_hat = 0 case reduces to this by
// negating everything.
template <typename S>
GreedyResult<S> greedy_max(const std::vector<S>& mu, const S& nu,
                           const std::vector<S>& alpha, const S& beta,
                           const std::vector<S>& lo, const std::vector<S>& hi) {
  const std::size_t n = mu.size();

  // Constraint-maximizing corner; ties on alpha = 0 follow the objective,
  // and alpha = mu = 0 sits at the lower bound.
  std::vector<S> z;
  z.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = scalar_value(alpha[i]);
    const double m = scalar_value(mu[i]);
    z.push_back((a > 0.0 || (a == 0.0 && m > 0.0)) ? hi[i] : lo[i]);
  }

  S slack = beta;
  S obj = nu;
  for (std::size_t i = 0; i < n; ++i) {
    slack = slack + alpha[i] * z[i];
    obj = obj + mu[i] * z[i];
  }
  GreedyResult<S> res;
  if (scalar_value(slack) < 0.0) {
    res.feasible = false;
    res.value = obj;  // placeholder; callers must honor the flag
    return res;
  }

  // Indices where objective and constraint disagree, sorted descendingly
  // by gain rate -mu_i/alpha_i (stable: ties keep index order).
  std::vector<std::size_t> trade;
  std::vector<double> ratio(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (scalar_value(mu[i]) * scalar_value(alpha[i]) < 0.0) {
      trade.push_back(i);
      ratio[i] = -scalar_value(mu[i]) / scalar_value(alpha[i]);
    }
  }
  std::stable_sort(trade.begin(), trade.end(),
                   [&](std::size_t a, std::size_t b) { return ratio[a] > ratio[b]; });

  for (std::size_t i : trade) {
    S range = hi[i] - lo[i];
    S cost = vabs(alpha[i]) * range;
    S gain = vabs(mu[i]) * range;
    if (scalar_value(cost) > scalar_value(slack)) {
      obj = obj + gain * (slack / cost);
      res.feasible = true;
      res.value = obj;
      return res;
    }
    slack = slack - cost;
    obj = obj + gain;
  }
  res.feasible = true;
  res.value = obj;
  return res;
}

}  // namespace detail

// Optimal value of the constrained linear program over the box. For the
// y_hat = 1 case an infeasible constraint is signalled with feasible =
// false (conceptually -infinity; +infinity for y_hat = 0).
template <typename S>
GreedyResult<S> greedy_solve(const SimulProblem<S>& p) {
  detail::validate_problem(p);
  for (std::size_t i = 0; i < p.lo.size(); ++i)
    if (scalar_value(p.lo[i]) > scalar_value(p.hi[i]))
      throw std::invalid_argument("greedy_solve: box with lo > hi");
  if (p.label == 1)
    return detail::greedy_max(p.mu, p.nu, p.alpha, p.beta, p.lo, p.hi);

  // min mu.z + nu s.t. alpha.z + beta <= 0  ==  -(max -mu.z - nu s.t. -alpha.z - beta >= 0)
  std::vector<S> nmu, nalpha;
  nmu.reserve(p.mu.size());
  nalpha.reserve(p.alpha.size());
  for (const S& m : p.mu) nmu.push_back(-m);
  for (const S& a : p.alpha) nalpha.push_back(-a);
  GreedyResult<S> r = detail::greedy_max(nmu, -p.nu, nalpha, -p.beta, p.lo, p.hi);
  r.value = -r.value;
  return r;
}

// Plain-double convenience: maps infeasibility to the sentinel
// -inf (y_hat = 1) / +inf (y_hat = 0).
inline double greedy_value(const SimulProblem<double>& p) {
  GreedyResult<double> r = greedy_solve(p);
  if (r.feasible) return r.value;
  return p.label == 1 ? -std::numeric_limits<double>::infinity()
                      : std::numeric_limits<double>::infinity();
}

// Selects the Eq.-style coefficient pairing: the upper bounds for
// y_hat = 1, the lower bounds for y_hat = 0.
template <typename S>
SimulProblem<S> build_simul_problem(const LinBounds<S>& x_bounds,
                                    const LinBounds<S>& cf_bounds,
                                    const ParamBox<S>& box, int y_hat) {
  SimulProblem<S> p;
  box.flat_bounds(p.lo, p.hi);
  if (x_bounds.alpha_hi.size() != p.lo.size() || cf_bounds.alpha_hi.size() != p.lo.size())
    throw std::invalid_argument("build_simul_problem: flattening mismatch");
  p.label = y_hat;
  if (y_hat == 1) {
    p.mu = cf_bounds.alpha_hi;
    p.nu = cf_bounds.beta_hi;
    p.alpha = x_bounds.alpha_hi;
    p.beta = x_bounds.beta_hi;
  } else {
    p.mu = cf_bounds.alpha_lo;
    p.nu = cf_bounds.beta_lo;
    p.alpha = x_bounds.alpha_lo;
    p.beta = x_bounds.beta_lo;
  }
  return p;
}

enum class BoundMethod { IBP, CrownIBP, SimulCrown };

// Worst-case pre-sigmoid logit of any agreeing model on the
// counterfactual, per method. For y_hat = 1 the result upper-bounds the
// worst-case logit; for y_hat = 0 it lower-bounds it. An infeasible
// agreement constraint falls back to the unconstrained CROWN-IBP bound,
// which keeps the value finite and stays sound.
template <typename S>
S worst_case_logit(const MlpView<S>& f, const std::vector<double>& deltas,
                   const std::vector<S>& x, const std::vector<S>& x_prime, int y_hat,
                   BoundMethod method) {
  ParamBox<S> box = build_param_box(f, deltas);
  if (method == BoundMethod::IBP) {
    IntervalScalar<S> iv = ibp_forward(box, x_prime);
    return y_hat == 1 ? iv.hi : iv.lo;
  }
  LinBounds<S> cf_bounds = crown_ibp_bounds(box, x_prime);
  if (method == BoundMethod::CrownIBP) {
    IntervalScalar<S> iv = concretize(cf_bounds, box);
    return y_hat == 1 ? iv.hi : iv.lo;
  }
  LinBounds<S> x_bounds = crown_ibp_bounds(box, x);
  SimulProblem<S> prob = build_simul_problem(x_bounds, cf_bounds, box, y_hat);
  GreedyResult<S> r = greedy_solve(prob);
  if (r.feasible) return r.value;
  IntervalScalar<S> iv = concretize(cf_bounds, box);
  return y_hat == 1 ? iv.hi : iv.lo;
}

inline double simul_crown_logit_bound(const MlpParams& f, const MultiplicitySpec& spec,
                                      const std::vector<double>& x,
                                      const std::vector<double>& x_prime, int y_hat) {
  return worst_case_logit(make_view(f), spec.tensor_deltas(f), x, x_prime, y_hat,
                          BoundMethod::SimulCrown);
}

}  // namespace veritracer
