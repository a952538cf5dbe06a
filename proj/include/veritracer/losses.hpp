#pragma once

// Training losses: accuracy, CF validity, CF quality, and the
// overapproximated robust-CF loss, composed into the classifier loss
//   L_f = lambda1 * L_A + lambda2 * L_R
// and the generator loss
//   L_g = lambda3 * L_Q + lambda4 * L_V + lambda2 * L_R.

#include <stdexcept>

#include "veritracer/simul_crown.hpp"

namespace veritracer {

struct LossWeights {
  double lambda1 = 1.0;  // accuracy
  double lambda2 = 0.5;  // robust CF
  double lambda3 = 0.2;  // quality (proximity)
  double lambda4 = 1.0;  // validity
  BoundMethod method = BoundMethod::SimulCrown;

  void validate() const {
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0 || lambda4 < 0)
      throw std::invalid_argument("LossWeights: lambdas must be nonnegative");
  }
};

template <typename S>
S loss_accuracy(const S& soft, int y) {
  return mse(soft, static_cast<double>(y));
}

template <typename S>
S loss_validity(const S& soft_on_cf, int y) {
  return mse(soft_on_cf, static_cast<double>(1 - y));
}

template <typename S>
S loss_quality(const std::vector<S>& x, const std::vector<S>& x_prime) {
  return mean_l1(x, x_prime);
}

// MSE against the flipped label at the worst-case soft output over the
// (relaxed) multiplicity set, per the chosen bound method.
template <typename S>
S loss_robust_overapprox(const std::vector<S>& x, const std::vector<S>& x_prime,
                         const MlpView<S>& f, const std::vector<double>& deltas,
                         int y_hat, BoundMethod method) {
  S t = worst_case_logit(f, deltas, x, x_prime, y_hat, method);
  return mse(sigmoid(t), static_cast<double>(1 - y_hat));
}

// y: ground-truth label used by L_A; y_hat = f(x) used inside L_R.
template <typename S>
S loss_f(const std::vector<S>& x, int y, const std::vector<S>& x_prime,
         const MlpView<S>& f, const std::vector<double>& deltas,
         const LossWeights& w) {
  int y_hat = scalar_value(view_logit(f, x)) >= 0.0 ? 1 : 0;
  S total = w.lambda1 * loss_accuracy(sigmoid(view_logit(f, x)), y);
  if (w.lambda2 > 0.0)
    total = total + w.lambda2 * loss_robust_overapprox(x, x_prime, f, deltas, y_hat, w.method);
  return total;
}

template <typename S>
S loss_g(const std::vector<S>& x, int y, const std::vector<S>& x_prime,
         const MlpView<S>& f, const std::vector<double>& deltas,
         const LossWeights& w) {
  int y_hat = scalar_value(view_logit(f, x)) >= 0.0 ? 1 : 0;
  S total = w.lambda3 * loss_quality(x, x_prime) +
            w.lambda4 * loss_validity(sigmoid(view_logit(f, x_prime)), y);
  if (w.lambda2 > 0.0)
    total = total + w.lambda2 * loss_robust_overapprox(x, x_prime, f, deltas, y_hat, w.method);
  return total;
}

}  // namespace veritracer
