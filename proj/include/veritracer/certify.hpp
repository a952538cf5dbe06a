#pragma once

// Post-training deterministic certification: a counterfactual is certified
// robust when the method's sound bound proves its label is invariant over
// every agreeing model in the parameter box. The boundary t = 0 is not
// certified (strict inequality).

#include <string>
#include <vector>

#include <json.hpp>

#include "veritracer/parallel.hpp"
#include "veritracer/serialize.hpp"
#include "veritracer/simul_crown.hpp"

namespace veritracer {

inline std::string method_name(BoundMethod m) {
  switch (m) {
    case BoundMethod::IBP: return "ibp";
    case BoundMethod::CrownIBP: return "crown-ibp";
    case BoundMethod::SimulCrown: return "simul-crown";
  }
  return "?";
}

inline BoundMethod method_from_name(const std::string& s) {
  if (s == "ibp") return BoundMethod::IBP;
  if (s == "crown-ibp") return BoundMethod::CrownIBP;
  if (s == "simul-crown") return BoundMethod::SimulCrown;
  throw std::invalid_argument("unknown bound method '" + s + "'");
}

struct Certificate {
  std::size_t input_id = 0;
  int y_hat = 0;
  BoundMethod method = BoundMethod::SimulCrown;
  double worst_logit = 0.0;
  bool robust = false;
  std::string reason;  // empty, "invalid-on-f", or "boundary"
  // Spec snapshot.
  std::string norm = "linf";
  double kappa = 0.0;
  std::vector<double> layer_deltas;
  bool outer_approximated = false;
  std::string model_fingerprint;
};

inline Certificate certify_pair(const JointModel& model, const MultiplicitySpec& spec,
                                const std::vector<double>& x,
                                const std::vector<double>& x_prime, BoundMethod method,
                                std::size_t input_id = 0,
                                const std::string& fingerprint = "") {
  Certificate cert;
  cert.input_id = input_id;
  cert.method = method;
  cert.norm = spec.p == NormOrder::Linf ? "linf" : "l2";
  cert.kappa = spec.kappa;
  cert.outer_approximated = spec.outer_approximated();
  cert.model_fingerprint = fingerprint.empty() ? model_fingerprint(model) : fingerprint;

  const MlpParams f = model.classifier_params();
  cert.layer_deltas = spec.tensor_deltas(f);
  cert.y_hat = predict_hard(model, x);

  if (predict_hard(model, x_prime) != 1 - cert.y_hat) {
    cert.robust = false;
    cert.reason = "invalid-on-f";
    cert.worst_logit = logit_of(f, x_prime);
    return cert;
  }

  const double t = worst_case_logit(make_view(f), cert.layer_deltas, x, x_prime,
                                    cert.y_hat, method);
  cert.worst_logit = t;
  // y_hat = 1: the CF must stay on the 0 side, so the worst-case logit
  // must be strictly negative; symmetric for y_hat = 0.
  cert.robust = cert.y_hat == 1 ? (t < 0.0) : (t > 0.0);
  if (!cert.robust && (t == 0.0)) cert.reason = "boundary";
  return cert;
}

// Fraction of test instances whose own generated counterfactual is
// certified robust.
inline double robustness_rate(const JointModel& model, const MultiplicitySpec& spec,
                              const std::vector<std::vector<double>>& xs,
                              BoundMethod method) {
  if (xs.empty()) throw std::invalid_argument("robustness_rate: empty dataset");
  const std::string fp = model_fingerprint(model);
  std::vector<char> robust(xs.size(), 0);
  parallel_for(xs.size(), [&](std::size_t i) {
    const auto cf = generate_cf(model, xs[i]);
    robust[i] = certify_pair(model, spec, xs[i], cf, method, i, fp).robust ? 1 : 0;
  });
  std::size_t count = 0;
  for (char r : robust) count += r;
  return static_cast<double>(count) / static_cast<double>(xs.size());
}

inline nlohmann::ordered_json certificate_to_json(const Certificate& c) {
  nlohmann::ordered_json j;
  j["input_id"] = c.input_id;
  j["y_hat"] = c.y_hat;
  j["method"] = method_name(c.method);
  j["worst_logit"] = double_to_string(c.worst_logit);
  j["robust"] = c.robust;
  if (!c.reason.empty()) j["reason"] = c.reason;
  nlohmann::ordered_json spec;
  spec["norm"] = c.norm;
  spec["kappa"] = double_to_string(c.kappa);
  nlohmann::ordered_json deltas = nlohmann::ordered_json::array();
  for (double d : c.layer_deltas) deltas.push_back(double_to_string(d));
  spec["layer_deltas"] = std::move(deltas);
  spec["outer_approximated"] = c.outer_approximated;
  j["spec"] = std::move(spec);
  j["model_fingerprint"] = c.model_fingerprint;
  return j;
}

inline std::string certificates_to_json(const std::vector<Certificate>& certs) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& c : certs) arr.push_back(certificate_to_json(c));
  return arr.dump(2) + "\n";
}

// Monte-Carlo soundness audit: samples parameter points in the box that
// agree with f on x and checks the CF label is preserved. Returns the
// number of violations.
inline std::size_t audit_certificate(const JointModel& model, const MultiplicitySpec& spec,
                                     const std::vector<double>& x,
                                     const std::vector<double>& x_prime,
                                     std::size_t n_samples, std::uint64_t seed) {
  const MlpParams f = model.classifier_params();
  const auto deltas = spec.tensor_deltas(f);
  const int y_hat = predict_hard(model, x);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MlpParams sample = f;
  std::size_t violations = 0;
  for (std::size_t s = 0; s < n_samples; ++s) {
    for (std::size_t li = 0; li < f.layers.size(); ++li) {
      const double dw = deltas[2 * li], db = deltas[2 * li + 1];
      for (std::size_t k = 0; k < f.layers[li].weights.size(); ++k)
        sample.layers[li].weights[k] = f.layers[li].weights[k] + dw * u(rng);
      for (std::size_t k = 0; k < f.layers[li].bias.size(); ++k)
        sample.layers[li].bias[k] = f.layers[li].bias[k] + db * u(rng);
    }
    const int label_x = logit_of(sample, x) >= 0.0 ? 1 : 0;
    if (label_x != y_hat) continue;  // not an agreeing model
    const int label_cf = logit_of(sample, x_prime) >= 0.0 ? 1 : 0;
    if (label_cf != 1 - y_hat) ++violations;
  }
  return violations;
}

}  // namespace veritracer
