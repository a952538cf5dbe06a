#pragma once

// Joint training: each epoch generates counterfactuals with the current
// weights, takes a full mini-batch pass optimizing the classifier on its
// loss, then a full pass optimizing the generator on its loss. Per-layer
// radii are refreshed from the current parameter norms at the start of
// every epoch, and kappa ramps linearly over the first half of training.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "veritracer/certify.hpp"
#include "veritracer/dataset.hpp"
#include "veritracer/losses.hpp"
#include "veritracer/model.hpp"

namespace veritracer {

struct TrainConfig {
  std::size_t max_epochs = 100;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double kappa = 0.05;
  NormOrder p = NormOrder::Linf;
  bool kappa_ramp = true;  // linear ramp over the first half of epochs
  LossWeights weights;
  std::uint64_t seed = 0;

  void validate() const {
    if (max_epochs < 1) throw std::invalid_argument("TrainConfig: max_epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    weights.validate();
  }
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss_f = 0.0;
  double loss_g = 0.0;
  double accuracy = 0.0;
  double validity = 0.0;
  double cert_rate = 0.0;
};

struct TrainingNaNError : std::runtime_error {
  TrainingNaNError(std::size_t epoch, std::size_t batch, const std::string& phase)
      : std::runtime_error("NaN loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch) + " (" + phase + " phase)") {}
};

namespace detail {

struct AdamState {
  std::vector<double> m, v;
  std::size_t step = 0;

  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

  void update(std::vector<double>& params, const std::vector<double>& grad,
              const TrainConfig& cfg) {
    ++step;
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(step));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
      v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
      params[i] -= cfg.learning_rate * (m[i] / corr1) /
                   (std::sqrt(v[i] / corr2) + cfg.adam_eps);
    }
  }
};

// Differentiable counterpart of generate_cf used while optimizing g:
// clamp to the [0,1] box on every dimension (one-hot snapping happens only
// at inference).
inline std::vector<Var> generate_cf_soft(Tape& tape, const MlpView<Var>& encoder,
                                         const MlpView<Var>& cf_head,
                                         const std::vector<Var>& x) {
  std::vector<Var> h = x;
  for (const auto& l : encoder.layers)
    h = relu(add(matvec(l.weights, l.out, l.in, h), l.bias));
  for (std::size_t i = 0; i < cf_head.layers.size(); ++i) {
    const auto& l = cf_head.layers[i];
    h = add(matvec(l.weights, l.out, l.in, h), l.bias);
    if (i + 1 < cf_head.layers.size()) h = relu(h);
  }
  std::vector<Var> out;
  out.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out.push_back(vmin(vmax(x[i] + h[i], 0.0), 1.0));
  (void)tape;
  return out;
}

inline std::vector<std::vector<std::size_t>> make_batches(std::size_t n,
                                                          std::size_t batch_size,
                                                          std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += batch_size) {
    batches.emplace_back(idx.begin() + i,
                         idx.begin() + std::min(i + batch_size, n));
  }
  return batches;
}

}  // namespace detail

namespace detail {

inline EpochLog evaluate_epoch(const JointModel& model, const SplitDataset& ds,
                               const TrainConfig& cfg, std::size_t epoch, double lf,
                               double lg) {
  EpochLog log;
  log.epoch = epoch;
  log.loss_f = lf;
  log.loss_g = lg;
  std::size_t correct = 0, valid = 0;
  for (std::size_t i = 0; i < ds.test_x.size(); ++i) {
    const int pred = predict_hard(model, ds.test_x[i]);
    if (pred == ds.test_y[i]) ++correct;
    const auto cf = generate_cf(model, ds.test_x[i]);
    if (predict_hard(model, cf) == 1 - pred) ++valid;
  }
  const double n = static_cast<double>(ds.test_x.size());
  log.accuracy = n > 0 ? correct / n : 0.0;
  log.validity = n > 0 ? valid / n : 0.0;
  MultiplicitySpec spec{cfg.p, cfg.kappa, std::nullopt};
  log.cert_rate = robustness_rate(model, spec, ds.test_x, BoundMethod::SimulCrown);
  return log;
}

}  // namespace detail

struct TrainResult {
  JointModel model;
  std::vector<EpochLog> log;
};

// One epoch of Alg.-style alternation starting from `model`, in place.
// Returns {mean loss_f, mean loss_g} over the epoch's batches.
inline std::pair<double, double> train_epoch(JointModel& model, const SplitDataset& ds,
                                             const TrainConfig& cfg, double kappa_now,
                                             std::size_t epoch,
                                             detail::AdamState& adam_f,
                                             detail::AdamState& adam_g) {
  MlpParams f_params = model.classifier_params();
  MultiplicitySpec spec{cfg.p, kappa_now, std::nullopt};
  const std::vector<double> deltas = spec.tensor_deltas(f_params);

  // Step 1: counterfactuals for the whole training set with current weights.
  std::vector<std::vector<double>> cfs;
  cfs.reserve(ds.train_x.size());
  for (const auto& x : ds.train_x) cfs.push_back(generate_cf(model, x));

  std::mt19937_64 batch_rng(cfg.seed ^ (0xa0761d6478bd642full * (epoch + 1)));
  const auto batches_f = detail::make_batches(ds.train_x.size(), cfg.batch_size, batch_rng);
  const auto batches_g = detail::make_batches(ds.train_x.size(), cfg.batch_size, batch_rng);

  double lf_sum = 0.0;
  std::size_t lf_cnt = 0;

  // Step 2: optimize the classifier on L_f (counterfactuals held fixed).
  std::vector<double> f_flat = f_params.flatten();
  for (std::size_t b = 0; b < batches_f.size(); ++b) {
    Tape tape;
    MlpView<Var> fv = lift_view(tape, f_params);
    Var total = tape.leaf(0.0);
    for (std::size_t i : batches_f[b]) {
      std::vector<Var> x = lift(tape, ds.train_x[i]);
      std::vector<Var> xp = lift(tape, cfs[i]);
      total = total + loss_f(x, ds.train_y[i], xp, fv, deltas, cfg.weights);
    }
    total = total / static_cast<double>(batches_f[b].size());
    if (!std::isfinite(total.value())) throw TrainingNaNError(epoch, b, "f");
    lf_sum += total.value();
    ++lf_cnt;
    tape.backward(total);
    std::vector<double> grad;
    grad.reserve(f_flat.size());
    for (const auto& l : fv.layers) {
      for (const Var& w : l.weights) grad.push_back(w.grad());
      for (const Var& bb : l.bias) grad.push_back(bb.grad());
    }
    adam_f.update(f_flat, grad, cfg);
    f_params.unflatten(f_flat);
  }
  model.set_classifier_params(f_params);

  double lg_sum = 0.0;
  std::size_t lg_cnt = 0;

  // Step 3: optimize the generator on L_g (classifier held fixed).
  std::vector<double> g_flat = model.cf_head.flatten();
  MlpParams g_params = model.cf_head;
  for (std::size_t b = 0; b < batches_g.size(); ++b) {
    Tape tape;
    MlpView<Var> fv = lift_view(tape, f_params);
    MlpView<Var> enc = lift_view(tape, model.encoder);
    MlpView<Var> gv = lift_view(tape, g_params);
    Var total = tape.leaf(0.0);
    for (std::size_t i : batches_g[b]) {
      std::vector<Var> x = lift(tape, ds.train_x[i]);
      std::vector<Var> xp = detail::generate_cf_soft(tape, enc, gv, x);
      total = total + loss_g(x, ds.train_y[i], xp, fv, deltas, cfg.weights);
    }
    total = total / static_cast<double>(batches_g[b].size());
    if (!std::isfinite(total.value())) throw TrainingNaNError(epoch, b, "g");
    lg_sum += total.value();
    ++lg_cnt;
    tape.backward(total);
    std::vector<double> grad;
    grad.reserve(g_flat.size());
    for (const auto& l : gv.layers) {
      for (const Var& w : l.weights) grad.push_back(w.grad());
      for (const Var& bb : l.bias) grad.push_back(bb.grad());
    }
    adam_g.update(g_flat, grad, cfg);
    g_params.unflatten(g_flat);
  }
  model.cf_head = g_params;

  return {lf_cnt ? lf_sum / lf_cnt : 0.0, lg_cnt ? lg_sum / lg_cnt : 0.0};
}

inline TrainResult train(const SplitDataset& ds, const ArchSpec& arch,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (ds.train_x.empty()) throw std::invalid_argument("train: empty dataset");
  TrainResult res;
  res.model = init_joint_model(arch, ds.schema, cfg.seed);

  detail::AdamState adam_f(res.model.classifier_params().param_count());
  detail::AdamState adam_g(res.model.cf_head.param_count());

  const std::size_t ramp_epochs = cfg.kappa_ramp ? std::max<std::size_t>(1, cfg.max_epochs / 2)
                                                 : 1;
  for (std::size_t e = 0; e < cfg.max_epochs; ++e) {
    double kappa_now = cfg.kappa;
    if (cfg.kappa_ramp && e < ramp_epochs)
      kappa_now = cfg.kappa * static_cast<double>(e + 1) / static_cast<double>(ramp_epochs);
    auto [lf, lg] = train_epoch(res.model, ds, cfg, kappa_now, e, adam_f, adam_g);
    res.log.push_back(detail::evaluate_epoch(res.model, ds, cfg, e, lf, lg));
  }
  return res;
}

// Continues training an existing model on (possibly shifted) data for a
// small number of epochs at constant kappa. epochs = 0 leaves the
// parameters untouched.
inline TrainResult finetune(const JointModel& model, const SplitDataset& ds,
                            std::size_t epochs, TrainConfig cfg) {
  if (ds.schema.width() != model.schema.width())
    throw std::invalid_argument("finetune: dataset schema does not match model");
  TrainResult res;
  res.model = model;
  detail::AdamState adam_f(model.classifier_params().param_count());
  detail::AdamState adam_g(model.cf_head.param_count());
  for (std::size_t e = 0; e < epochs; ++e) {
    auto [lf, lg] = train_epoch(res.model, ds, cfg, cfg.kappa, e, adam_f, adam_g);
    res.log.push_back(detail::evaluate_epoch(res.model, ds, cfg, e, lf, lg));
  }
  return res;
}

// Largest per-layer l_inf drift between two parameter sets, reported per
// tensor in flattening order.
inline std::vector<double> parameter_drift(const MlpParams& a, const MlpParams& b) {
  if (a.layers.size() != b.layers.size())
    throw std::invalid_argument("parameter_drift: layer count mismatch");
  std::vector<double> drift;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    double dw = 0.0, db = 0.0;
    for (std::size_t k = 0; k < a.layers[i].weights.size(); ++k)
      dw = std::max(dw, std::fabs(a.layers[i].weights[k] - b.layers[i].weights[k]));
    for (std::size_t k = 0; k < a.layers[i].bias.size(); ++k)
      db = std::max(db, std::fabs(a.layers[i].bias[k] - b.layers[i].bias[k]));
    drift.push_back(dw);
    drift.push_back(db);
  }
  return drift;
}

}  // namespace veritracer
