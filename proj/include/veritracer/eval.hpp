#pragma once

// Empirical robustness protocols: cross-model validity under random
// initialization (RI), leave-one-out (LOO) and distribution shift (DS),
// plus per-instance CF quality metrics and generation timing.

#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "veritracer/certify.hpp"
#include "veritracer/dataset.hpp"
#include "veritracer/model.hpp"
#include "veritracer/trainer.hpp"

namespace veritracer {

enum class FleetVariation { RI, LOO, DS };

struct FleetSpec {
  FleetVariation variation = FleetVariation::RI;
  std::size_t fleet_size = 10;
  double loo_drop_fraction = 0.01;
  std::size_t ds_finetune_epochs = 20;
  std::size_t ds_trials = 3;
  std::uint64_t base_seed = 0;
};

struct MeanStd {
  double mean = 0.0;
  double std = std::numeric_limits<double>::quiet_NaN();  // NaN when undefined
};

inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd s;
  if (v.empty()) return s;
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  if (v.size() < 2) return s;
  double sq = 0.0;
  for (double x : v) sq += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(sq / static_cast<double>(v.size() - 1));
  return s;
}

// Pairwise cross-model validity matrix: entry (i, j), i != j, is the
// fraction of model i's counterfactuals that keep their target label under
// model j. Only pairs valid on the source model are counted.
struct CrossModelReport {
  std::vector<std::vector<double>> pair_matrix;  // diagonal = 1
  MeanStd rate;                                  // over ordered pairs i != j
};

inline CrossModelReport cross_model_validity(const std::vector<JointModel>& fleet,
                                             const std::vector<std::vector<double>>& xs) {
  if (fleet.size() < 2)
    throw std::invalid_argument("cross_model_validity: fleet size must be >= 2");
  const std::size_t n = fleet.size();

  // Counterfactuals and target labels per source model.
  std::vector<std::vector<std::vector<double>>> cfs(n);
  std::vector<std::vector<int>> targets(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& x : xs) {
      const int pred = predict_hard(fleet[i], x);
      const auto cf = generate_cf(fleet[i], x);
      if (predict_hard(fleet[i], cf) != 1 - pred) continue;  // invalid on source
      cfs[i].push_back(cf);
      targets[i].push_back(1 - pred);
    }
  }

  CrossModelReport rep;
  rep.pair_matrix.assign(n, std::vector<double>(n, 1.0));
  std::vector<double> rates;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      double valid = 0.0;
      for (std::size_t k = 0; k < cfs[i].size(); ++k)
        if (predict_hard(fleet[j], cfs[i][k]) == targets[i][k]) valid += 1.0;
      const double rate =
          cfs[i].empty() ? 0.0 : valid / static_cast<double>(cfs[i].size());
      rep.pair_matrix[i][j] = rate;
      rates.push_back(rate);
    }
  }
  rep.rate = mean_std(rates);
  return rep;
}

// Fraction of the original model's CFs still valid on the shifted model.
inline double ds_validity(const JointModel& original, const JointModel& shifted,
                          const std::vector<std::vector<double>>& xs) {
  if (original.schema.width() != shifted.schema.width())
    throw std::invalid_argument("ds_validity: schema mismatch");
  std::size_t valid = 0, total = 0;
  for (const auto& x : xs) {
    const int pred = predict_hard(original, x);
    const auto cf = generate_cf(original, x);
    if (predict_hard(original, cf) != 1 - pred) continue;
    ++total;
    if (predict_hard(shifted, cf) == 1 - pred) ++valid;
  }
  return total ? static_cast<double>(valid) / static_cast<double>(total) : 0.0;
}

struct QualityMetrics {
  double proximity = 0.0;  // l1(x, x') / d
  double sparsity = 0.0;   // fraction of changed features (tolerance 1e-9)
  double ddm = 0.0;        // l1 distance to nearest training point / d
};

inline QualityMetrics quality_metrics(const std::vector<double>& x,
                                      const std::vector<double>& x_prime,
                                      const std::vector<std::vector<double>>& train_data) {
  check_dims(x_prime.size(), x.size(), "quality_metrics");
  const double d = static_cast<double>(x.size());
  QualityMetrics q;
  for (std::size_t i = 0; i < x.size(); ++i) {
    q.proximity += std::fabs(x[i] - x_prime[i]);
    if (std::fabs(x[i] - x_prime[i]) > 1e-9) q.sparsity += 1.0;
  }
  q.proximity /= d;
  q.sparsity /= d;

  if (train_data.empty())
    throw std::invalid_argument("quality_metrics: empty train data for ddm");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : train_data) {
    double dist = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) dist += std::fabs(x_prime[i] - p[i]);
    best = std::min(best, dist);
  }
  q.ddm = best / d;
  return q;
}

struct TimingStats {
  MeanStd per_cf_seconds;
  std::size_t n = 0;
};

inline TimingStats timing_benchmark(const JointModel& model,
                                    const std::vector<std::vector<double>>& xs,
                                    std::size_t n_repeats) {
  std::vector<double> times;
  times.reserve(n_repeats);
  volatile double sink = 0.0;
  for (std::size_t r = 0; r < n_repeats; ++r) {
    const auto& x = xs[r % xs.size()];
    const auto t0 = std::chrono::steady_clock::now();
    const auto cf = generate_cf(model, x);
    const auto t1 = std::chrono::steady_clock::now();
    sink = sink + cf[0];
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  TimingStats s;
  s.per_cf_seconds = mean_std(times);
  s.n = n_repeats;
  return s;
}

// ---------------------------------------------------------------------------
// Fleet construction + full report
// ---------------------------------------------------------------------------

inline std::vector<JointModel> train_fleet(const SplitDataset& ds, const ArchSpec& arch,
                                           const TrainConfig& base_cfg,
                                           const FleetSpec& fleet) {
  std::vector<JointModel> models;
  for (std::size_t i = 0; i < fleet.fleet_size; ++i) {
    TrainConfig cfg = base_cfg;
    cfg.seed = fleet.base_seed + i;
    if (fleet.variation == FleetVariation::LOO) {
      SplitDataset sub = make_loo_subset(ds, fleet.base_seed + 1000 + i,
                                         fleet.loo_drop_fraction);
      models.push_back(train(sub, arch, cfg).model);
    } else {
      models.push_back(train(ds, arch, cfg).model);
    }
  }
  return models;
}

struct EvalReport {
  std::string variation;
  CrossModelReport cross_model;   // RI / LOO
  MeanStd ds_rate;                // DS
  std::vector<double> ds_trial_rates;
  MeanStd proximity, sparsity, ddm;
};

inline nlohmann::ordered_json report_to_json(const EvalReport& r,
                                             const std::string& config_hash = "") {
  auto ms = [](const MeanStd& m) {
    nlohmann::ordered_json j;
    j["mean"] = m.mean;
    if (std::isnan(m.std)) j["std"] = nullptr;
    else j["std"] = m.std;
    return j;
  };
  nlohmann::ordered_json j;
  j["variation"] = r.variation;
  if (!config_hash.empty()) j["config_hash"] = config_hash;
  if (r.variation == "ds") {
    j["validity"] = ms(r.ds_rate);
    j["trial_rates"] = r.ds_trial_rates;
  } else {
    j["validity"] = ms(r.cross_model.rate);
    j["pair_matrix"] = r.cross_model.pair_matrix;
  }
  j["proximity"] = ms(r.proximity);
  j["sparsity"] = ms(r.sparsity);
  j["ddm"] = ms(r.ddm);
  return j;
}

// CSV in the row shape of the published tables: one metric per row,
// mean with std in parentheses.
inline std::string report_to_csv(const EvalReport& r) {
  auto fmt = [](const MeanStd& m) {
    char buf[64];
    if (std::isnan(m.std))
      std::snprintf(buf, sizeof(buf), "%.4f", m.mean);
    else
      std::snprintf(buf, sizeof(buf), "%.4f (%.4f)", m.mean, m.std);
    return std::string(buf);
  };
  std::string out = "metric,value\n";
  out += "validity-" + r.variation + "," +
         fmt(r.variation == "ds" ? r.ds_rate : r.cross_model.rate) + "\n";
  out += "proximity," + fmt(r.proximity) + "\n";
  out += "sparsity," + fmt(r.sparsity) + "\n";
  out += "ddm," + fmt(r.ddm) + "\n";
  return out;
}

}  // namespace veritracer
