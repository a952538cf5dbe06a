#pragma once

// Feature schema over the preprocessed [0,1]^d representation: an ordered
// partition of dimensions into continuous features and one-hot groups.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace veritracer {

struct FeatureDescriptor {
  std::string name;
  // 0 for continuous; >= 2 for a categorical group of that cardinality.
  std::size_t cardinality = 0;

  bool continuous() const { return cardinality == 0; }
  std::size_t width() const { return continuous() ? 1 : cardinality; }
};

struct FeatureSchema {
  std::vector<FeatureDescriptor> features;
  std::string label_name;
  // Per-feature min/max fitted on the training split (continuous only;
  // categorical entries hold 0/1 placeholders).
  std::vector<double> fitted_min;
  std::vector<double> fitted_max;

  std::size_t width() const {
    std::size_t w = 0;
    for (const auto& f : features) w += f.width();
    return w;
  }
};

// Clamps continuous dims to [0,1] and maps every one-hot group to
// argmax-as-1 (ties broken by lowest index).
inline std::vector<double> project_features(const std::vector<double>& raw,
                                            const FeatureSchema& schema) {
  if (raw.size() != schema.width())
    throw std::invalid_argument("project_features: vector length " +
                                std::to_string(raw.size()) +
                                " does not match schema width " +
                                std::to_string(schema.width()));
  std::vector<double> out(raw.size());
  std::size_t pos = 0;
  for (const auto& f : schema.features) {
    if (f.continuous()) {
      double v = raw[pos];
      out[pos] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
      ++pos;
    } else {
      std::size_t best = 0;
      for (std::size_t k = 1; k < f.cardinality; ++k)
        if (raw[pos + k] > raw[pos + best]) best = k;
      for (std::size_t k = 0; k < f.cardinality; ++k)
        out[pos + k] = (k == best) ? 1.0 : 0.0;
      pos += f.cardinality;
    }
  }
  return out;
}

inline FeatureSchema continuous_schema(std::size_t d, const std::string& label = "y") {
  FeatureSchema s;
  for (std::size_t i = 0; i < d; ++i)
    s.features.push_back({"x" + std::to_string(i), 0});
  s.label_name = label;
  s.fitted_min.assign(d, 0.0);
  s.fitted_max.assign(d, 1.0);
  return s;
}

}  // namespace veritracer
