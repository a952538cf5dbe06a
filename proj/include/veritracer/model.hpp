#pragma once

// Joint architecture: a binary classifier f (encoder trunk + sigmoid
// predictor head) and a counterfactual generator g (a head over the shared
// encoding that emits a delta added to the input, then projected back into
// the feature box).

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "veritracer/ops.hpp"
#include "veritracer/schema.hpp"

namespace veritracer {

struct MlpParams {
  struct Layer {
    std::size_t out = 0;
    std::size_t in = 0;
    std::vector<double> weights;  // row-major out x in
    std::vector<double> bias;     // out
  };
  std::vector<Layer> layers;

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
  }

  void validate() const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      if (l.weights.size() != l.out * l.in || l.bias.size() != l.out)
        throw std::invalid_argument("MlpParams: layer storage mismatch");
      if (i > 0 && l.in != layers[i - 1].out)
        throw std::invalid_argument("MlpParams: layer dims do not chain");
    }
  }

  // Flattening order: layer 0 weights row-major, layer 0 bias, layer 1
  // weights, ... Must round-trip exactly.
  std::vector<double> flatten() const {
    std::vector<double> flat;
    flat.reserve(param_count());
    for (const auto& l : layers) {
      flat.insert(flat.end(), l.weights.begin(), l.weights.end());
      flat.insert(flat.end(), l.bias.begin(), l.bias.end());
    }
    return flat;
  }

  void unflatten(const std::vector<double>& flat) {
    if (flat.size() != param_count())
      throw std::invalid_argument("MlpParams::unflatten: length mismatch");
    std::size_t pos = 0;
    for (auto& l : layers) {
      std::copy(flat.begin() + pos, flat.begin() + pos + l.weights.size(),
                l.weights.begin());
      pos += l.weights.size();
      std::copy(flat.begin() + pos, flat.begin() + pos + l.bias.size(),
                l.bias.begin());
      pos += l.bias.size();
    }
  }
};

// MLP forward with ReLU between layers and no activation after the last.
template <typename S>
std::vector<S> mlp_forward(const std::vector<std::vector<S>>& weights,
                           const std::vector<std::vector<S>>& biases,
                           const std::vector<std::pair<std::size_t, std::size_t>>& dims,
                           const std::vector<S>& x) {
  std::vector<S> h = x;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    h = add(matvec(weights[i], dims[i].first, dims[i].second, h), biases[i]);
    if (i + 1 < weights.size()) h = relu(h);
  }
  return h;
}

inline std::vector<double> mlp_forward(const MlpParams& p, const std::vector<double>& x,
                                       bool relu_after_last = false) {
  std::vector<double> h = x;
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    const auto& l = p.layers[i];
    h = add(matvec(l.weights, l.out, l.in, h), l.bias);
    if (i + 1 < p.layers.size() || relu_after_last) h = relu(h);
  }
  return h;
}

struct ArchSpec {
  std::size_t input_dim = 2;
  std::vector<std::size_t> encoder_hidden = {16, 16};
  std::vector<std::size_t> cf_hidden = {16};
};

struct JointModel {
  MlpParams encoder;         // ReLU after every encoder layer
  MlpParams predictor_head;  // linear layers ending in one unit, then sigmoid
  MlpParams cf_head;         // emits a delta of input dimension
  FeatureSchema schema;

  // An empty encoder is allowed (the predictor head sees the raw input).
  std::size_t input_dim() const {
    if (!encoder.layers.empty()) return encoder.layers.front().in;
    return predictor_head.layers.empty() ? 0 : predictor_head.layers.front().in;
  }

  // The classifier f is the encoder followed by the predictor head; bounds
  // and flattening operate on this concatenation.
  MlpParams classifier_params() const {
    MlpParams f;
    f.layers = encoder.layers;
    f.layers.insert(f.layers.end(), predictor_head.layers.begin(),
                    predictor_head.layers.end());
    return f;
  }

  void set_classifier_params(const MlpParams& f) {
    if (f.layers.size() != encoder.layers.size() + predictor_head.layers.size())
      throw std::invalid_argument("set_classifier_params: layer count mismatch");
    for (std::size_t i = 0; i < encoder.layers.size(); ++i)
      encoder.layers[i] = f.layers[i];
    for (std::size_t i = 0; i < predictor_head.layers.size(); ++i)
      predictor_head.layers[i] = f.layers[encoder.layers.size() + i];
  }
};

inline std::vector<double> encode(const JointModel& m, const std::vector<double>& x) {
  return mlp_forward(m.encoder, x, /*relu_after_last=*/true);
}

inline double predict_logit(const JointModel& m, const std::vector<double>& x) {
  if (x.size() != m.input_dim())
    throw std::invalid_argument("predict_logit: input dimension mismatch");
  return mlp_forward(m.predictor_head, encode(m, x))[0];
}

inline double predict_soft(const JointModel& m, const std::vector<double>& x) {
  return sigmoid(predict_logit(m, x));
}

// Hard label: 1 iff the soft score is >= 0.5.
inline int predict_hard(const JointModel& m, const std::vector<double>& x) {
  return predict_soft(m, x) >= 0.5 ? 1 : 0;
}

inline double logit_of(const MlpParams& f, const std::vector<double>& x) {
  if (f.layers.empty() || x.size() != f.layers.front().in)
    throw std::invalid_argument("logit_of: input dimension mismatch");
  return mlp_forward(f, x)[0];
}

// One forward pass: x' = project(x + cf_head(encode(x))).
inline std::vector<double> generate_cf(const JointModel& m, const std::vector<double>& x) {
  std::vector<double> delta = mlp_forward(m.cf_head, encode(m, x));
  return project_features(add(x, delta), m.schema);
}

inline std::vector<double> generate_cf_raw(const JointModel& m,
                                           const std::vector<double>& x) {
  return add(x, mlp_forward(m.cf_head, encode(m, x)));
}

// Kaiming-uniform style initialization, fully determined by the seed.
inline MlpParams init_mlp(const std::vector<std::size_t>& dims, std::mt19937_64& rng) {
  MlpParams p;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    MlpParams::Layer l;
    l.in = dims[i];
    l.out = dims[i + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(l.in));
    std::uniform_real_distribution<double> u(-bound, bound);
    l.weights.resize(l.out * l.in);
    l.bias.assign(l.out, 0.0);
    for (double& w : l.weights) w = u(rng);
    p.layers.push_back(std::move(l));
  }
  return p;
}

inline JointModel init_joint_model(const ArchSpec& arch, const FeatureSchema& schema,
                                   std::uint64_t seed) {
  if (schema.width() != arch.input_dim)
    throw std::invalid_argument("init_joint_model: schema width != input dim");
  std::mt19937_64 rng(seed);
  JointModel m;
  m.schema = schema;

  std::vector<std::size_t> enc_dims = {arch.input_dim};
  enc_dims.insert(enc_dims.end(), arch.encoder_hidden.begin(), arch.encoder_hidden.end());
  m.encoder = init_mlp(enc_dims, rng);

  const std::size_t enc_out = enc_dims.back();
  m.predictor_head = init_mlp({enc_out, 1}, rng);

  std::vector<std::size_t> cf_dims = {enc_out};
  cf_dims.insert(cf_dims.end(), arch.cf_hidden.begin(), arch.cf_hidden.end());
  cf_dims.push_back(arch.input_dim);
  m.cf_head = init_mlp(cf_dims, rng);
  // Zero final cf layer so the untrained generator is the identity map.
  auto& last = m.cf_head.layers.back();
  std::fill(last.weights.begin(), last.weights.end(), 0.0);
  return m;
}

}  // namespace veritracer
